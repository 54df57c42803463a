#include "dmrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmrl {

GatedLinearPolicy::GatedLinearPolicy(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.feature_dim < 1 || spec_.question_vocab < 1 || spec_.position_buckets < 1)
    throw ConfigError("model dimensions must be positive");
  vocab_ = static_cast<std::size_t>(spec_.grammar.vocab_size());
  slots_ = static_cast<std::size_t>(spec_.grammar.max_successors());
  input_dim_ = static_cast<std::size_t>(spec_.feature_dim + spec_.question_vocab + 2);
  constexpr std::size_t modes = 3;  // Fast, Slow, None
  u_off_ = modes * (vocab_ + 1) * slots_ * input_dim_;
  p_off_ = u_off_ + (vocab_ + 1) * vocab_;
  b_off_ = p_off_ + static_cast<std::size_t>(spec_.position_buckets) * vocab_;
}

std::size_t GatedLinearPolicy::w_index(Prefix mode, int prev, int next, std::size_t j) const {
  const int slot = spec_.grammar.successor_slot(prev, next);
  if (slot < 0 || j >= input_dim_) throw ConfigError("w_index: transition not in the response grammar");
  return w_row(mode, prev) + static_cast<std::size_t>(slot) * input_dim_ + j;
}

void GatedLinearPolicy::check_context(const DecisionContext& ctx) const {
  const auto& g = spec_.grammar;
  if (static_cast<int>(ctx.item.features.size()) != spec_.feature_dim)
    throw ConfigError("item feature dimension " + std::to_string(ctx.item.features.size()) +
                      " does not match the model (" + std::to_string(spec_.feature_dim) + ")");
  if ((ctx.prev != kBos && !g.in_vocab(ctx.prev)) || (ctx.prev2 != kBos && !g.in_vocab(ctx.prev2)))
    throw ConfigError("token outside the response alphabet");
  if (ctx.prev == g.eos()) throw ConfigError("no decision follows EOS");
}

void GatedLinearPolicy::encode(const DecisionContext& ctx, std::span<double> z) const {
  std::fill(z.begin(), z.end(), 0.0);
  const std::size_t fd = static_cast<std::size_t>(spec_.feature_dim);
  std::copy(ctx.item.features.begin(), ctx.item.features.end(), z.begin());
  for (int q : ctx.item.question_tokens) {
    if (q < 0 || q >= spec_.question_vocab) throw ConfigError("question token outside the question alphabet");
    z[fd + static_cast<std::size_t>(q)] += 1.0;
  }
  const std::size_t tail = fd + static_cast<std::size_t>(spec_.question_vocab);
  z[tail] = ctx.prompt == PromptStyle::DualMode ? 1.0 : 0.0;
  z[tail + 1] = 1.0;
}

namespace {

// Small fixed buffer for the prompt encoding; falls back to the heap for wide inputs.
struct EncodingBuffer {
  double stack[256];
  std::vector<double> heap;
  std::span<double> get(std::size_t n) {
    if (n <= 256) return {stack, n};
    heap.resize(n);
    return heap;
  }
};

}  // namespace

void GatedLinearPolicy::logits(std::span<const double> params, const DecisionContext& ctx,
                               std::span<double> out) const {
  check_context(ctx);
  EncodingBuffer buf;
  const auto z = buf.get(input_dim_);
  encode(ctx, z);
  const double* w = params.data() + w_row(ctx.mode, ctx.prev);
  const double* u = params.data() + u_index(ctx.prev2, 0);
  const double* p = params.data() + p_index(ctx.position, 0);
  const double* b = params.data() + b_off_;
  std::fill(out.begin(), out.end(), -std::numeric_limits<double>::infinity());
  spec_.grammar.for_each_successor(ctx.prev, [&](int tok, int slot) {
    const auto v = static_cast<std::size_t>(tok);
    const double* ws = w + static_cast<std::size_t>(slot) * input_dim_;
    double acc = u[v] + p[v] + b[v];
    for (std::size_t j = 0; j < input_dim_; ++j) acc += ws[j] * z[j];
    out[v] = acc;
  });
}

void GatedLinearPolicy::accumulate_grad(std::span<const double>, const DecisionContext& ctx,
                                        std::span<const double> dlogits, std::span<double> grad) const {
  check_context(ctx);
  EncodingBuffer buf;
  const auto z = buf.get(input_dim_);
  encode(ctx, z);
  double* w = grad.data() + w_row(ctx.mode, ctx.prev);
  double* u = grad.data() + u_index(ctx.prev2, 0);
  double* p = grad.data() + p_index(ctx.position, 0);
  double* b = grad.data() + b_off_;
  spec_.grammar.for_each_successor(ctx.prev, [&](int tok, int slot) {
    const auto v = static_cast<std::size_t>(tok);
    const double d = dlogits[v];
    if (d == 0.0) return;
    double* ws = w + static_cast<std::size_t>(slot) * input_dim_;
    for (std::size_t j = 0; j < input_dim_; ++j) ws[j] += d * z[j];
    u[v] += d;
    p[v] += d;
    b[v] += d;
  });
}

std::string_view to_string(SnapshotRole r) {
  switch (r) {
    case SnapshotRole::Current: return "current";
    case SnapshotRole::Old: return "old";
    case SnapshotRole::Reference: return "reference";
  }
  return "current";
}

SnapshotRole parse_snapshot_role(std::string_view s) {
  if (s == "current") return SnapshotRole::Current;
  if (s == "old") return SnapshotRole::Old;
  if (s == "reference") return SnapshotRole::Reference;
  throw FormatError("unknown snapshot role '" + std::string(s) + "'");
}

PolicySnapshot::PolicySnapshot(std::vector<double> params, SnapshotRole role, std::int64_t version)
    : params_(std::make_shared<const std::vector<double>>(std::move(params))), role_(role), version_(version) {}

PolicySnapshot PolicySnapshot::as(SnapshotRole role, std::int64_t version) const {
  PolicySnapshot s = *this;
  s.role_ = role;
  s.version_ = version;
  return s;
}

PolicySnapshot zero_snapshot(const SequencePolicy& policy) {
  return PolicySnapshot(std::vector<double>(policy.num_params(), 0.0), SnapshotRole::Reference, 0);
}

void log_softmax(std::span<double> x, double temperature) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double& v : x) {
    v /= temperature;
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (double& v : x) v -= lse;
}

namespace {

void check_sizes(const SequencePolicy& policy, std::span<const double> params) {
  if (params.size() != policy.num_params())
    throw ConfigError("parameter vector has " + std::to_string(params.size()) + " entries, policy expects " +
                      std::to_string(policy.num_params()));
}

void check_tokens(const ResponseGrammar& g, const Rollout& r) {
  for (int t : r.tokens)
    if (!g.in_vocab(t)) throw ConfigError("rollout token " + std::to_string(t) + " outside the response alphabet");
  if (r.forced && (r.tokens.empty() || !g.is_prefix(r.tokens.front())))
    throw ConfigError("forced rollout does not start with a prefix token");
  for (std::size_t i = 0; i < r.tokens.size(); ++i)
    if (!g.can_follow(i == 0 ? kBos : r.tokens[i - 1], r.tokens[i]))
      throw ConfigError("rollout token " + std::to_string(r.tokens[i]) + " at index " + std::to_string(i) +
                        " is not allowed by the response grammar");
}

}  // namespace

std::vector<Rollout> sample_rollouts(const SequencePolicy& policy, const PolicySnapshot& snapshot,
                                     const QAItem& item, int k, std::optional<Mode> forced_prefix,
                                     const GenConfig& gen, std::uint64_t seed) {
  const ResponseGrammar& g = policy.grammar();
  if (k < 1) throw ConfigError("sample_rollouts: k must be >= 1");
  if (!(gen.temperature > 0.0)) throw ConfigError("sample_rollouts: temperature must be > 0");
  if (gen.max_len < 3) throw ConfigError("sample_rollouts: max_len must be >= 3");
  if (forced_prefix && !g.has_prefixes()) throw ConfigError("forced prefix requested but the grammar has no prefixes");
  check_sizes(policy, snapshot.params());

  const std::size_t vocab = static_cast<std::size_t>(g.vocab_size());
  std::vector<double> lg(vocab);
  std::vector<Rollout> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) {
    Rng rng(derive_seed(seed, r));
    std::vector<int> toks;
    toks.reserve(static_cast<std::size_t>(gen.max_len));
    if (forced_prefix) toks.push_back(g.prefix_token(*forced_prefix));
    double lp = 0.0;
    while (static_cast<int>(toks.size()) < gen.max_len) {
      const std::size_t i = toks.size();
      const DecisionContext ctx{item, gen.prompt, i >= 1 ? g.prefix_of(toks[0]) : Prefix::None,
                                i >= 1 ? toks[i - 1] : kBos, i >= 2 ? toks[i - 2] : kBos, static_cast<int>(i)};
      policy.logits(snapshot.params(), ctx, lg);
      log_softmax(lg, gen.temperature);
      std::size_t chosen = 0;
      if (gen.greedy) {
        chosen = static_cast<std::size_t>(std::max_element(lg.begin(), lg.end()) - lg.begin());
      } else {
        const double u = uniform01(rng);
        double c = 0.0;
        chosen = vocab - 1;
        for (std::size_t v = 0; v < vocab; ++v) {
          c += std::exp(lg[v]);
          if (u < c) {
            chosen = v;
            break;
          }
        }
      }
      lp += lg[chosen];
      toks.push_back(static_cast<int>(chosen));
      if (static_cast<int>(chosen) == g.eos()) break;
    }
    out.push_back(make_rollout(g, std::move(toks), forced_prefix.has_value(), gen.prompt, lp));
  }
  return out;
}

double log_prob(const SequencePolicy& policy, std::span<const double> params, const QAItem& item,
                const Rollout& rollout, double temperature) {
  const ResponseGrammar& g = policy.grammar();
  check_sizes(policy, params);
  check_tokens(g, rollout);
  std::vector<double> lg(static_cast<std::size_t>(g.vocab_size()));
  double total = 0.0;
  for_each_decision(g, item, rollout, [&](const DecisionContext& ctx, int chosen) {
    policy.logits(params, ctx, lg);
    log_softmax(lg, temperature);
    total += lg[static_cast<std::size_t>(chosen)];
  });
  return total;
}

double accumulate_grad_log_prob(const SequencePolicy& policy, std::span<const double> params, const QAItem& item,
                                const Rollout& rollout, double scale, std::span<double> grad) {
  const ResponseGrammar& g = policy.grammar();
  check_sizes(policy, params);
  check_sizes(policy, grad);
  check_tokens(g, rollout);
  std::vector<double> lg(static_cast<std::size_t>(g.vocab_size()));
  double total = 0.0;
  for_each_decision(g, item, rollout, [&](const DecisionContext& ctx, int chosen) {
    policy.logits(params, ctx, lg);
    log_softmax(lg);
    total += lg[static_cast<std::size_t>(chosen)];
    // d log p(chosen) / d logits = onehot(chosen) - p
    for (double& v : lg) v = -scale * std::exp(v);
    lg[static_cast<std::size_t>(chosen)] += scale;
    policy.accumulate_grad(params, ctx, lg, grad);
  });
  return total;
}

std::vector<double> grad_log_prob(const SequencePolicy& policy, const PolicySnapshot& snapshot, const QAItem& item,
                                  const Rollout& rollout) {
  std::vector<double> grad(policy.num_params(), 0.0);
  accumulate_grad_log_prob(policy, snapshot.params(), item, rollout, 1.0, grad);
  return grad;
}

namespace {

template <bool WithGrad>
double kl_impl(const SequencePolicy& policy, std::span<const double> current, std::span<const double> reference,
               const QAItem& item, const Rollout& rollout, double scale, std::span<double> grad) {
  const ResponseGrammar& g = policy.grammar();
  check_sizes(policy, current);
  check_sizes(policy, reference);
  check_tokens(g, rollout);
  const std::size_t vocab = static_cast<std::size_t>(g.vocab_size());
  std::vector<double> lp(vocab), lq(vocab);
  double total = 0.0;
  for_each_decision(g, item, rollout, [&](const DecisionContext& ctx, int) {
    policy.logits(current, ctx, lp);
    policy.logits(reference, ctx, lq);
    log_softmax(lp);
    log_softmax(lq);
    double kl = 0.0;
    for (std::size_t v = 0; v < vocab; ++v)
      if (std::isfinite(lp[v])) kl += std::exp(lp[v]) * (lp[v] - lq[v]);
    total += kl;
    if constexpr (WithGrad) {
      // d KL / d logit_j = p_j (log p_j - log q_j - KL)
      for (std::size_t v = 0; v < vocab; ++v)
        lq[v] = std::isfinite(lp[v]) ? scale * std::exp(lp[v]) * (lp[v] - lq[v] - kl) : 0.0;
      policy.accumulate_grad(current, ctx, lq, grad);
    }
  });
  return total;
}

}  // namespace

double kl_to_reference(const SequencePolicy& policy, std::span<const double> current,
                       std::span<const double> reference, const QAItem& item, const Rollout& rollout) {
  return kl_impl<false>(policy, current, reference, item, rollout, 0.0, {});
}

double accumulate_grad_kl(const SequencePolicy& policy, std::span<const double> current,
                          std::span<const double> reference, const QAItem& item, const Rollout& rollout,
                          double scale, std::span<double> grad) {
  check_sizes(policy, grad);
  return kl_impl<true>(policy, current, reference, item, rollout, scale, grad);
}

}  // namespace dmrl
