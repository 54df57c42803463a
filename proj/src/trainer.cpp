#include "dmrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dmrl {

std::string_view to_string(RatioLevel r) { return r == RatioLevel::Sequence ? "sequence" : "token"; }

std::string_view to_string(FormatTarget f) {
  switch (f) {
    case FormatTarget::Auto: return "auto";
    case FormatTarget::Label: return "label";
    case FormatTarget::AnyPrefix: return "any";
  }
  return "auto";
}

RatioLevel parse_ratio_level(std::string_view s) {
  if (s == "sequence") return RatioLevel::Sequence;
  if (s == "token") return RatioLevel::Token;
  throw ConfigError("unknown ratio level '" + std::string(s) + "'");
}

FormatTarget parse_format_target(std::string_view s) {
  if (s == "auto") return FormatTarget::Auto;
  if (s == "label") return FormatTarget::Label;
  if (s == "any") return FormatTarget::AnyPrefix;
  throw ConfigError("unknown format target '" + std::string(s) + "'");
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.lr = 1e-6;
  c.batch_size = 256;
  c.max_len = 2048;
  return c;
}

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (n < 2) throw ConfigError("n must be >= 2");
  if (m < 0 || m > n) throw ConfigError("m must lie in [0, n]");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0, 1)");
  if (!(kl_beta >= 0.0)) throw ConfigError("kl_beta must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (inner_epochs < 1) throw ConfigError("inner_epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (max_len < 3) throw ConfigError("max_len must be >= 3");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
}

bool TrainConfig::uses_labels() const {
  switch (format_target) {
    case FormatTarget::Label: return true;
    case FormatTarget::AnyPrefix: return false;
    case FormatTarget::Auto: return m < n;
  }
  return true;
}

namespace {

[[noreturn]] void non_finite(const RolloutGroup& g, std::size_t i, const std::string& what, double v) {
  std::ostringstream os;
  os << "non-finite " << what << " (" << v << ") for item " << g.item.item.id << ", rollout " << i;
  throw NumericError(os.str());
}

}  // namespace

ObjectiveValue accumulate_grpo_objective(const SequencePolicy& policy, const RolloutGroup& group,
                                         std::span<const double> current, std::span<const double> old,
                                         std::span<const double> reference, double eps, double beta,
                                         RatioLevel ratio, double scale, std::span<double> grad,
                                         std::span<const double> old_log_probs) {
  const ResponseGrammar& g = policy.grammar();
  const std::size_t n = group.rollouts.size();
  if (n == 0) throw ConfigError("grpo objective: empty group");
  if (group.advantages.size() != n) throw ConfigError("grpo objective: advantages not computed");
  if (!old_log_probs.empty() && old_log_probs.size() != n)
    throw ConfigError("grpo objective: old log-prob count does not match the group");
  const std::size_t vocab = static_cast<std::size_t>(g.vocab_size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const QAItem& item = group.item.item;

  ObjectiveValue out;
  int clipped = 0, terms = 0;
  std::vector<double> cur_ls, ref_ls, old_tok, dl(vocab);
  std::vector<int> chosen;
  std::vector<double> step_kl;

  for (std::size_t i = 0; i < n; ++i) {
    const Rollout& r = group.rollouts[i];
    const double adv = group.advantages[i];
    // Pass 1: current and reference distributions at every decision point.
    cur_ls.clear();
    ref_ls.clear();
    chosen.clear();
    step_kl.clear();
    old_tok.clear();
    double lp_cur = 0.0, kl = 0.0;
    std::vector<double> lg(vocab), lq(vocab), lo(vocab);
    for_each_decision(g, item, r, [&](const DecisionContext& ctx, int tok) {
      policy.logits(current, ctx, lg);
      log_softmax(lg);
      lp_cur += lg[static_cast<std::size_t>(tok)];
      policy.logits(reference, ctx, lq);
      log_softmax(lq);
      double k = 0.0;
      for (std::size_t v = 0; v < vocab; ++v)
        if (std::isfinite(lg[v])) k += std::exp(lg[v]) * (lg[v] - lq[v]);
      kl += k;
      step_kl.push_back(k);
      cur_ls.insert(cur_ls.end(), lg.begin(), lg.end());
      ref_ls.insert(ref_ls.end(), lq.begin(), lq.end());
      chosen.push_back(tok);
      if (ratio == RatioLevel::Token || old_log_probs.empty()) {
        policy.logits(old, ctx, lo);
        log_softmax(lo);
        old_tok.push_back(lo[static_cast<std::size_t>(tok)]);
      }
    });
    if (!std::isfinite(kl)) non_finite(group, i, "KL", kl);
    out.mean_kl += kl * inv_n;
    const std::size_t steps = chosen.size();

    // Surrogate coefficient on d log pi(token)/d theta, per step.
    std::vector<double> coef(steps, 0.0);
    if (ratio == RatioLevel::Sequence) {
      double lp_old = 0.0;
      if (old_log_probs.empty()) {
        for (double v : old_tok) lp_old += v;
      } else {
        lp_old = old_log_probs[i];
      }
      const double rho = std::exp(lp_cur - lp_old);
      if (!std::isfinite(rho)) non_finite(group, i, "ratio", rho);
      const double clipped_rho = std::clamp(rho, 1.0 - eps, 1.0 + eps);
      const double unclipped = rho * adv, clip_term = clipped_rho * adv;
      out.surrogate += std::min(unclipped, clip_term) * inv_n;
      ++terms;
      if (rho < 1.0 - eps || rho > 1.0 + eps) ++clipped;
      if (unclipped <= clip_term) std::fill(coef.begin(), coef.end(), rho * adv);
    } else if (steps > 0) {
      const double inv_len = 1.0 / static_cast<double>(steps);
      double term = 0.0;
      for (std::size_t t = 0; t < steps; ++t) {
        const double lp_t = cur_ls[t * vocab + static_cast<std::size_t>(chosen[t])];
        const double rho = std::exp(lp_t - old_tok[t]);
        if (!std::isfinite(rho)) non_finite(group, i, "token ratio", rho);
        const double clipped_rho = std::clamp(rho, 1.0 - eps, 1.0 + eps);
        term += std::min(rho * adv, clipped_rho * adv) * inv_len;
        ++terms;
        if (rho < 1.0 - eps || rho > 1.0 + eps) ++clipped;
        if (rho * adv <= clipped_rho * adv) coef[t] = rho * adv * inv_len;
      }
      out.surrogate += term * inv_n;
    }

    // Pass 2: backpropagate surrogate and KL through the current logits.
    if (grad.empty() || scale == 0.0) continue;
    std::size_t t = 0;
    for_each_decision(g, item, r, [&](const DecisionContext& ctx, int tok) {
      const double* lp = cur_ls.data() + t * vocab;
      const double* lr = ref_ls.data() + t * vocab;
      const double c = scale * inv_n * coef[t];
      const double kc = -scale * inv_n * beta;
      bool any = false;
      for (std::size_t v = 0; v < vocab; ++v) {
        if (!std::isfinite(lp[v])) {
          dl[v] = 0.0;
          continue;
        }
        const double p = std::exp(lp[v]);
        dl[v] = -c * p + kc * p * (lp[v] - lr[v] - step_kl[t]);
        any = any || dl[v] != 0.0;
      }
      dl[static_cast<std::size_t>(tok)] += c;
      if (any || c != 0.0) policy.accumulate_grad(current, ctx, dl, grad);
      ++t;
    });
  }
  out.value = out.surrogate - beta * out.mean_kl;
  out.clip_fraction = terms > 0 ? static_cast<double>(clipped) / terms : 0.0;
  if (!std::isfinite(out.value)) throw NumericError("non-finite objective for item " + item.id);
  return out;
}

ObjectiveResult grpo_objective(const SequencePolicy& policy, const RolloutGroup& group, const PolicySnapshot& current,
                               const PolicySnapshot& old, const PolicySnapshot& reference, double eps, double beta,
                               RatioLevel ratio) {
  if (current.size() != old.size() || current.size() != reference.size())
    throw ConfigError("grpo objective: snapshots differ in dimension");
  ObjectiveResult res;
  res.gradient.assign(current.size(), 0.0);
  res.value = accumulate_grpo_objective(policy, group, current.params(), old.params(), reference.params(), eps, beta,
                                        ratio, 1.0, res.gradient);
  return res;
}

TrainerState::TrainerState(const SequencePolicy& policy, TrainConfig cfg, const PolicySnapshot& base)
    : policy_(policy),
      cfg_(cfg),
      reference_(base.as(SnapshotRole::Reference, 0)),
      params_(base.params().begin(), base.params().end()),
      adam_(base.size(), AdamConfig{cfg.lr}) {
  cfg_.validate();
  if (base.size() != policy.num_params()) throw ConfigError("base snapshot does not match the policy");
}

PolicySnapshot TrainerState::current() const { return PolicySnapshot(params_, SnapshotRole::Current, step_); }

StepMetrics TrainerState::train_step(const std::vector<LabeledItem>& batch) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const PolicySnapshot old(params_, SnapshotRole::Old, step_);
  const GenConfig gen{cfg_.temperature, cfg_.max_len, PromptStyle::DualMode, false};
  const bool labels = cfg_.uses_labels();

  StepMetrics mt;
  mt.step = step_;
  last_groups_.clear();
  last_groups_.reserve(batch.size());
  double reward_sum = 0.0, acc_sum = 0.0, len_fast = 0.0, len_slow = 0.0;
  int rollouts = 0, free_total = 0, free_fast = 0, n_fast = 0, n_slow = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    RolloutGroup grp = sample_group(policy_, old, batch[b], cfg_.n, cfg_.m, gen,
                                    derive_seed(cfg_.seed, 0x57E9u, step_, b));
    score_group(grp, labels ? std::optional<Mode>(batch[b].mode) : std::nullopt, cfg_.normalize_advantages);
    for (int i = 0; i < grp.n(); ++i) {
      const Rollout& r = grp.rollouts[static_cast<std::size_t>(i)];
      reward_sum += grp.rewards[static_cast<std::size_t>(i)].total;
      acc_sum += grp.rewards[static_cast<std::size_t>(i)].accuracy;
      ++rollouts;
      if (grp.is_free(i)) {
        ++free_total;
        if (r.prefix == Prefix::Fast) ++free_fast;
      }
      if (r.prefix == Prefix::Fast) {
        ++n_fast;
        len_fast += r.total_length;
      } else if (r.prefix == Prefix::Slow) {
        ++n_slow;
        len_slow += r.total_length;
      }
    }
    last_groups_.push_back(std::move(grp));
  }
  mt.mean_reward = reward_sum / rollouts;
  mt.mean_accuracy = acc_sum / rollouts;
  if (free_total > 0) mt.fast_ratio_free = static_cast<double>(free_fast) / free_total;
  if (n_fast > 0) mt.mean_len_fast = len_fast / n_fast;
  if (n_slow > 0) mt.mean_len_slow = len_slow / n_slow;

  // Sampling ran at the training temperature; the ratio needs log pi_old at T = 1.
  const bool stored_old = cfg_.temperature == 1.0;
  std::vector<double> grad(params_.size());
  const double scale = 1.0 / static_cast<double>(batch.size());
  double clip_sum = 0.0;
  for (int epoch = 0; epoch < cfg_.inner_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double objective = 0.0, kl = 0.0, clip = 0.0;
    for (const auto& grp : last_groups_) {
      std::vector<double> old_lp;
      if (stored_old)
        for (const auto& r : grp.rollouts) old_lp.push_back(r.log_prob);
      const ObjectiveValue v = accumulate_grpo_objective(policy_, grp, params_, old.params(), reference_.params(),
                                                         cfg_.clip_eps, cfg_.kl_beta, cfg_.ratio, scale, grad, old_lp);
      objective += v.value * scale;
      kl += v.mean_kl * scale;
      clip += v.clip_fraction * scale;
    }
    if (epoch == 0) {
      mt.objective = objective;
      mt.mean_kl = kl;
    }
    clip_sum += clip;
    for (double gval : grad)
      if (!std::isfinite(gval)) throw NumericError("non-finite gradient at step " + std::to_string(step_));
    adam_.ascend(params_, grad);
  }
  mt.clip_fraction = clip_sum / cfg_.inner_epochs;
  for (double p : params_)
    if (!std::isfinite(p)) throw NumericError("non-finite parameters after step " + std::to_string(step_));
  ++step_;
  return mt;
}

std::vector<std::vector<LabeledItem>> make_batches(const std::vector<LabeledItem>& labeled, int batch_size,
                                                   int n_batches, std::uint64_t seed) {
  if (labeled.empty()) throw ConfigError("make_batches: no labeled items");
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  std::vector<std::vector<LabeledItem>> batches;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  int pass = 0;
  auto refill = [&] {
    std::vector<std::size_t> fast, slow;
    for (std::size_t i = 0; i < labeled.size(); ++i) (labeled[i].mode == Mode::Fast ? fast : slow).push_back(i);
    Rng rng(derive_seed(seed, 0xBA7Cu, pass++));
    for (auto* v : {&fast, &slow})
      for (std::size_t i = v->size(); i > 1; --i) std::swap((*v)[i - 1], (*v)[uniform_index(rng, i)]);
    // Interleave so every prefix of the order keeps the overall fast share.
    order.clear();
    std::size_t f = 0, s = 0;
    const double share = static_cast<double>(fast.size()) / static_cast<double>(labeled.size());
    while (f < fast.size() || s < slow.size()) {
      const double want_fast = share * static_cast<double>(f + s + 1);
      if (s >= slow.size() || (f < fast.size() && static_cast<double>(f) < want_fast)) {
        order.push_back(fast[f++]);
      } else {
        order.push_back(slow[s++]);
      }
    }
    cursor = 0;
  };
  refill();
  for (int b = 0; b < n_batches; ++b) {
    std::vector<LabeledItem> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
      if (cursor == order.size()) refill();
      batch.push_back(labeled[order[cursor++]]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

TrainResult train(const SequencePolicy& policy, const TrainConfig& cfg, const std::vector<LabeledItem>& labeled,
                  const PolicySnapshot& base, const StepCallback& on_step) {
  cfg.validate();
  if (labeled.empty()) throw ConfigError("train: no labeled items");
  TrainerState state(policy, cfg, base);
  TrainResult res{base.as(SnapshotRole::Current, 0), {}};
  if (cfg.max_steps == 0) return res;
  const auto batches = make_batches(labeled, cfg.batch_size, cfg.max_steps, derive_seed(cfg.seed, 0xBA7Eu));
  for (const auto& batch : batches) {
    res.log.push_back(state.train_step(batch));
    if (on_step) on_step(state, res.log.back());
  }
  res.final_policy = state.current();
  return res;
}

}  // namespace dmrl
