#include "doctest.h"

#include <cmath>
#include <map>

#include "dmrl/policy.hpp"
#include "helpers.hpp"

using namespace dmrl;
using namespace testing;

namespace {

Rollout sample_one(const GatedLinearPolicy& pol, const PolicySnapshot& s, const QAItem& it, std::optional<Mode> forced,
                   PromptStyle prompt, std::uint64_t seed, int max_len = 64) {
  GenConfig gen;
  gen.prompt = prompt;
  gen.max_len = max_len;
  return sample_rollouts(pol, s, it, 1, forced, gen, seed).front();
}

// Central differences of f at every coordinate of p.
template <typename F>
std::vector<double> finite_diff(std::vector<double> p, F&& f, double h = 1e-5) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(p);
    p[i] = keep - h;
    const double down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Relative error on components that matter, absolute elsewhere.
void check_gradient(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    if (std::abs(a) > 1e-4) {
      INFO("component " << i << " analytic " << a << " numeric " << n);
      CHECK(std::abs(a - n) / std::abs(a) <= 1e-4);
    } else {
      INFO("component " << i << " analytic " << a << " numeric " << n);
      CHECK(std::abs(a - n) <= 1e-8);
    }
  }
}

}  // namespace

TEST_CASE("logits follow the documented formula and mask ungrammatical tokens") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  Rng rng(101);
  const auto params = random_params(rng, pol.num_params(), 1.0);
  std::vector<double> out(static_cast<std::size_t>(g.vocab_size()));
  int checked = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto item = random_item(rng, spec);
    for (int prev = -1; prev < g.eos(); ++prev) {
      for (Prefix mode : {Prefix::Fast, Prefix::Slow, Prefix::None}) {
        const int prev2 = static_cast<int>(uniform_index(rng, g.vocab_size() + 1)) - 1;
        const DecisionContext ctx{item, (rep & 1) ? PromptStyle::Plain : PromptStyle::DualMode, mode, prev, prev2,
                                  static_cast<int>(uniform_index(rng, 10))};
        pol.logits(params, ctx, out);
        const auto ref = formula_logits(pol, params, ctx);
        for (int v = 0; v < g.vocab_size(); ++v) {
          if (!g.can_follow(prev, v)) {
            CHECK(std::isinf(out[static_cast<std::size_t>(v)]));
            CHECK(out[static_cast<std::size_t>(v)] < 0);
          } else {
            CHECK(out[static_cast<std::size_t>(v)] == doctest::Approx(ref[static_cast<std::size_t>(v)]).epsilon(1e-12));
            ++checked;
          }
        }
      }
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("zero parameters give uniform choices among grammatical successors") {
  // 3 answer values, no prefixes: start, body(0) and body(1) each have 4 successors.
  ModelSpec spec = tiny_spec();
  spec.grammar = ResponseGrammar(3, 3, false);
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  QAItem it;
  it.features = {0.1, 0.2, 0.3};
  it.question_tokens = {0};
  it.answer = g.answer_token(0);
  const auto zero = zero_snapshot(pol);
  const auto r = make_rollout(g, {g.body_token(0, 1), g.body_token(1, 2), g.body_token(2, 0)}, false,
                              PromptStyle::DualMode, 0.0);
  CHECK(log_prob(pol, zero, it, r) == doctest::Approx(3 * std::log(0.25)).epsilon(1e-14));

  // a 2-way answer step: ln(1/2) for the answer, 0 for the forced EOS
  const ResponseGrammar g2(2, 1, false);
  ModelSpec s2 = tiny_spec();
  s2.grammar = g2;
  GatedLinearPolicy p2(s2);
  it.answer = g2.answer_token(0);
  const auto r2 = make_rollout(g2, {g2.answer_mark(), g2.answer_token(1), g2.eos()}, false, PromptStyle::DualMode, 0.0);
  CHECK(log_prob(p2, zero_snapshot(p2), it, r2) == doctest::Approx(std::log(1.0 / 3) + std::log(0.5)).epsilon(1e-14));
  GenConfig gen;
  for (const auto& s : sample_rollouts(p2, zero_snapshot(p2), it, 16, std::nullopt, gen, 5)) {
    // every sampled path under a uniform policy: each step contributes -ln(#successors)
    double expect = 0.0;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      int cnt = 0;
      g2.for_each_successor(i == 0 ? kBos : s.tokens[i - 1], [&](int, int) { ++cnt; });
      expect -= std::log(cnt);
    }
    CHECK(s.log_prob == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("stored log_prob equals re-evaluation under the sampling snapshot") {
  ModelSpec spec;  // full-size model
  GatedLinearPolicy pol(spec);
  Rng rng(7);
  const PolicySnapshot snap(random_params(rng, pol.num_params(), 0.3), SnapshotRole::Current, 1);
  for (int i = 0; i < 40; ++i) {
    const auto it = random_item(rng, spec);
    std::optional<Mode> forced;
    if (i % 3 == 1) forced = Mode::Fast;
    if (i % 3 == 2) forced = Mode::Slow;
    for (double temp : {1.0, 0.7}) {
      GenConfig gen;
      gen.temperature = temp;
      gen.prompt = (i & 1) ? PromptStyle::Plain : PromptStyle::DualMode;
      const auto r = sample_rollouts(pol, snap, it, 1, forced, gen, 1000 + i).front();
      CHECK(r.log_prob == doctest::Approx(log_prob(pol, snap, it, r, temp)).epsilon(1e-12));
      CHECK(r.total_length <= gen.max_len);
    }
  }
}

TEST_CASE("log_prob matches a brute-force chain of per-step softmax products") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  Rng rng(2024);
  for (int inst = 0; inst < 150; ++inst) {
    const PolicySnapshot snap(random_params(rng, pol.num_params(), 1.5), SnapshotRole::Current, 0);
    const auto it = random_item(rng, spec);
    std::optional<Mode> forced;
    if (inst % 3 == 0) forced = Mode::Slow;
    const auto r = sample_one(pol, snap, it, forced, (inst & 1) ? PromptStyle::Plain : PromptStyle::DualMode, inst);
    const double oracle = chain_prob(pol, snap.params(), it, r);
    CHECK(std::exp(log_prob(pol, snap, it, r)) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("probabilities over every complete response sum to one") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  Rng rng(5);
  const PolicySnapshot snap(random_params(rng, pol.num_params(), 1.0), SnapshotRole::Current, 0);
  const auto it = random_item(rng, spec);
  for (int max_len : {64, 4}) {
    for (std::optional<Mode> forced : {std::optional<Mode>{}, std::optional<Mode>{Mode::Fast}}) {
      std::vector<std::vector<int>> all;
      std::vector<int> cur;
      if (forced) cur.push_back(g.prefix_token(*forced));
      enumerate_responses(g, max_len, cur, all);
      double total = 0.0;
      for (const auto& toks : all) {
        const auto r = make_rollout(g, toks, forced.has_value(), PromptStyle::DualMode, 0.0);
        total += std::exp(log_prob(pol, snap, it, r));
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("sampling frequencies agree with exact probabilities within 3 standard errors") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  Rng rng(77);
  const PolicySnapshot snap(random_params(rng, pol.num_params(), 0.8), SnapshotRole::Current, 0);
  const auto it = random_item(rng, spec);
  std::vector<std::vector<int>> all;
  std::vector<int> cur;
  enumerate_responses(g, 64, cur, all);
  // exact distributions of the first token and of the total length
  std::map<int, double> p_first, p_len;
  for (const auto& toks : all) {
    const double p = std::exp(log_prob(pol, snap, it, make_rollout(g, toks, false, PromptStyle::DualMode, 0.0)));
    p_first[toks.front()] += p;
    p_len[static_cast<int>(toks.size())] += p;
  }
  const int n = 20000;
  GenConfig gen;
  const auto samples = sample_rollouts(pol, snap, it, n, std::nullopt, gen, 99);
  std::map<int, int> c_first, c_len;
  for (const auto& r : samples) {
    c_first[r.tokens.front()]++;
    c_len[r.total_length]++;
  }
  auto check = [&](const std::map<int, double>& p, std::map<int, int>& c) {
    for (const auto& [k, pk] : p) {
      const double f = static_cast<double>(c[k]) / n;
      const double se = std::sqrt(pk * (1 - pk) / n);
      INFO("event " << k << " p " << pk << " freq " << f);
      CHECK(std::abs(f - pk) <= 3 * se + 1e-12);
    }
  };
  check(p_first, c_first);
  check(p_len, c_len);
}

TEST_CASE("forced prefix is context, not a policy choice") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  Rng rng(31);
  for (int inst = 0; inst < 30; ++inst) {
    const PolicySnapshot snap(random_params(rng, pol.num_params(), 1.0), SnapshotRole::Current, 0);
    const auto it = random_item(rng, spec);
    const Mode mode = inst & 1 ? Mode::Fast : Mode::Slow;
    const auto forced = sample_one(pol, snap, it, mode, PromptStyle::DualMode, inst);
    CHECK(forced.forced);
    CHECK(forced.tokens.front() == g.prefix_token(mode));
    CHECK(forced.prefix == to_prefix(mode));
    Rollout as_free = forced;
    as_free.forced = false;
    const auto start = formula_logits(pol, snap.params(), context_at(g, it, PromptStyle::DualMode, forced.tokens, 0));
    const double lp_prefix = std::log(naive_prob(start, forced.tokens.front()));
    CHECK(log_prob(pol, snap, it, forced) == doctest::Approx(log_prob(pol, snap, it, as_free) - lp_prefix).epsilon(1e-10));
    CHECK(forced.log_prob == doctest::Approx(log_prob(pol, snap, it, forced)).epsilon(1e-12));
    // the start-of-response row never receives gradient from a forced rollout
    const auto grad = grad_log_prob(pol, snap, it, forced);
    for (std::size_t j = 0; j < pol.input_dim(); ++j)
      for (Prefix m : {Prefix::Fast, Prefix::Slow, Prefix::None})
        CHECK(grad[pol.w_index(m, kBos, g.prefix_token(mode), j)] == 0.0);
  }
}

TEST_CASE("grad_log_prob matches central finite differences") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  Rng rng(4242);
  int instances = 0;
  for (int inst = 0; inst < 110; ++inst) {
    const PolicySnapshot snap(random_params(rng, pol.num_params(), 0.7), SnapshotRole::Current, 0);
    const auto it = random_item(rng, spec);
    std::optional<Mode> forced;
    if (inst % 4 == 3) forced = Mode::Fast;
    const auto r = sample_one(pol, snap, it, forced, (inst & 1) ? PromptStyle::Plain : PromptStyle::DualMode, inst);
    const auto analytic = grad_log_prob(pol, snap, it, r);
    const auto numeric = finite_diff(std::vector<double>(snap.params().begin(), snap.params().end()),
                                     [&](const std::vector<double>& p) { return log_prob(pol, p, it, r); });
    check_gradient(analytic, numeric);
    ++instances;
  }
  CHECK(instances >= 100);
}

TEST_CASE("parameters off the rollout path get zero gradient") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  Rng rng(8);
  const PolicySnapshot snap(random_params(rng, pol.num_params(), 1.0), SnapshotRole::Current, 0);
  const auto it = random_item(rng, spec);
  const auto r = make_rollout(g, {g.prefix_token(Mode::Fast), g.body_token(0, 1), g.answer_mark(), g.answer_token(0),
                                  g.eos()},
                              false, PromptStyle::DualMode, 0.0);
  const auto grad = grad_log_prob(pol, snap, it, r);
  // Slow-mode rows are never visited by a Fast response
  for (std::size_t j = 0; j < pol.input_dim(); ++j) CHECK(grad[pol.w_index(Prefix::Slow, g.body_token(0, 1), g.answer_mark(), j)] == 0.0);
  // the embedding row of a token that never precedes a decision
  for (int v = 0; v < g.vocab_size(); ++v) CHECK(grad[pol.u_index(g.body_token(2, 0), v)] == 0.0);
}

TEST_CASE("gradient vanishes as the policy saturates on its own path") {
  ModelSpec spec = tiny_spec();
  spec.grammar = ResponseGrammar(2, 1, false);
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  QAItem it;
  it.features = {0, 0, 0};
  it.question_tokens = {0};
  it.answer = g.answer_token(0);
  const auto r = make_rollout(g, {g.answer_mark(), g.answer_token(0), g.eos()}, false, PromptStyle::DualMode, 0.0);
  double prev_norm = 1e9;
  for (double s : {2.0, 5.0, 10.0, 20.0, 30.0}) {
    std::vector<double> p(pol.num_params(), 0.0);
    p[pol.b_index(g.answer_mark())] = s;
    p[pol.b_index(g.answer_token(0))] = s;
    const auto grad = grad_log_prob(pol, PolicySnapshot(p, SnapshotRole::Current, 0), it, r);
    double norm = 0.0;
    for (double v : grad) norm += v * v;
    norm = std::sqrt(norm);
    CHECK(norm < prev_norm);
    prev_norm = norm;
  }
  CHECK(prev_norm < 1e-11);
}

TEST_CASE("KL to reference") {
  ModelSpec spec = tiny_spec();
  spec.grammar = ResponseGrammar(2, 1, false);
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  QAItem it;
  it.features = {0.3, -0.2, 0.5};
  it.question_tokens = {1};
  it.answer = g.answer_token(0);
  const auto r = make_rollout(g, {g.answer_mark(), g.answer_token(0), g.eos()}, false, PromptStyle::DualMode, 0.0);

  SUBCASE("identical distributions") {
    Rng rng(1);
    const auto p = random_params(rng, pol.num_params(), 1.0);
    CHECK(kl_to_reference(pol, p, p, it, r) == 0.0);
  }
  SUBCASE("closed form on a binary step") {
    std::vector<double> cur(pol.num_params(), 0.0), ref(pol.num_params(), 0.0);
    ref[pol.b_index(g.answer_token(0))] = std::log(0.9);
    ref[pol.b_index(g.answer_token(1))] = std::log(0.1);
    const double expect = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    CHECK(kl_to_reference(pol, cur, ref, it, r) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("KL matches exhaustive summation and its gradient matches finite differences") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  Rng rng(909);
  for (int inst = 0; inst < 100; ++inst) {
    const auto cur = random_params(rng, pol.num_params(), 0.8);
    const auto ref = random_params(rng, pol.num_params(), 0.8);
    const auto it = random_item(rng, spec);
    std::optional<Mode> forced;
    if (inst % 2) forced = Mode::Slow;
    const auto r =
        sample_one(pol, PolicySnapshot(cur, SnapshotRole::Current, 0), it, forced, PromptStyle::DualMode, inst);
    double oracle = 0.0;
    for (std::size_t i = r.forced ? 1 : 0; i < r.tokens.size(); ++i) {
      const auto ctx = context_at(g, it, r.prompt, r.tokens, i);
      const auto lc = formula_logits(pol, cur, ctx), lr = formula_logits(pol, ref, ctx);
      for (int v = 0; v < g.vocab_size(); ++v) {
        if (!std::isfinite(lc[static_cast<std::size_t>(v)])) continue;
        const double p = naive_prob(lc, v), q = naive_prob(lr, v);
        oracle += p * std::log(p / q);
      }
    }
    const double kl = kl_to_reference(pol, cur, ref, it, r);
    CHECK(kl == doctest::Approx(oracle).epsilon(1e-10));
    CHECK(kl >= 0.0);
    if (inst < 25) {
      std::vector<double> grad(pol.num_params(), 0.0);
      accumulate_grad_kl(pol, cur, ref, it, r, 1.0, grad);
      const auto numeric =
          finite_diff(cur, [&](const std::vector<double>& p) { return kl_to_reference(pol, p, ref, it, r); });
      check_gradient(grad, numeric);
    }
  }
}

TEST_CASE("ungrammatical or mis-sized inputs are rejected") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  const auto& g = pol.grammar();
  const auto zero = zero_snapshot(pol);
  QAItem it;
  it.features = {0, 0, 0};
  it.question_tokens = {0};
  it.answer = g.answer_token(0);
  // body position skipped
  auto bad = make_rollout(g, {g.body_token(1, 0), g.answer_mark()}, false, PromptStyle::DualMode, 0.0);
  CHECK_THROWS_AS(log_prob(pol, zero, it, bad), ConfigError);
  // forced flag without a prefix
  auto no_prefix = make_rollout(g, {g.answer_mark(), g.answer_token(0), g.eos()}, true, PromptStyle::DualMode, 0.0);
  CHECK_THROWS_AS(log_prob(pol, zero, it, no_prefix), ConfigError);
  // wrong parameter count
  std::vector<double> short_params(pol.num_params() - 1, 0.0);
  auto ok = make_rollout(g, {g.answer_mark(), g.answer_token(0), g.eos()}, false, PromptStyle::DualMode, 0.0);
  CHECK_THROWS_AS(log_prob(pol, short_params, it, ok), ConfigError);
  // item of the wrong width
  QAItem wide = it;
  wide.features.push_back(1.0);
  CHECK_THROWS_AS(log_prob(pol, zero, wide, ok), ConfigError);
  CHECK_THROWS_AS(pol.w_index(Prefix::Fast, g.answer_mark(), g.eos(), 0), ConfigError);
  GenConfig gen;
  gen.max_len = 2;
  CHECK_THROWS_AS(sample_rollouts(pol, zero, it, 1, std::nullopt, gen, 1), ConfigError);
}

TEST_CASE("sampling is reproducible and stream-separated") {
  ModelSpec spec;
  GatedLinearPolicy pol(spec);
  Rng rng(3);
  const PolicySnapshot snap(random_params(rng, pol.num_params(), 0.5), SnapshotRole::Current, 0);
  const auto it = random_item(rng, spec);
  GenConfig gen;
  const auto a = sample_rollouts(pol, snap, it, 6, std::nullopt, gen, 11);
  const auto b = sample_rollouts(pol, snap, it, 6, std::nullopt, gen, 11);
  const auto c = sample_rollouts(pol, snap, it, 3, std::nullopt, gen, 11);
  for (int i = 0; i < 6; ++i) CHECK(a[i].tokens == b[i].tokens);
  // rollout r depends only on (seed, r)
  for (int i = 0; i < 3; ++i) CHECK(a[i].tokens == c[i].tokens);
}

TEST_CASE("snapshots share storage and keep their role") {
  PolicySnapshot s({1.0, 2.0}, SnapshotRole::Current, 3);
  const auto o = s.as(SnapshotRole::Old, 4);
  CHECK(o.params().data() == s.params().data());
  CHECK(o.role() == SnapshotRole::Old);
  CHECK(o.version() == 4);
  CHECK(s.role() == SnapshotRole::Current);
  CHECK(parse_snapshot_role(to_string(SnapshotRole::Reference)) == SnapshotRole::Reference);
}
