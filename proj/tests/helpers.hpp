#pragma once

// Small fixtures and independent oracles shared by the unit tests.

#include <cmath>
#include <limits>
#include <vector>

#include "dmrl/policy.hpp"
#include "dmrl/sampler.hpp"
#include "dmrl/taskgen.hpp"

namespace testing {

using namespace dmrl;

// Tiny model: 2 answer values, 3 body positions, so every path can be enumerated.
inline ModelSpec tiny_spec() {
  ModelSpec s;
  s.grammar = ResponseGrammar(2, 3);
  s.feature_dim = 3;
  s.question_vocab = 2;
  s.position_buckets = 4;
  return s;
}

inline QAItem random_item(Rng& rng, const ModelSpec& spec) {
  QAItem it;
  it.id = "t" + std::to_string(rng() % 100000);
  it.difficulty = (rng() & 1) ? Difficulty::Easy : Difficulty::Hard;
  for (int j = 0; j < spec.feature_dim; ++j) it.features.push_back(2.0 * uniform01(rng) - 1.0);
  const int nq = 1 + static_cast<int>(uniform_index(rng, 3));
  for (int q = 0; q < nq; ++q) it.question_tokens.push_back(static_cast<int>(uniform_index(rng, spec.question_vocab)));
  it.answer = spec.grammar.answer_token(static_cast<int>(uniform_index(rng, spec.grammar.answer_values())));
  return it;
}

inline std::vector<double> random_params(Rng& rng, std::size_t n, double scale) {
  std::vector<double> p(n);
  for (auto& v : p) v = scale * (2.0 * uniform01(rng) - 1.0);
  return p;
}

// Logits recomputed from the documented formula through the public parameter
// addressing, without calling policy.logits.
inline std::vector<double> formula_logits(const GatedLinearPolicy& pol, std::span<const double> params,
                                          const DecisionContext& ctx) {
  const auto& g = pol.grammar();
  std::vector<double> z(pol.input_dim());
  pol.encode(ctx, z);
  std::vector<double> out(static_cast<std::size_t>(g.vocab_size()), -std::numeric_limits<double>::infinity());
  for (int v = 0; v < g.vocab_size(); ++v) {
    if (!g.can_follow(ctx.prev, v)) continue;
    double acc = params[pol.u_index(ctx.prev2, v)] + params[pol.p_index(ctx.position, v)] + params[pol.b_index(v)];
    for (std::size_t j = 0; j < z.size(); ++j) acc += params[pol.w_index(ctx.mode, ctx.prev, v, j)] * z[j];
    out[static_cast<std::size_t>(v)] = acc;
  }
  return out;
}

// Probability of `tok` under plain softmax of finite logits, computed without log-sum-exp tricks.
inline double naive_prob(const std::vector<double>& logits, int tok, double temperature = 1.0) {
  double z = 0.0;
  for (double l : logits)
    if (std::isfinite(l)) z += std::exp(l / temperature);
  return std::exp(logits[static_cast<std::size_t>(tok)] / temperature) / z;
}

inline DecisionContext context_at(const ResponseGrammar& g, const QAItem& item, PromptStyle prompt,
                                  const std::vector<int>& toks, std::size_t i) {
  return DecisionContext{item, prompt, i >= 1 ? g.prefix_of(toks[0]) : Prefix::None, i >= 1 ? toks[i - 1] : kBos,
                         i >= 2 ? toks[i - 2] : kBos, static_cast<int>(i)};
}

// Brute-force chain rule: product of per-step softmax probabilities of the chosen tokens.
inline double chain_prob(const GatedLinearPolicy& pol, std::span<const double> params, const QAItem& item,
                         const Rollout& r) {
  double p = 1.0;
  for (std::size_t i = r.forced ? 1 : 0; i < r.tokens.size(); ++i) {
    const auto ctx = context_at(pol.grammar(), item, r.prompt, r.tokens, i);
    p *= naive_prob(formula_logits(pol, params, ctx), r.tokens[i]);
  }
  return p;
}

// Every complete response of a grammar that fits in max_len tokens, with an optional forced prefix.
inline void enumerate_responses(const ResponseGrammar& g, int max_len, std::vector<int>& cur,
                                std::vector<std::vector<int>>& out) {
  const int prev = cur.empty() ? kBos : cur.back();
  if (prev == g.eos()) {
    out.push_back(cur);
    return;
  }
  if (static_cast<int>(cur.size()) == max_len) {
    out.push_back(cur);  // truncated
    return;
  }
  g.for_each_successor(prev, [&](int tok, int) {
    cur.push_back(tok);
    enumerate_responses(g, max_len, cur, out);
    cur.pop_back();
  });
}

}  // namespace testing
