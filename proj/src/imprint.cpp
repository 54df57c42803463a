#include "dmrl/imprint.hpp"

#include <algorithm>
#include <cmath>

#include "dmrl/optim.hpp"

namespace dmrl {

void TeacherConfig::validate(const ResponseGrammar& g) const {
  if (!(slip_prob >= 0.0 && slip_prob < 1.0)) throw ConfigError("teacher slip_prob must lie in [0, 1)");
  if (!(accuracy > 0.0 && accuracy < 1.0))
    throw ConfigError("teacher accuracy must lie strictly between 0 and 1 (0 or 1 leaves nothing to label)");
  if (easy_body_length < 1 || hard_body_length < 1) throw ConfigError("teacher body lengths must be >= 1");
  if (easy_body_length > g.body_positions() || hard_body_length > g.body_positions())
    throw ConfigError("teacher body length exceeds the grammar's body positions");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(plain_fraction) || !prob(fast_prefix_prob) || !prob(slow_prefix_prob) || !prob(prefix_consistency) ||
      fast_prefix_prob + slow_prefix_prob > 1.0)
    throw ConfigError("teacher probabilities must lie in [0, 1] and prefix probabilities must sum to <= 1");
}

namespace {

int slot_value(const QAItem& item, int slot, int k) {
  const auto begin = item.features.begin() + slot * k;
  return static_cast<int>(std::max_element(begin, begin + k) - begin);
}

}  // namespace

std::vector<int> teacher_body(const ResponseGrammar& g, const QAItem& item, int body_length) {
  const int k = g.answer_values();
  std::vector<int> slots;
  for (int q : item.question_tokens)
    if (q >= 2) slots.push_back(q - 2);
  std::vector<int> body;
  body.reserve(static_cast<std::size_t>(body_length));
  int s = 0;
  for (int t = 0; t < body_length; ++t) {
    if (t < static_cast<int>(slots.size())) s = (s + slot_value(item, slots[static_cast<std::size_t>(t)], k)) % k;
    body.push_back(g.body_token(t, s));
  }
  return body;
}

std::vector<int> teacher_trace(const TeacherConfig& teacher, const ResponseGrammar& g, const QAItem& item,
                               PromptStyle prompt, Rng& rng) {
  const int natural = item.difficulty == Difficulty::Easy ? teacher.easy_body_length : teacher.hard_body_length;
  std::vector<int> toks;
  int length = natural;
  if (prompt == PromptStyle::DualMode && g.has_prefixes()) {
    const double u = uniform01(rng);
    std::optional<Mode> mode;
    if (u < teacher.fast_prefix_prob) {
      mode = Mode::Fast;
    } else if (u < teacher.fast_prefix_prob + teacher.slow_prefix_prob) {
      mode = Mode::Slow;
    }
    if (mode) {
      toks.push_back(g.prefix_token(*mode));
      if (uniform01(rng) < teacher.prefix_consistency)
        length = *mode == Mode::Fast ? teacher.easy_body_length : teacher.hard_body_length;
    }
  }
  auto body = teacher_body(g, item, length);
  const int k = g.answer_values();
  if (teacher.slip_prob > 0.0) {
    const auto folds = static_cast<std::size_t>(
        std::count_if(item.question_tokens.begin(), item.question_tokens.end(), [](int q) { return q >= 2; }));
    int s = -1;
    for (std::size_t t = 0; t < body.size(); ++t) {
      if (t >= folds && uniform01(rng) < teacher.slip_prob)
        s = (g.body_value(body[t - 1]) + 1 + static_cast<int>(uniform_index(rng, k - 1))) % k;
      if (s >= 0) body[t] = g.body_token(static_cast<int>(t), s);
    }
  }
  toks.insert(toks.end(), body.begin(), body.end());
  int value = g.body_value(body.back());
  if (uniform01(rng) >= teacher.accuracy) value = (value + 1 + static_cast<int>(uniform_index(rng, k - 1))) % k;
  toks.push_back(g.answer_mark());
  toks.push_back(g.answer_token(value));
  toks.push_back(g.eos());
  return toks;
}

PolicySnapshot imprint_base_behavior(const SequencePolicy& policy, const PolicySnapshot& start,
                                     const TeacherConfig& teacher, const std::vector<QAItem>& dataset, int steps,
                                     std::uint64_t seed, const ImprintOptions& opts) {
  const ResponseGrammar& g = policy.grammar();
  teacher.validate(g);
  if (dataset.empty()) throw ConfigError("imprinting needs a nonempty dataset");
  if (steps < 0) throw ConfigError("imprinting steps must be >= 0");
  if (opts.batch_size < 1) throw ConfigError("imprinting batch size must be >= 1");
  std::vector<double> params(start.params().begin(), start.params().end());
  if (steps == 0) return PolicySnapshot(std::move(params), SnapshotRole::Reference, 0);

  Adam adam(params.size(), AdamConfig{opts.lr});
  std::vector<double> grad(params.size());
  Rng rng(derive_seed(seed, 0x1A9u));
  for (int step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int b = 0; b < opts.batch_size; ++b) {
      const QAItem& item = dataset[uniform_index(rng, dataset.size())];
      const PromptStyle prompt = uniform01(rng) < teacher.plain_fraction ? PromptStyle::Plain : PromptStyle::DualMode;
      const Rollout trace = make_rollout(g, teacher_trace(teacher, g, item, prompt, rng), false, prompt, 0.0);
      accumulate_grad_log_prob(policy, params, item, trace, 1.0 / opts.batch_size, grad);
    }
    adam.ascend(params, grad);
  }
  for (double p : params)
    if (!std::isfinite(p)) throw NumericError("imprinting produced non-finite parameters");
  return PolicySnapshot(std::move(params), SnapshotRole::Reference, 0);
}

}  // namespace dmrl
