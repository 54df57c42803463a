#include "dmrl/evaluate.hpp"

#include <algorithm>

#include "dmrl/reward.hpp"

namespace dmrl {

StratumStats summarize(std::span<const EvalRecord> records, std::optional<Difficulty> only) {
  StratumStats s;
  double len = 0.0, correct = 0.0, len_fast = 0.0, len_slow = 0.0;
  int fast = 0, slow = 0, none = 0;
  for (const auto& r : records) {
    if (only && r.difficulty != *only) continue;
    ++s.responses;
    len += r.length;
    correct += r.correct ? 1.0 : 0.0;
    switch (r.prefix) {
      case Prefix::Fast: ++fast; len_fast += r.length; break;
      case Prefix::Slow: ++slow; len_slow += r.length; break;
      case Prefix::None: ++none; break;
    }
  }
  if (s.responses == 0) return s;
  const double n = s.responses;
  s.accuracy = correct / n;
  s.mean_len = len / n;
  s.fast_ratio = fast / n;
  s.slow_ratio = slow / n;
  s.none_ratio = none / n;
  if (fast > 0) s.mean_len_fast = len_fast / fast;
  if (slow > 0) s.mean_len_slow = len_slow / slow;
  return s;
}

EvalReport evaluate(const SequencePolicy& policy, const PolicySnapshot& snapshot, const std::vector<QAItem>& items,
                    const EvalConfig& cfg) {
  if (items.empty()) throw ConfigError("evaluate: no items");
  if (cfg.samples_per_item < 1) throw ConfigError("evaluate: samples_per_item must be >= 1");
  EvalReport rep;
  rep.forced_mode = cfg.forced_mode;
  rep.prompt = cfg.gen.prompt;
  rep.max_len = cfg.gen.max_len;
  for (const auto& item : items) {
    const auto rollouts = sample_rollouts(policy, snapshot, item, cfg.samples_per_item, cfg.forced_mode, cfg.gen,
                                          derive_seed(cfg.seed, fnv1a(item.id)));
    for (const auto& r : rollouts)
      rep.records.push_back({item.id, item.difficulty, r.prefix, r.total_length, accuracy_reward(r, item) > 0.0});
  }
  rep.all = summarize(rep.records);
  rep.easy = summarize(rep.records, Difficulty::Easy);
  rep.hard = summarize(rep.records, Difficulty::Hard);
  return rep;
}

std::vector<std::pair<int, double>> budget_curve(const EvalReport& report, std::span<const int> budgets) {
  if (!std::is_sorted(budgets.begin(), budgets.end())) throw ConfigError("budget_curve: budgets must be ascending");
  std::vector<std::pair<int, double>> out;
  const double n = static_cast<double>(report.records.size());
  for (int b : budgets) {
    double hits = 0.0;
    for (const auto& r : report.records)
      if (r.correct && r.length <= b) hits += 1.0;
    out.emplace_back(b, n > 0 ? hits / n : 0.0);
  }
  return out;
}

std::vector<std::pair<int, double>> budget_curve(const SequencePolicy& policy, const PolicySnapshot& snapshot,
                                                 const std::vector<QAItem>& items, std::span<const int> budgets,
                                                 const EvalConfig& cfg) {
  if (!std::is_sorted(budgets.begin(), budgets.end())) throw ConfigError("budget_curve: budgets must be ascending");
  return budget_curve(evaluate(policy, snapshot, items, cfg), budgets);
}

}  // namespace dmrl
