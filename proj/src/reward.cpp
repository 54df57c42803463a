#include "dmrl/reward.hpp"

#include <cmath>

namespace dmrl {

double format_reward(const Rollout& rollout, std::optional<Mode> target_mode) {
  if (rollout.prefix == Prefix::None) return 0.0;
  if (!target_mode) return 1.0;
  return rollout.prefix == to_prefix(*target_mode) ? 1.0 : 0.5;
}

double accuracy_reward(const Rollout& rollout, const QAItem& item) {
  return verify_answer(item, rollout.extracted_answer) ? 1.0 : 0.0;
}

RewardBreakdown total_reward(const Rollout& rollout, const QAItem& item, std::optional<Mode> target_mode) {
  RewardBreakdown r;
  r.format = format_reward(rollout, target_mode);
  r.accuracy = accuracy_reward(rollout, item);
  r.total = r.format + r.accuracy;
  return r;
}

std::vector<double> group_advantages(std::span<const double> rewards, bool normalize_variance, double eps) {
  if (rewards.empty()) throw ConfigError("group_advantages: empty reward group");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  if (normalize_variance) {
    double var = 0.0;
    for (double a : adv) var += a * a;
    const double sd = std::sqrt(var / n);
    for (double& a : adv) a /= sd + eps;
  }
  return adv;
}

}  // namespace dmrl
