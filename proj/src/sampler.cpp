#include "dmrl/sampler.hpp"

namespace dmrl {

RolloutGroup sample_group(const SequencePolicy& policy, const PolicySnapshot& old, const LabeledItem& item, int n,
                          int m, GenConfig gen, std::uint64_t seed) {
  if (n < 2) throw ConfigError("sample_group: n must be >= 2");
  if (m < 0 || m > n) throw ConfigError("sample_group: m must lie in [0, n]");
  gen.prompt = PromptStyle::DualMode;
  RolloutGroup group;
  group.item = item;
  group.m = m;
  group.rollouts.reserve(static_cast<std::size_t>(n));
  if (m > 0) group.rollouts = sample_rollouts(policy, old, item.item, m, std::nullopt, gen, derive_seed(seed, 0));
  if (n - m > 0) {
    auto forced = sample_rollouts(policy, old, item.item, n - m, item.mode, gen, derive_seed(seed, 1));
    group.rollouts.insert(group.rollouts.end(), std::make_move_iterator(forced.begin()),
                          std::make_move_iterator(forced.end()));
  }
  return group;
}

void score_group(RolloutGroup& group, std::optional<Mode> target, bool normalize_variance) {
  group.rewards.clear();
  std::vector<double> totals;
  for (const auto& r : group.rollouts) {
    group.rewards.push_back(total_reward(r, group.item.item, target));
    totals.push_back(group.rewards.back().total);
  }
  group.advantages = group_advantages(totals, normalize_variance);
}

}  // namespace dmrl
