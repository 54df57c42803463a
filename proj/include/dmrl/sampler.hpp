#pragma once

#include <cstdint>
#include <vector>

#include "dmrl/labeler.hpp"
#include "dmrl/reward.hpp"

namespace dmrl {

/// n rollouts for one labeled item: the first m free-form, the rest forced to the
/// item's labeled prefix.
struct RolloutGroup {
  LabeledItem item;
  int m = 0;
  std::vector<Rollout> rollouts;
  std::vector<RewardBreakdown> rewards;  // filled by score_group
  std::vector<double> advantages;        // filled by score_group

  int n() const { return static_cast<int>(rollouts.size()); }
  bool is_free(int i) const { return i < m; }
};

/// Samples under the dual-mode prompt from the Old snapshot. Free rollouts use the
/// stream derive_seed(seed, 0), forced ones derive_seed(seed, 1), so the free subgroup
/// does not depend on the label.
RolloutGroup sample_group(const SequencePolicy& policy, const PolicySnapshot& old, const LabeledItem& item, int n,
                          int m, GenConfig gen, std::uint64_t seed);

/// Fills rewards and mean-centered advantages. `target` is the format-reward target
/// (std::nullopt for label-free training).
void score_group(RolloutGroup& group, std::optional<Mode> target, bool normalize_variance = false);

}  // namespace dmrl
