#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dmrl/grammar.hpp"
#include "dmrl/taskgen.hpp"

namespace dmrl {

struct RewardBreakdown {
  double format = 0.0;    // {0, 0.5, 1}
  double accuracy = 0.0;  // {0, 1}
  double total = 0.0;     // format + accuracy
};

/// 1 if the response's prefix matches the target mode, 0.5 for the other valid
/// prefix, 0 without a prefix. Without a target (label-free training) any valid
/// prefix earns 1.
double format_reward(const Rollout& rollout, std::optional<Mode> target_mode);

/// 1 if the extracted answer is correct, else 0.
double accuracy_reward(const Rollout& rollout, const QAItem& item);

RewardBreakdown total_reward(const Rollout& rollout, const QAItem& item, std::optional<Mode> target_mode);

/// A_i = r_i - mean(r), over the whole group. `normalize_variance` additionally divides
/// by the group standard deviation (plus `eps`); it exists only for ablations.
std::vector<double> group_advantages(std::span<const double> rewards, bool normalize_variance = false,
                                     double eps = 1e-6);

}  // namespace dmrl
