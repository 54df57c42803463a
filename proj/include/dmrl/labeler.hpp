#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dmrl/policy.hpp"

namespace dmrl {

struct LabeledItem {
  QAItem item;
  Mode mode = Mode::Fast;
  double avg_len = 0.0;  // mean total response length over the labeling rollouts
  double avg_acc = 0.0;  // mean accuracy over the labeling rollouts

  bool operator==(const LabeledItem&) const = default;
};

enum class DiscardReason { AllCorrectOrAllWrong, AmbiguousLength };
std::string_view to_string(DiscardReason r);

struct LabelerConfig {
  int n_rollouts = 8;
  double tau_fast = 10.0;
  double tau_slow = 20.0;
  int max_len = 64;
  double temperature = 1.0;
  std::uint64_t seed = 11;

  static LabelerConfig paper();  // 100 / 200 tokens
  static LabelerConfig toy();    // 10 / 20 tokens

  void validate() const;
};

/// Base-policy statistics for one item, before thresholds are applied.
struct ItemMeasurement {
  double avg_len = 0.0;
  double avg_acc = 0.0;
};

struct LabelOutcome {
  ItemMeasurement measured;
  std::optional<Mode> mode;              // set iff retained
  std::optional<DiscardReason> discard;  // set iff discarded
};

/// Labeling rule on measured statistics. The accuracy filter takes precedence;
/// the discard band [tau_fast, tau_slow] is closed.
LabelOutcome classify(const ItemMeasurement& m, double tau_fast, double tau_slow);

/// Mean total length and accuracy of a set of rollouts for one item.
ItemMeasurement measure_rollouts(std::span<const Rollout> rollouts, const QAItem& item);

/// Mean length and accuracy of cfg.n_rollouts free-form plain-prompt rollouts.
/// The sampling stream is derived from (cfg.seed, item.id), so results do not
/// depend on dataset order.
ItemMeasurement measure_item(const SequencePolicy& policy, const PolicySnapshot& base, const QAItem& item,
                             const LabelerConfig& cfg);

LabelOutcome label_item(const SequencePolicy& policy, const PolicySnapshot& base, const QAItem& item,
                        const LabelerConfig& cfg);

struct LabelStats {
  int fast = 0;
  int slow = 0;
  int discarded_ambiguous = 0;
  int discarded_accuracy = 0;

  int total() const { return fast + slow + discarded_ambiguous + discarded_accuracy; }
  bool operator==(const LabelStats&) const = default;
};

struct Discarded {
  QAItem item;
  DiscardReason reason;
  ItemMeasurement measured;
};

struct LabelResult {
  std::vector<LabeledItem> labeled;  // input order of retained items
  std::vector<Discarded> discarded;
  LabelStats stats;
};

/// Applies thresholds to already measured items (a fixed rollout transcript).
LabelResult apply_thresholds(const std::vector<QAItem>& items, const std::vector<ItemMeasurement>& transcript,
                             double tau_fast, double tau_slow);

LabelResult label_dataset(const SequencePolicy& policy, const PolicySnapshot& base, const std::vector<QAItem>& items,
                          const LabelerConfig& cfg);

/// Fair-coin labels with avg_len = avg_acc = -1 as sentinels; ablation baseline only.
std::vector<LabeledItem> random_label_baseline(const std::vector<QAItem>& items, std::uint64_t seed);

}  // namespace dmrl
