#include "dmrl/labeler.hpp"

#include "dmrl/reward.hpp"

namespace dmrl {

std::string_view to_string(DiscardReason r) {
  return r == DiscardReason::AllCorrectOrAllWrong ? "all_correct_or_all_wrong" : "ambiguous_length";
}

LabelerConfig LabelerConfig::paper() {
  LabelerConfig c;
  c.tau_fast = 100.0;
  c.tau_slow = 200.0;
  c.max_len = 2048;
  return c;
}

LabelerConfig LabelerConfig::toy() { return LabelerConfig{}; }

void LabelerConfig::validate() const {
  if (n_rollouts < 2) throw ConfigError("labeler n_rollouts must be >= 2");
  if (!(tau_fast > 0.0 && tau_fast <= tau_slow)) throw ConfigError("labeler thresholds need 0 < tau_fast <= tau_slow");
  if (max_len < 3) throw ConfigError("labeler max_len must be >= 3");
  if (!(temperature > 0.0)) throw ConfigError("labeler temperature must be > 0");
}

LabelOutcome classify(const ItemMeasurement& m, double tau_fast, double tau_slow) {
  LabelOutcome out;
  out.measured = m;
  if (m.avg_acc <= 0.0 || m.avg_acc >= 1.0) {
    out.discard = DiscardReason::AllCorrectOrAllWrong;
  } else if (m.avg_len < tau_fast) {
    out.mode = Mode::Fast;
  } else if (m.avg_len > tau_slow) {
    out.mode = Mode::Slow;
  } else {
    out.discard = DiscardReason::AmbiguousLength;
  }
  return out;
}

ItemMeasurement measure_rollouts(std::span<const Rollout> rollouts, const QAItem& item) {
  if (rollouts.empty()) throw ConfigError("measure_rollouts: no rollouts");
  ItemMeasurement m;
  for (const auto& r : rollouts) {
    m.avg_len += r.total_length;
    m.avg_acc += accuracy_reward(r, item);
  }
  m.avg_len /= static_cast<double>(rollouts.size());
  m.avg_acc /= static_cast<double>(rollouts.size());
  return m;
}

ItemMeasurement measure_item(const SequencePolicy& policy, const PolicySnapshot& base, const QAItem& item,
                             const LabelerConfig& cfg) {
  cfg.validate();
  const GenConfig gen{cfg.temperature, cfg.max_len, PromptStyle::Plain, false};
  const auto rollouts =
      sample_rollouts(policy, base, item, cfg.n_rollouts, std::nullopt, gen, derive_seed(cfg.seed, fnv1a(item.id)));
  return measure_rollouts(rollouts, item);
}

LabelOutcome label_item(const SequencePolicy& policy, const PolicySnapshot& base, const QAItem& item,
                        const LabelerConfig& cfg) {
  return classify(measure_item(policy, base, item, cfg), cfg.tau_fast, cfg.tau_slow);
}

LabelResult apply_thresholds(const std::vector<QAItem>& items, const std::vector<ItemMeasurement>& transcript,
                             double tau_fast, double tau_slow) {
  if (items.size() != transcript.size()) throw ConfigError("transcript size does not match the item count");
  if (!(tau_fast > 0.0 && tau_fast <= tau_slow)) throw ConfigError("labeler thresholds need 0 < tau_fast <= tau_slow");
  LabelResult res;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const LabelOutcome o = classify(transcript[i], tau_fast, tau_slow);
    if (o.mode) {
      res.labeled.push_back({items[i], *o.mode, o.measured.avg_len, o.measured.avg_acc});
      (*o.mode == Mode::Fast ? res.stats.fast : res.stats.slow)++;
    } else {
      res.discarded.push_back({items[i], *o.discard, o.measured});
      (*o.discard == DiscardReason::AmbiguousLength ? res.stats.discarded_ambiguous : res.stats.discarded_accuracy)++;
    }
  }
  return res;
}

LabelResult label_dataset(const SequencePolicy& policy, const PolicySnapshot& base, const std::vector<QAItem>& items,
                          const LabelerConfig& cfg) {
  if (items.empty()) throw ConfigError("label_dataset: no items");
  cfg.validate();
  std::vector<ItemMeasurement> transcript;
  transcript.reserve(items.size());
  for (const auto& item : items) transcript.push_back(measure_item(policy, base, item, cfg));
  return apply_thresholds(items, transcript, cfg.tau_fast, cfg.tau_slow);
}

std::vector<LabeledItem> random_label_baseline(const std::vector<QAItem>& items, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4A7Du));
  std::vector<LabeledItem> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back({item, (rng() >> 63) ? Mode::Fast : Mode::Slow, -1.0, -1.0});
  return out;
}

}  // namespace dmrl
