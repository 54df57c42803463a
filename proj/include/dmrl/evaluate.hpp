#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dmrl/policy.hpp"

namespace dmrl {

struct EvalConfig {
  GenConfig gen;               // dual-mode prompt, temperature 1 by default
  int samples_per_item = 1;
  std::optional<Mode> forced_mode;
  std::uint64_t seed = 3;
};

struct EvalRecord {
  std::string item_id;
  Difficulty difficulty = Difficulty::Easy;
  Prefix prefix = Prefix::None;
  int length = 0;  // total response tokens
  bool correct = false;

  bool operator==(const EvalRecord&) const = default;
};

struct StratumStats {
  int responses = 0;
  double accuracy = 0.0;
  double mean_len = 0.0;
  std::optional<double> mean_len_fast;
  std::optional<double> mean_len_slow;
  double fast_ratio = 0.0;  // share of responses opening with the fast prefix
  double slow_ratio = 0.0;
  double none_ratio = 0.0;

  bool operator==(const StratumStats&) const = default;
};

struct EvalReport {
  std::optional<Mode> forced_mode;
  PromptStyle prompt = PromptStyle::DualMode;
  int max_len = 0;
  StratumStats all, easy, hard;
  std::vector<EvalRecord> records;
};

StratumStats summarize(std::span<const EvalRecord> records, std::optional<Difficulty> only = std::nullopt);

EvalReport evaluate(const SequencePolicy& policy, const PolicySnapshot& snapshot, const std::vector<QAItem>& items,
                    const EvalConfig& cfg);

/// Accuracy counting a response only if it is correct and at most B tokens long.
std::vector<std::pair<int, double>> budget_curve(const EvalReport& report, std::span<const int> budgets);

std::vector<std::pair<int, double>> budget_curve(const SequencePolicy& policy, const PolicySnapshot& snapshot,
                                                 const std::vector<QAItem>& items, std::span<const int> budgets,
                                                 const EvalConfig& cfg);

}  // namespace dmrl
