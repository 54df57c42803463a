#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmrl/common.hpp"
#include "dmrl/grammar.hpp"

namespace dmrl {

/// One synthetic question. `features` stands in for the image; the difficulty
/// tag is never shown to the policy.
struct QAItem {
  std::string id;
  Difficulty difficulty = Difficulty::Easy;
  std::vector<double> features;
  std::vector<int> question_tokens;
  int answer = 0;  // answer-token id of the response grammar

  bool operator==(const QAItem&) const = default;
};

struct TaskGenConfig {
  int n_items = 2000;
  double easy_fraction = 0.5;
  int chain_length = 4;    // slots composed by a hard item (>= 3)
  int answer_values = 4;   // size of the answer alphabet; must match the grammar
  int feature_dim = 0;     // 0 = exactly (1 + chain_length) * answer_values; extra dims are distractors
  std::uint64_t seed = 7;

  void validate(const ResponseGrammar& g) const;
  int slots() const { return 1 + chain_length; }
  int base_feature_dim() const { return slots() * answer_values; }
  int resolved_feature_dim() const { return feature_dim == 0 ? base_feature_dim() : feature_dim; }
  /// Question alphabet: two task-type tokens followed by one reference token per slot.
  int question_vocab() const { return 2 + slots(); }
};

// Question token ids.
inline constexpr int kQuestionLookup = 0;
inline constexpr int kQuestionChain = 1;
inline int question_slot_token(int slot) { return 2 + slot; }

/// Easy items: the answer is the value one-hot encoded in slot 0 (a single lookup).
/// Hard items: slot 0 is blank and the answer is the sum, modulo the answer alphabet,
/// of the values in slots 1..chain_length, which takes one derivation step per slot.
/// Feature layout: slot s occupies dims [s*K, (s+1)*K); distractor dims follow.
std::vector<QAItem> generate_dataset(const TaskGenConfig& cfg, const ResponseGrammar& g);

/// True iff `extracted` is present and equals the gold answer token.
inline bool verify_answer(const QAItem& item, std::optional<int> extracted) {
  return extracted.has_value() && *extracted == item.answer;
}

}  // namespace dmrl
