#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmrl/common.hpp"

namespace dmrl {

/// Token layout of a response.
///
///   [PREFIX_FAST, PREFIX_SLOW]   optional mode prefixes ("Short Thinking:" / "Long Thinking:")
///   body(position, value)        reasoning steps; each carries the running value of the derivation
///   ANSWER_MARK                  toy analog of the boxed-answer marker
///   answer(value)                one token per answer value
///   EOS
///
/// A well-formed response matches  prefix? body* ANSWER_MARK answer EOS.
class ResponseGrammar {
 public:
  ResponseGrammar(int answer_values, int body_positions, bool with_prefixes = true);

  int answer_values() const { return answer_values_; }
  int body_positions() const { return body_positions_; }
  bool has_prefixes() const { return with_prefixes_; }
  int vocab_size() const { return eos() + 1; }

  int prefix_token(Mode m) const;
  int body_token(int position, int value) const;
  int answer_mark() const { return body_base() + body_positions_ * answer_values_; }
  int answer_token(int value) const;
  int eos() const { return answer_mark() + 1 + answer_values_; }

  bool is_prefix(int tok) const { return with_prefixes_ && (tok == 0 || tok == 1); }
  bool is_body(int tok) const { return tok >= body_base() && tok < answer_mark(); }
  bool is_answer(int tok) const { return tok > answer_mark() && tok < eos(); }
  bool in_vocab(int tok) const { return tok >= 0 && tok < vocab_size(); }
  int body_position(int tok) const { return (tok - body_base()) / answer_values_; }
  int body_value(int tok) const { return (tok - body_base()) % answer_values_; }
  int answer_value(int tok) const { return tok - answer_mark() - 1; }
  Prefix prefix_of(int tok) const;

  /// Calls fn(next, slot) for each token the grammar allows after `prev` (-1 = start
  /// of response). `slot` is a stable index in [0, max_successors()). Decoding is
  /// constrained to these tokens; everything else has probability 0.
  template <typename Fn>
  void for_each_successor(int prev, Fn&& fn) const {
    if (prev == eos()) return;
    if (prev == answer_mark()) {
      for (int v = 0; v < answer_values_; ++v) fn(answer_token(v), v);
      return;
    }
    if (is_answer(prev)) {
      fn(eos(), 0);
      return;
    }
    int next_pos = 0;
    if (prev < 0) {
      if (with_prefixes_) {
        fn(0, 0);
        fn(1, 1);
      }
    } else if (is_body(prev)) {
      next_pos = body_position(prev) + 1;
    }
    const int off = prev < 0 && with_prefixes_ ? 2 : 0;
    if (next_pos < body_positions_)
      for (int v = 0; v < answer_values_; ++v) fn(body_token(next_pos, v), off + v);
    fn(answer_mark(), off + answer_values_);
  }
  int max_successors() const { return answer_values_ + (with_prefixes_ ? 3 : 1); }
  /// Slot of `next` after `prev`, or -1 if the grammar forbids it.
  int successor_slot(int prev, int next) const;
  bool can_follow(int prev, int next) const { return successor_slot(prev, next) >= 0; }

  static constexpr std::string_view kFastText = "Short Thinking:";
  static constexpr std::string_view kSlowText = "Long Thinking:";

  /// Human-readable rendering used in debug dumps.
  std::string render(std::span<const int> tokens) const;

  bool operator==(const ResponseGrammar&) const = default;

 private:
  int body_base() const { return with_prefixes_ ? 2 : 0; }

  int answer_values_;
  int body_positions_;
  bool with_prefixes_;
};

/// One sampled response.
struct Rollout {
  std::vector<int> tokens;
  Prefix prefix = Prefix::None;
  int body_length = 0;
  int total_length = 0;
  std::optional<int> extracted_answer;  // answer-token id
  double log_prob = 0.0;                // over policy-chosen tokens only
  bool forced = false;
  PromptStyle prompt = PromptStyle::DualMode;
};

/// Builds a rollout from raw tokens, filling the derived fields.
Rollout make_rollout(const ResponseGrammar& g, std::vector<int> tokens, bool forced, PromptStyle prompt,
                     double log_prob);

}  // namespace dmrl
