#include "dmrl/grammar.hpp"

#include <algorithm>

namespace dmrl {

ResponseGrammar::ResponseGrammar(int answer_values, int body_positions, bool with_prefixes)
    : answer_values_(answer_values), body_positions_(body_positions), with_prefixes_(with_prefixes) {
  if (answer_values < 2) throw ConfigError("grammar needs at least 2 answer values");
  if (body_positions < 1) throw ConfigError("grammar needs at least 1 body position");
}

int ResponseGrammar::prefix_token(Mode m) const {
  if (!with_prefixes_) throw ConfigError("grammar has no thinking-mode prefix tokens");
  return m == Mode::Fast ? 0 : 1;
}

int ResponseGrammar::body_token(int position, int value) const {
  if (position < 0 || position >= body_positions_ || value < 0 || value >= answer_values_)
    throw ConfigError("body token out of range");
  return body_base() + position * answer_values_ + value;
}

int ResponseGrammar::answer_token(int value) const {
  if (value < 0 || value >= answer_values_) throw ConfigError("answer value out of range");
  return answer_mark() + 1 + value;
}

Prefix ResponseGrammar::prefix_of(int tok) const {
  if (!with_prefixes_) return Prefix::None;
  if (tok == 0) return Prefix::Fast;
  if (tok == 1) return Prefix::Slow;
  return Prefix::None;
}

int ResponseGrammar::successor_slot(int prev, int next) const {
  int slot = -1;
  for_each_successor(prev, [&](int t, int s) {
    if (t == next) slot = s;
  });
  return slot;
}

std::string ResponseGrammar::render(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (!out.empty()) out += ' ';
    if (is_prefix(t)) {
      out += t == 0 ? kFastText : kSlowText;
    } else if (is_body(t)) {
      out += "s" + std::to_string(body_position(t)) + "=" + std::to_string(body_value(t));
    } else if (t == answer_mark()) {
      out += "\\boxed";
    } else if (is_answer(t)) {
      out += "{" + std::to_string(answer_value(t)) + "}";
    } else if (t == eos()) {
      out += "<eos>";
    } else {
      out += "<?" + std::to_string(t) + ">";
    }
  }
  return out;
}

Rollout make_rollout(const ResponseGrammar& g, std::vector<int> tokens, bool forced, PromptStyle prompt,
                     double log_prob) {
  Rollout r;
  r.total_length = static_cast<int>(tokens.size());
  r.prefix = tokens.empty() ? Prefix::None : g.prefix_of(tokens.front());
  const std::size_t body_begin = r.prefix == Prefix::None ? 0 : 1;
  const auto mark = std::find(tokens.begin() + static_cast<std::ptrdiff_t>(std::min(body_begin, tokens.size())),
                              tokens.end(), g.answer_mark());
  std::size_t body_end;
  if (mark != tokens.end()) {
    body_end = static_cast<std::size_t>(mark - tokens.begin());
    if (mark + 1 != tokens.end() && g.is_answer(*(mark + 1))) r.extracted_answer = *(mark + 1);
  } else {
    body_end = tokens.size();
    if (body_end > body_begin && tokens.back() == g.eos()) --body_end;
  }
  r.body_length = static_cast<int>(body_end > body_begin ? body_end - body_begin : 0);
  r.tokens = std::move(tokens);
  r.forced = forced;
  r.prompt = prompt;
  r.log_prob = log_prob;
  return r;
}

}  // namespace dmrl
