#include "dmrl/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dmrl {

void TaskGenConfig::validate(const ResponseGrammar& g) const {
  if (n_items < 1) throw ConfigError("n_items must be >= 1");
  if (!(easy_fraction >= 0.0 && easy_fraction <= 1.0)) throw ConfigError("easy_fraction must lie in [0, 1]");
  if (chain_length < 3) throw ConfigError("chain_length must be >= 3");
  if (answer_values != g.answer_values())
    throw ConfigError("answer_values (" + std::to_string(answer_values) + ") does not match the grammar (" +
                      std::to_string(g.answer_values()) + ")");
  if (feature_dim != 0 && feature_dim < base_feature_dim())
    throw ConfigError("feature_dim must be 0 or >= " + std::to_string(base_feature_dim()));
}

std::vector<QAItem> generate_dataset(const TaskGenConfig& cfg, const ResponseGrammar& g) {
  cfg.validate(g);
  const int k = cfg.answer_values;
  const int n_easy = static_cast<int>(std::lround(cfg.easy_fraction * cfg.n_items));

  // Deterministic placement of the easy items.
  std::vector<int> order(static_cast<std::size_t>(cfg.n_items));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, 0xD1FFu));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
  }
  std::vector<bool> easy(order.size(), false);
  for (int i = 0; i < n_easy; ++i) easy[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  std::vector<QAItem> items;
  items.reserve(order.size());
  for (int i = 0; i < cfg.n_items; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x17E4u, i));
    QAItem item;
    char id[48];
    std::snprintf(id, sizeof id, "s%llu-%06d", static_cast<unsigned long long>(cfg.seed), i);
    item.id = id;
    item.difficulty = easy[static_cast<std::size_t>(i)] ? Difficulty::Easy : Difficulty::Hard;
    item.features.assign(static_cast<std::size_t>(cfg.resolved_feature_dim()), 0.0);
    auto set_slot = [&](int slot, int value) {
      item.features[static_cast<std::size_t>(slot * k + value)] = 1.0;
    };
    int value;
    if (item.difficulty == Difficulty::Easy) {
      value = static_cast<int>(uniform_index(rng, k));
      set_slot(0, value);
      item.question_tokens = {kQuestionLookup, question_slot_token(0)};
    } else {
      value = 0;
      item.question_tokens = {kQuestionChain};
      for (int s = 1; s <= cfg.chain_length; ++s) {
        const int v = static_cast<int>(uniform_index(rng, k));
        set_slot(s, v);
        value = (value + v) % k;
        item.question_tokens.push_back(question_slot_token(s));
      }
    }
    for (std::size_t j = static_cast<std::size_t>(cfg.base_feature_dim()); j < item.features.size(); ++j) {
      item.features[j] = 2.0 * uniform01(rng) - 1.0;
    }
    item.answer = g.answer_token(value);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace dmrl
