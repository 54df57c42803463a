#include "doctest.h"

#include <algorithm>

#include "dmrl/evaluate.hpp"
#include "helpers.hpp"

using namespace dmrl;
using namespace testing;

namespace {

std::vector<QAItem> items(int n) {
  ModelSpec spec;
  TaskGenConfig tg;
  tg.n_items = n;
  tg.seed = 11;
  return generate_dataset(tg, spec.grammar);
}

}  // namespace

TEST_CASE("summarize against hand-computed strata") {
  const std::vector<EvalRecord> recs{
      {"a", Difficulty::Easy, Prefix::Fast, 4, true},
      {"b", Difficulty::Easy, Prefix::Slow, 10, false},
      {"c", Difficulty::Hard, Prefix::Slow, 30, true},
      {"d", Difficulty::Hard, Prefix::None, 20, true},
  };
  const auto all = summarize(recs);
  CHECK(all.responses == 4);
  CHECK(all.accuracy == 0.75);
  CHECK(all.mean_len == 16.0);
  CHECK(all.fast_ratio == 0.25);
  CHECK(all.slow_ratio == 0.5);
  CHECK(all.none_ratio == 0.25);
  CHECK(*all.mean_len_fast == 4.0);
  CHECK(*all.mean_len_slow == 20.0);
  const auto easy = summarize(recs, Difficulty::Easy);
  CHECK(easy.responses == 2);
  CHECK(easy.accuracy == 0.5);
  const auto hard = summarize(recs, Difficulty::Hard);
  CHECK_FALSE(hard.mean_len_fast.has_value());
  CHECK(hard.mean_len == 25.0);
  const auto empty = summarize(std::span<const EvalRecord>{});
  CHECK(empty.responses == 0);
  CHECK(empty.accuracy == 0.0);
}

TEST_CASE("budget curve by brute-force count") {
  EvalReport rep;
  rep.records = {
      {"a", Difficulty::Easy, Prefix::Fast, 4, true},
      {"b", Difficulty::Easy, Prefix::Fast, 5, false},
      {"c", Difficulty::Hard, Prefix::Slow, 12, true},
      {"d", Difficulty::Hard, Prefix::Slow, 40, true},
  };
  const std::vector<int> budgets{0, 3, 4, 11, 12, 39, 40, 64};
  const auto curve = budget_curve(rep, budgets);
  const std::vector<double> expect{0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75};
  REQUIRE(curve.size() == budgets.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i].first == budgets[i]);
    CHECK(curve[i].second == expect[i]);
  }
  const std::vector<int> unsorted{8, 4};
  CHECK_THROWS_AS(budget_curve(rep, unsorted), ConfigError);
}

TEST_CASE("evaluate: forced prefixes, sample counts, budget endpoints") {
  ModelSpec spec;
  GatedLinearPolicy pol(spec);
  Rng rng(8);
  const PolicySnapshot snap(random_params(rng, pol.num_params(), 0.3), SnapshotRole::Current, 0);
  const auto data = items(40);

  EvalConfig cfg;
  cfg.samples_per_item = 3;
  cfg.forced_mode = Mode::Slow;
  const auto slow = evaluate(pol, snap, data, cfg);
  CHECK(slow.records.size() == 120);
  CHECK(slow.all.fast_ratio == 0.0);
  CHECK(slow.all.slow_ratio == 1.0);
  CHECK(slow.easy.responses + slow.hard.responses == 120);

  cfg.forced_mode = Mode::Fast;
  CHECK(evaluate(pol, snap, data, cfg).all.fast_ratio == 1.0);

  cfg.forced_mode.reset();
  const auto free = evaluate(pol, snap, data, cfg);
  CHECK(free.all.fast_ratio + free.all.slow_ratio + free.all.none_ratio == doctest::Approx(1.0));
  for (const auto& r : free.records) {
    CHECK(r.length >= 1);
    CHECK(r.length <= cfg.gen.max_len);
  }
  // evaluation is a pure function of (snapshot, items, config)
  CHECK(evaluate(pol, snap, data, cfg).records == free.records);

  std::vector<int> budgets;
  for (int b = 0; b <= cfg.gen.max_len; b += 4) budgets.push_back(b);
  const auto curve = budget_curve(free, budgets);
  CHECK(curve.front().second == 0.0);
  CHECK(curve.back().second == doctest::Approx(free.all.accuracy).epsilon(1e-12));
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].second >= curve[i - 1].second);
  CHECK(budget_curve(pol, snap, data, budgets, cfg) == curve);

  cfg.samples_per_item = 0;
  CHECK_THROWS_AS(evaluate(pol, snap, data, cfg), ConfigError);
  cfg.samples_per_item = 1;
  CHECK_THROWS_AS(evaluate(pol, snap, {}, cfg), ConfigError);
}
