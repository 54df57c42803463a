#include "doctest.h"

#include <filesystem>
#include <cstring>
#include <fstream>

#include <unistd.h>

#include "dmrl/io.hpp"
#include "dmrl/snapshot_io.hpp"
#include "helpers.hpp"

using namespace dmrl;
using namespace testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dmrl_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("datasets and labels round trip") {
  ModelSpec spec;
  TaskGenConfig tg;
  tg.n_items = 30;
  const auto items = generate_dataset(tg, spec.grammar);
  const auto p = scratch("items.jsonl").string();
  write_items(p, items);
  CHECK(read_items(p) == items);
  const auto first = slurp(p);
  write_items(p, read_items(p));
  CHECK(slurp(p) == first);

  std::vector<LabeledItem> lab;
  for (const auto& it : items) lab.push_back({it, it.difficulty == Difficulty::Easy ? Mode::Fast : Mode::Slow, 7.25, 0.5});
  const auto q = scratch("labeled.jsonl").string();
  write_labeled(q, lab);
  CHECK(read_labeled(q) == lab);
}

TEST_CASE("train logs keep absent fields absent") {
  StepMetrics a;
  a.step = 3;
  a.mean_reward = 1.25;
  a.fast_ratio_free = 0.5;
  a.mean_len_fast = 4.0;
  a.mean_kl = 1e-7;
  StepMetrics b;
  b.step = 4;
  const auto p = scratch("log.jsonl").string();
  write_train_log(p, {a, b});
  const auto back = read_train_log(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == a);
  CHECK(back[1] == b);
  CHECK_FALSE(back[1].fast_ratio_free.has_value());
  CHECK(to_json(b)["fast_ratio_free"].is_null());
}

TEST_CASE("eval reports round trip") {
  EvalReport r;
  r.forced_mode = Mode::Slow;
  r.max_len = 64;
  r.records = {{"x", Difficulty::Hard, Prefix::Slow, 30, true}, {"y", Difficulty::Easy, Prefix::Slow, 9, false}};
  r.all = summarize(r.records);
  r.easy = summarize(r.records, Difficulty::Easy);
  r.hard = summarize(r.records, Difficulty::Hard);
  const auto back = report_from_json(to_json(r));
  CHECK(back.forced_mode == r.forced_mode);
  CHECK(back.prompt == r.prompt);
  CHECK(back.max_len == 64);
  CHECK(back.records == r.records);
  CHECK(back.all == r.all);
  CHECK(back.hard == r.hard);
}

TEST_CASE("malformed lines name the file and line") {
  const auto p = scratch("bad.jsonl");
  {
    std::ofstream out(p);
    out << R"({"id":"a","difficulty":"easy","features":[1],"question_tokens":[0],"answer":3})" << "\n\n";
    out << "{not json\n";
  }
  auto msg = error_of([&] { read_items(p.string()); });
  CHECK(msg.find("bad.jsonl:3") != std::string::npos);

  {
    std::ofstream out(p);
    out << R"({"id":"a","difficulty":"medium","features":[1],"question_tokens":[0],"answer":3})" << "\n";
  }
  msg = error_of([&] { read_items(p.string()); });
  CHECK(msg.find("bad.jsonl:1") != std::string::npos);

  {
    std::ofstream out(p);
    out << R"({"id":"a","difficulty":"easy","features":[1],"question_tokens":[0]})" << "\n";
  }
  CHECK_FALSE(error_of([&] { read_items(p.string()); }).empty());
  CHECK_THROWS_AS(read_items(scratch("missing.jsonl").string()), FormatError);
}

TEST_CASE("snapshots round trip bit for bit and reject corruption") {
  const auto spec = tiny_spec();
  GatedLinearPolicy pol(spec);
  Rng rng(12);
  auto params = random_params(rng, pol.num_params(), 3.0);
  params[0] = -0.0;
  params[1] = 1e-310;
  const PolicySnapshot s(params, SnapshotRole::Reference, 42);
  const auto p = scratch("s.snap");
  save_snapshot(p.string(), spec, s);
  const auto back = load_snapshot(p.string());
  CHECK(back.spec == spec);
  CHECK(back.snapshot.role() == SnapshotRole::Reference);
  CHECK(back.snapshot.version() == 42);
  REQUIRE(back.snapshot.size() == params.size());
  CHECK(std::memcmp(back.snapshot.params().data(), params.data(), params.size() * sizeof(double)) == 0);

  const auto bytes = slurp(p);
  auto write = [&](const std::string& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_snapshot(p.string()), FormatError);
  write("dmrl-snapshot 9\n" + bytes.substr(bytes.find('\n') + 1));
  CHECK_THROWS_AS(load_snapshot(p.string()), FormatError);
  auto header_broken = bytes;
  header_broken[bytes.find('{') + 1] = '#';
  write(header_broken);
  CHECK_THROWS_AS(load_snapshot(p.string()), FormatError);
  CHECK_THROWS_AS(load_snapshot(scratch("nope.snap").string()), FormatError);
}
