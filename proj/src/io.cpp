#include "dmrl/io.hpp"

#include <fstream>
#include <sstream>

namespace dmrl {

namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object()) throw FormatError("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> opt_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return field<T>(j, key);
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

Prefix parse_prefix(std::string_view s) {
  if (s == "fast") return Prefix::Fast;
  if (s == "slow") return Prefix::Slow;
  if (s == "none") return Prefix::None;
  throw FormatError("unknown prefix '" + std::string(s) + "'");
}

// Domain parsers throw ConfigError; inside data files that is a format problem.
template <typename F>
auto parse_enum(F&& f, const std::string& s) {
  try {
    return f(s);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw FormatError("write failed for '" + path + "'");
}

json stratum_json(const StratumStats& s) { return to_json(s); }

StratumStats stratum_from_json(const json& j) {
  StratumStats s;
  s.responses = field<int>(j, "responses");
  s.accuracy = field<double>(j, "accuracy");
  s.mean_len = field<double>(j, "mean_len");
  s.mean_len_fast = opt_field<double>(j, "mean_len_fast");
  s.mean_len_slow = opt_field<double>(j, "mean_len_slow");
  s.fast_ratio = field<double>(j, "fast_ratio");
  s.slow_ratio = field<double>(j, "slow_ratio");
  s.none_ratio = field<double>(j, "none_ratio");
  return s;
}

}  // namespace

json to_json(const QAItem& item) {
  return json{{"id", item.id},
              {"difficulty", to_string(item.difficulty)},
              {"features", item.features},
              {"question_tokens", item.question_tokens},
              {"answer", item.answer}};
}

QAItem item_from_json(const json& j) {
  QAItem item;
  item.id = field<std::string>(j, "id");
  item.difficulty = parse_enum(parse_difficulty, field<std::string>(j, "difficulty"));
  item.features = field<std::vector<double>>(j, "features");
  item.question_tokens = field<std::vector<int>>(j, "question_tokens");
  item.answer = field<int>(j, "answer");
  return item;
}

json to_json(const LabeledItem& item) {
  json j = to_json(item.item);
  j["mode"] = to_string(item.mode);
  j["avg_len"] = item.avg_len;
  j["avg_acc"] = item.avg_acc;
  return j;
}

LabeledItem labeled_from_json(const json& j) {
  LabeledItem l;
  l.item = item_from_json(j);
  l.mode = parse_enum(parse_mode, field<std::string>(j, "mode"));
  l.avg_len = field<double>(j, "avg_len");
  l.avg_acc = field<double>(j, "avg_acc");
  return l;
}

json to_json(const Discarded& d) {
  json j = to_json(d.item);
  j["reason"] = to_string(d.reason);
  j["avg_len"] = d.measured.avg_len;
  j["avg_acc"] = d.measured.avg_acc;
  return j;
}

json to_json(const LabelStats& s) {
  return json{{"fast", s.fast},
              {"slow", s.slow},
              {"discarded_ambiguous", s.discarded_ambiguous},
              {"discarded_accuracy", s.discarded_accuracy},
              {"total", s.total()}};
}

json to_json(const StepMetrics& m) {
  return json{{"step", m.step},
              {"mean_reward", m.mean_reward},
              {"mean_accuracy", m.mean_accuracy},
              {"fast_ratio_free", opt(m.fast_ratio_free)},
              {"mean_len_fast", opt(m.mean_len_fast)},
              {"mean_len_slow", opt(m.mean_len_slow)},
              {"mean_kl", m.mean_kl},
              {"clip_fraction", m.clip_fraction},
              {"objective", m.objective}};
}

StepMetrics metrics_from_json(const json& j) {
  StepMetrics m;
  m.step = field<int>(j, "step");
  m.mean_reward = field<double>(j, "mean_reward");
  m.mean_accuracy = field<double>(j, "mean_accuracy");
  m.fast_ratio_free = opt_field<double>(j, "fast_ratio_free");
  m.mean_len_fast = opt_field<double>(j, "mean_len_fast");
  m.mean_len_slow = opt_field<double>(j, "mean_len_slow");
  m.mean_kl = field<double>(j, "mean_kl");
  m.clip_fraction = field<double>(j, "clip_fraction");
  m.objective = field<double>(j, "objective");
  return m;
}

json to_json(const StratumStats& s) {
  return json{{"responses", s.responses},
              {"accuracy", s.accuracy},
              {"mean_len", s.mean_len},
              {"mean_len_fast", opt(s.mean_len_fast)},
              {"mean_len_slow", opt(s.mean_len_slow)},
              {"fast_ratio", s.fast_ratio},
              {"slow_ratio", s.slow_ratio},
              {"none_ratio", s.none_ratio}};
}

json to_json(const EvalRecord& r) {
  return json{{"item_id", r.item_id},
              {"difficulty", to_string(r.difficulty)},
              {"prefix", to_string(r.prefix)},
              {"length", r.length},
              {"correct", r.correct}};
}

EvalRecord record_from_json(const json& j) {
  EvalRecord r;
  r.item_id = field<std::string>(j, "item_id");
  r.difficulty = parse_enum(parse_difficulty, field<std::string>(j, "difficulty"));
  r.prefix = parse_prefix(field<std::string>(j, "prefix"));
  r.length = field<int>(j, "length");
  r.correct = field<bool>(j, "correct");
  return r;
}

json to_json(const EvalReport& r) {
  json records = json::array();
  for (const auto& rec : r.records) records.push_back(to_json(rec));
  return json{{"forced_mode", r.forced_mode ? json(to_string(*r.forced_mode)) : json(nullptr)},
              {"prompt", to_string(r.prompt)},
              {"max_len", r.max_len},
              {"all", stratum_json(r.all)},
              {"easy", stratum_json(r.easy)},
              {"hard", stratum_json(r.hard)},
              {"records", std::move(records)}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  if (auto fm = opt_field<std::string>(j, "forced_mode")) r.forced_mode = parse_enum(parse_mode, *fm);
  r.prompt = parse_enum(parse_prompt_style, field<std::string>(j, "prompt"));
  r.max_len = field<int>(j, "max_len");
  r.all = stratum_from_json(field<json>(j, "all"));
  r.easy = stratum_from_json(field<json>(j, "easy"));
  r.hard = stratum_from_json(field<json>(j, "hard"));
  for (const auto& rec : field<json>(j, "records")) r.records.push_back(record_from_json(rec));
  return r;
}

json to_json(const RolloutGroup& g, const ResponseGrammar& grammar) {
  json rollouts = json::array();
  for (int i = 0; i < g.n(); ++i) {
    const Rollout& r = g.rollouts[i];
    json row{{"free", g.is_free(i)},
             {"prefix", to_string(r.prefix)},
             {"total_length", r.total_length},
             {"log_prob", r.log_prob},
             {"text", grammar.render(r.tokens)}};
    if (i < static_cast<int>(g.rewards.size())) {
      row["format_reward"] = g.rewards[i].format;
      row["accuracy_reward"] = g.rewards[i].accuracy;
    }
    if (i < static_cast<int>(g.advantages.size())) row["advantage"] = g.advantages[i];
    rollouts.push_back(std::move(row));
  }
  return json{{"item_id", g.item.item.id},
              {"difficulty", to_string(g.item.item.difficulty)},
              {"label", to_string(g.item.mode)},
              {"m", g.m},
              {"rollouts", std::move(rollouts)}};
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
  auto out = open_out(path);
  for (const auto& r : rows) out << r.dump() << '\n';
  finish(out, path);
}

void read_jsonl(const std::string& path, const std::function<void(const json&, int)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), lineno);
    } catch (const json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": invalid JSON (" + e.what() + ")");
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": invalid JSON (" + e.what() + ")");
  }
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

void write_items(const std::string& path, const std::vector<QAItem>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& it : items) rows.push_back(to_json(it));
  write_jsonl(path, rows);
}

std::vector<QAItem> read_items(const std::string& path) {
  std::vector<QAItem> items;
  read_jsonl(path, [&](const json& j, int) { items.push_back(item_from_json(j)); });
  return items;
}

void write_labeled(const std::string& path, const std::vector<LabeledItem>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& it : items) rows.push_back(to_json(it));
  write_jsonl(path, rows);
}

std::vector<LabeledItem> read_labeled(const std::string& path) {
  std::vector<LabeledItem> items;
  read_jsonl(path, [&](const json& j, int) { items.push_back(labeled_from_json(j)); });
  return items;
}

void write_discards(const std::string& path, const std::vector<Discarded>& discarded) {
  std::vector<json> rows;
  for (const auto& d : discarded) rows.push_back(to_json(d));
  write_jsonl(path, rows);
}

void write_train_log(const std::string& path, const std::vector<StepMetrics>& log) {
  std::vector<json> rows;
  for (const auto& m : log) rows.push_back(to_json(m));
  write_jsonl(path, rows);
}

std::vector<StepMetrics> read_train_log(const std::string& path) {
  std::vector<StepMetrics> log;
  read_jsonl(path, [&](const json& j, int) { log.push_back(metrics_from_json(j)); });
  return log;
}

}  // namespace dmrl
