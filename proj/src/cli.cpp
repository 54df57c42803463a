#include "dmrl/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "dmrl/evaluate.hpp"
#include "dmrl/io.hpp"
#include "dmrl/snapshot_io.hpp"

namespace dmrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

template <typename T>
void set_from(const json& j, const char* key, T& dst) {
  try {
    dst = j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

// ---------------------------------------------------------------- settings

Settings Settings::for_profile(std::string_view name) {
  Settings s;
  if (name == "toy") {
    s.labeler = LabelerConfig::toy();
    s.train = TrainConfig::toy();
  } else if (name == "paper") {
    s.labeler = LabelerConfig::paper();
    s.train = TrainConfig::paper();
    s.eval_max_len = 2048;
    s.eval_samples = 1;
  } else {
    throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or toy)");
  }
  s.profile = std::string(name);
  return s;
}

json Settings::to_json() const {
  return json{
      {"profile", profile},
      {"seed", seed},
      // taskgen
      {"n_items", taskgen.n_items},
      {"easy_fraction", taskgen.easy_fraction},
      {"chain_length", taskgen.chain_length},
      {"feature_dim", taskgen.feature_dim},
      // teacher and imprinting
      {"easy_body_length", teacher.easy_body_length},
      {"hard_body_length", teacher.hard_body_length},
      {"teacher_accuracy", teacher.accuracy},
      {"slip_prob", teacher.slip_prob},
      {"plain_fraction", teacher.plain_fraction},
      {"fast_prefix_prob", teacher.fast_prefix_prob},
      {"slow_prefix_prob", teacher.slow_prefix_prob},
      {"prefix_consistency", teacher.prefix_consistency},
      {"imprint_steps", imprint_steps},
      {"imprint_lr", imprint.lr},
      {"imprint_batch_size", imprint.batch_size},
      // labeler
      {"n_rollouts", labeler.n_rollouts},
      {"tau_fast", labeler.tau_fast},
      {"tau_slow", labeler.tau_slow},
      {"label_max_len", labeler.max_len},
      {"label_temperature", labeler.temperature},
      // trainer
      {"n", train.n},
      {"m", train.m},
      {"clip_eps", train.clip_eps},
      {"kl_beta", train.kl_beta},
      {"lr", train.lr},
      {"batch_size", train.batch_size},
      {"inner_epochs", train.inner_epochs},
      {"max_steps", train.max_steps},
      {"max_len", train.max_len},
      {"temperature", train.temperature},
      {"ratio", to_string(train.ratio)},
      {"format_target", to_string(train.format_target)},
      {"normalize_advantages", train.normalize_advantages},
      {"checkpoint_every", checkpoint_every},
      // eval
      {"eval_samples", eval_samples},
      {"eval_temperature", eval_temperature},
      {"eval_max_len", eval_max_len},
  };
}

void Settings::apply(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config file must hold one flat JSON object");
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    const char* key = k.c_str();
    if (k == "profile") {
      // the profile is chosen before the file is read; only a matching value is accepted
      std::string p;
      set_from(v, key, p);
      if (p != profile) throw ConfigError("config file profile '" + p + "' differs from --profile " + profile);
    } else if (k == "seed") set_from(v, key, seed);
    else if (k == "n_items") set_from(v, key, taskgen.n_items);
    else if (k == "easy_fraction") set_from(v, key, taskgen.easy_fraction);
    else if (k == "chain_length") set_from(v, key, taskgen.chain_length);
    else if (k == "feature_dim") set_from(v, key, taskgen.feature_dim);
    else if (k == "easy_body_length") set_from(v, key, teacher.easy_body_length);
    else if (k == "hard_body_length") set_from(v, key, teacher.hard_body_length);
    else if (k == "teacher_accuracy") set_from(v, key, teacher.accuracy);
    else if (k == "slip_prob") set_from(v, key, teacher.slip_prob);
    else if (k == "plain_fraction") set_from(v, key, teacher.plain_fraction);
    else if (k == "fast_prefix_prob") set_from(v, key, teacher.fast_prefix_prob);
    else if (k == "slow_prefix_prob") set_from(v, key, teacher.slow_prefix_prob);
    else if (k == "prefix_consistency") set_from(v, key, teacher.prefix_consistency);
    else if (k == "imprint_steps") set_from(v, key, imprint_steps);
    else if (k == "imprint_lr") set_from(v, key, imprint.lr);
    else if (k == "imprint_batch_size") set_from(v, key, imprint.batch_size);
    else if (k == "n_rollouts") set_from(v, key, labeler.n_rollouts);
    else if (k == "tau_fast") set_from(v, key, labeler.tau_fast);
    else if (k == "tau_slow") set_from(v, key, labeler.tau_slow);
    else if (k == "label_max_len") set_from(v, key, labeler.max_len);
    else if (k == "label_temperature") set_from(v, key, labeler.temperature);
    else if (k == "n") set_from(v, key, train.n);
    else if (k == "m") set_from(v, key, train.m);
    else if (k == "clip_eps") set_from(v, key, train.clip_eps);
    else if (k == "kl_beta") set_from(v, key, train.kl_beta);
    else if (k == "lr") set_from(v, key, train.lr);
    else if (k == "batch_size") set_from(v, key, train.batch_size);
    else if (k == "inner_epochs") set_from(v, key, train.inner_epochs);
    else if (k == "max_steps") set_from(v, key, train.max_steps);
    else if (k == "max_len") set_from(v, key, train.max_len);
    else if (k == "temperature") set_from(v, key, train.temperature);
    else if (k == "ratio") {
      std::string s;
      set_from(v, key, s);
      train.ratio = parse_ratio_level(s);
    } else if (k == "format_target") {
      std::string s;
      set_from(v, key, s);
      train.format_target = parse_format_target(s);
    } else if (k == "normalize_advantages") set_from(v, key, train.normalize_advantages);
    else if (k == "checkpoint_every") set_from(v, key, checkpoint_every);
    else if (k == "eval_samples") set_from(v, key, eval_samples);
    else if (k == "eval_temperature") set_from(v, key, eval_temperature);
    else if (k == "eval_max_len") set_from(v, key, eval_max_len);
    else throw ConfigError("unknown config key '" + k + "'");
  }
}

void Settings::propagate_seed() {
  taskgen.seed = seed;
  labeler.seed = seed;
  train.seed = seed;
}

void Settings::validate() const {
  labeler.validate();
  train.validate();
  if (imprint_steps < 0) throw ConfigError("imprint_steps must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (!(eval_temperature > 0.0)) throw ConfigError("eval_temperature must be > 0");
  if (eval_max_len < 3) throw ConfigError("eval_max_len must be >= 3");
}

json RunManifest::to_json() const {
  return json{{"subcommand", subcommand}, {"run_id", run_id}, {"config_hash", config_hash},
              {"seed", seed},             {"profile", profile}, {"config", config},
              {"outputs", outputs},       {"version", version}};
}

// ---------------------------------------------------------------- plumbing

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string profile = "toy";
};

// Exit codes.
constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

class Run {
 public:
  Run(std::string subcommand, const Globals& g, Settings settings, std::ostream& out)
      : sub_(std::move(subcommand)), g_(g), s_(std::move(settings)), out_(out) {}

  Settings& settings() { return s_; }
  std::ostream& out() { return out_; }
  json& args() { return args_; }

  std::string path(const std::string& name) const {
    const fs::path p(name);
    return p.is_absolute() ? p.string() : (fs::path(g_.out_dir) / p).string();
  }

  std::string output(const std::string& name) {
    auto p = path(name);
    const auto parent = fs::path(p).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    outputs_.push_back(p);
    return p;
  }

  void finish() {
    RunManifest m;
    m.subcommand = sub_;
    m.seed = s_.seed;
    m.profile = s_.profile;
    m.config = json{{"settings", s_.to_json()}, {"args", args_}};
    const auto hash = fnv1a(m.config.dump());
    m.config_hash = hex64(hash);
    m.run_id = sub_ + "-" + hex64(derive_seed(hash, s_.seed));
    m.outputs = outputs_;
    for (const auto& o : outputs_)
      if (!fs::exists(o)) throw FormatError("output '" + o + "' was not written");
    write_json(output(sub_ + ".manifest.json"), m.to_json());
  }

 private:
  std::string sub_;
  Globals g_;
  Settings s_;
  std::ostream& out_;
  json args_ = json::object();
  std::vector<std::string> outputs_;
};

// Encoder sizes follow the task generator; the grammar keeps its defaults.
ModelSpec default_spec(const Settings& s) {
  ModelSpec spec;
  spec.feature_dim = s.taskgen.resolved_feature_dim();
  spec.question_vocab = s.taskgen.question_vocab();
  return spec;
}

void require_file(const std::string& p, const char* what) {
  if (!fs::exists(p)) throw FormatError(std::string(what) + " '" + p + "' does not exist");
}

std::vector<QAItem> load_items(const std::string& p) {
  require_file(p, "dataset");
  auto items = read_items(p);
  if (items.empty()) throw FormatError("dataset '" + p + "' is empty");
  return items;
}

LoadedSnapshot load_policy(const std::string& p) {
  require_file(p, "policy snapshot");
  return load_snapshot(p);
}

// Items in the dataset must fit the policy's grammar and encoder.
void check_compat(const std::vector<QAItem>& items, const ModelSpec& spec) {
  const auto& g = spec.grammar;
  for (const auto& it : items) {
    if (static_cast<int>(it.features.size()) != spec.feature_dim)
      throw FormatError("item " + it.id + " has " + std::to_string(it.features.size()) +
                        " features, the policy expects " + std::to_string(spec.feature_dim));
    if (!g.is_answer(it.answer)) throw FormatError("item " + it.id + " has an answer outside the policy grammar");
    for (int t : it.question_tokens)
      if (t < 0 || t >= spec.question_vocab) throw FormatError("item " + it.id + " has an unknown question token");
  }
}

PolicySnapshot imprint(const GatedLinearPolicy& policy, const Settings& s, const std::vector<QAItem>& items) {
  return imprint_base_behavior(policy, zero_snapshot(policy), s.teacher, items, s.imprint_steps, s.seed, s.imprint);
}

EvalConfig eval_config(const Settings& s) {
  EvalConfig ec;
  ec.gen.temperature = s.eval_temperature;
  ec.gen.max_len = s.eval_max_len;
  ec.samples_per_item = s.eval_samples;
  ec.seed = s.seed;
  return ec;
}

void print_stats(std::ostream& out, const LabelStats& st) {
  out << "label stats: fast " << st.fast << " slow " << st.slow << " discarded_ambiguous " << st.discarded_ambiguous
      << " discarded_accuracy " << st.discarded_accuracy << " total " << st.total() << "\n";
}

std::string summary_line(const StratumStats& s) {
  std::ostringstream o;
  o << "acc " << num(s.accuracy) << " len " << num(s.mean_len) << " fast " << num(s.fast_ratio) << " slow "
    << num(s.slow_ratio) << " none " << num(s.none_ratio);
  return o.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

// "name=path" or a bare path named after its stem.
std::pair<std::string, std::string> named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {fs::path(arg).stem().string(), arg};
}

// ---------------------------------------------------------------- subcommands

struct GenArgs {
  std::optional<int> n_items;
  std::optional<double> easy_fraction;
  std::optional<int> chain_length;
  std::string out = "data.jsonl";
};

void cmd_gen(Run& run, const GenArgs& a) {
  auto& s = run.settings();
  if (a.n_items) s.taskgen.n_items = *a.n_items;
  if (a.easy_fraction) s.taskgen.easy_fraction = *a.easy_fraction;
  if (a.chain_length) s.taskgen.chain_length = *a.chain_length;
  run.args() = {{"out", a.out}};
  const auto items = generate_dataset(s.taskgen, default_spec(s).grammar);
  const auto p = run.output(a.out);
  write_items(p, items);
  run.out() << "wrote " << items.size() << " items to " << p << "\n";
}

struct ImprintArgs {
  std::string data;
  std::optional<int> steps;
  std::string out = "base.snap";
};

void cmd_imprint(Run& run, const ImprintArgs& a) {
  auto& s = run.settings();
  if (a.steps) s.imprint_steps = *a.steps;
  run.args() = {{"data", a.data}, {"out", a.out}};
  const auto items = load_items(a.data);
  const ModelSpec spec = default_spec(s);
  check_compat(items, spec);
  GatedLinearPolicy policy(spec);
  const auto base = imprint(policy, s, items);
  const auto p = run.output(a.out);
  save_snapshot(p, spec, base);
  run.out() << "imprinted base policy (" << s.imprint_steps << " steps) to " << p << "\n";
}

struct LabelArgs {
  std::string data, policy;
  std::optional<double> tau_fast, tau_slow;
  std::optional<int> n_rollouts;
  std::string out = "labeled.jsonl";
  std::string discards = "discards.jsonl";
  std::string stats = "label_stats.json";
};

void cmd_label(Run& run, const LabelArgs& a) {
  auto& s = run.settings();
  if (a.tau_fast) s.labeler.tau_fast = *a.tau_fast;
  if (a.tau_slow) s.labeler.tau_slow = *a.tau_slow;
  if (a.n_rollouts) s.labeler.n_rollouts = *a.n_rollouts;
  s.labeler.validate();
  run.args() = {{"data", a.data}, {"policy", a.policy}, {"out", a.out}, {"discards", a.discards}, {"stats", a.stats}};
  const auto items = load_items(a.data);
  const auto loaded = load_policy(a.policy);
  check_compat(items, loaded.spec);
  GatedLinearPolicy policy(loaded.spec);
  const auto res = label_dataset(policy, loaded.snapshot, items, s.labeler);
  write_labeled(run.output(a.out), res.labeled);
  write_discards(run.output(a.discards), res.discarded);
  write_json(run.output(a.stats), to_json(res.stats));
  print_stats(run.out(), res.stats);
}

struct TrainArgs {
  std::string labeled, policy;
  std::optional<int> n, m, steps, batch_size, checkpoint_every;
  std::optional<double> lr, beta;
  std::string log = "train_log.jsonl";
  std::string final_snapshot = "final.snap";
  std::string dump_groups;
};

void cmd_train(Run& run, const TrainArgs& a) {
  auto& s = run.settings();
  if (a.n) s.train.n = *a.n;
  if (a.m) s.train.m = *a.m;
  if (a.steps) s.train.max_steps = *a.steps;
  if (a.batch_size) s.train.batch_size = *a.batch_size;
  if (a.lr) s.train.lr = *a.lr;
  if (a.beta) s.train.kl_beta = *a.beta;
  if (a.checkpoint_every) s.checkpoint_every = *a.checkpoint_every;
  s.validate();
  run.args() = {{"labeled", a.labeled}, {"policy", a.policy}, {"log", a.log},
                {"final", a.final_snapshot}, {"dump_groups", a.dump_groups}};
  require_file(a.labeled, "labeled dataset");
  const auto labeled = read_labeled(a.labeled);
  if (labeled.empty()) throw FormatError("labeled dataset '" + a.labeled + "' is empty");

  ModelSpec spec = default_spec(s);
  std::optional<PolicySnapshot> base;
  if (!a.policy.empty()) {
    auto loaded = load_policy(a.policy);
    spec = loaded.spec;
    base = loaded.snapshot.as(SnapshotRole::Reference, 0);
  }
  std::vector<QAItem> items;
  for (const auto& l : labeled) items.push_back(l.item);
  check_compat(items, spec);
  GatedLinearPolicy policy(spec);
  if (!base) {
    // No base given: imprint one from the labeled items so the run is self-contained.
    base = imprint(policy, s, items);
  }

  std::vector<json> group_rows;
  const bool dump = !a.dump_groups.empty();
  std::vector<std::string> ckpts;
  auto on_step = [&](const TrainerState& st, const StepMetrics& m) {
    if (dump) {
      for (const auto& g : st.last_groups()) {
        json row = to_json(g, spec.grammar);
        row["step"] = m.step;
        group_rows.push_back(std::move(row));
      }
    }
    if (s.checkpoint_every > 0 && (m.step + 1) % s.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%05d.snap", m.step + 1);
      save_snapshot(run.output(name), spec, st.current());
    }
  };
  const auto res = train(policy, s.train, labeled, *base, on_step);
  write_train_log(run.output(a.log), res.log);
  save_snapshot(run.output(a.final_snapshot), spec, res.final_policy);
  if (dump) write_jsonl(run.output(a.dump_groups), group_rows);
  const auto& last = res.log.empty() ? StepMetrics{} : res.log.back();
  run.out() << "trained " << res.log.size() << " steps; last step reward " << num(last.mean_reward) << " accuracy "
            << num(last.mean_accuracy) << "\n";
}

struct EvalArgs {
  std::string data, policy, forced, prompt = "dual";
  std::optional<int> samples;
  std::string out = "eval.json";
};

void cmd_eval(Run& run, const EvalArgs& a) {
  auto& s = run.settings();
  if (a.samples) s.eval_samples = *a.samples;
  s.validate();
  run.args() = {{"data", a.data}, {"policy", a.policy}, {"forced", a.forced}, {"prompt", a.prompt}, {"out", a.out}};
  auto ec = eval_config(s);
  ec.gen.prompt = parse_prompt_style(a.prompt);
  if (!a.forced.empty()) ec.forced_mode = parse_mode(a.forced);
  const auto items = load_items(a.data);
  const auto loaded = load_policy(a.policy);
  check_compat(items, loaded.spec);
  GatedLinearPolicy policy(loaded.spec);
  const auto rep = evaluate(policy, loaded.snapshot, items, ec);
  write_json(run.output(a.out), to_json(rep));
  run.out() << "all  " << summary_line(rep.all) << "\neasy " << summary_line(rep.easy) << "\nhard "
            << summary_line(rep.hard) << "\n";
}

struct AblateArgs {
  std::string data, eval_data, policy;
  std::string sweep = "m,threshold";
  std::string out = "ablation.csv";
};

struct Cell {
  std::string sweep, name;
  int m = 0;
  double tau_fast = 0, tau_slow = 0;
  bool random_labels = false;
};

void cmd_ablate(Run& run, const AblateArgs& a) {
  auto& s = run.settings();
  s.validate();
  run.args() = {{"data", a.data}, {"eval_data", a.eval_data}, {"policy", a.policy}, {"sweep", a.sweep}, {"out", a.out}};
  std::vector<Cell> cells;
  const double tf = s.labeler.tau_fast, ts = s.labeler.tau_slow;
  const int n = s.train.n;
  for (const auto& part : split(a.sweep, ',')) {
    if (part == "m") {
      for (int m : {0, n / 2, n}) cells.push_back({"m", "m" + std::to_string(m), m, tf, ts, false});
    } else if (part == "threshold") {
      const std::pair<double, double> grid[] = {{tf / 2, ts}, {tf, ts}, {tf, ts * 1.25}};
      for (auto [f, sl] : grid) cells.push_back({"threshold", "tau_" + num(f) + "_" + num(sl), n / 2, f, sl, false});
      cells.push_back({"threshold", "none", n / 2, 0, 0, true});
    } else {
      throw ConfigError("unknown sweep '" + part + "' (expected m or threshold)");
    }
  }

  std::ostringstream csv;
  csv << "sweep,cell,m,tau_fast,tau_slow,fast_labels,slow_labels,status,accuracy,mean_len,ratio_f,easy_accuracy,"
         "hard_accuracy,error\n";
  int failed = 0;
  if (!cells.empty()) {
    const auto items = load_items(a.data);
    const auto held = load_items(a.eval_data);
    const auto loaded = load_policy(a.policy);
    check_compat(items, loaded.spec);
    check_compat(held, loaded.spec);
    GatedLinearPolicy policy(loaded.spec);
    const auto& base = loaded.snapshot;
    // One labeling transcript serves every threshold cell.
    std::vector<ItemMeasurement> transcript;
    bool need_transcript = std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return !c.random_labels; });
    if (need_transcript) {
      s.labeler.validate();
      for (const auto& it : items) transcript.push_back(measure_item(policy, base, it, s.labeler));
    }
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      const Cell& c = cells[ci];
      const std::string dir = "cells/" + c.sweep + "_" + c.name + "/";
      std::vector<std::string> row{c.sweep, c.name, std::to_string(c.m)};
      row.push_back(c.random_labels ? "" : num(c.tau_fast));
      row.push_back(c.random_labels ? "" : num(c.tau_slow));
      try {
        const std::uint64_t cell_seed = derive_seed(s.seed, fnv1a(c.sweep + "/" + c.name));
        std::vector<LabeledItem> labeled;
        if (c.random_labels) {
          labeled = random_label_baseline(items, cell_seed);
        } else {
          labeled = apply_thresholds(items, transcript, c.tau_fast, c.tau_slow).labeled;
        }
        const auto nf = std::count_if(labeled.begin(), labeled.end(), [](const auto& l) { return l.mode == Mode::Fast; });
        row.push_back(std::to_string(nf));
        row.push_back(std::to_string(labeled.size() - nf));
        if (labeled.empty()) throw ConfigError("no items survive labeling");
        TrainConfig tc = s.train;
        tc.m = c.m;
        tc.seed = cell_seed;
        const auto res = train(policy, tc, labeled, base);
        write_train_log(run.output(dir + "train_log.jsonl"), res.log);
        auto ec = eval_config(s);
        ec.seed = derive_seed(cell_seed, 1);
        const auto rep = evaluate(policy, res.final_policy, held, ec);
        write_json(run.output(dir + "eval.json"), to_json(rep));
        row.push_back("ok");
        row.push_back(num(rep.all.accuracy));
        row.push_back(num(rep.all.mean_len));
        row.push_back(num(rep.all.fast_ratio));
        row.push_back(num(rep.easy.accuracy));
        row.push_back(num(rep.hard.accuracy));
        row.push_back("");
        run.out() << "cell " << c.sweep << "/" << c.name << ": " << summary_line(rep.all) << "\n";
      } catch (const std::exception& e) {
        ++failed;
        row.resize(7);
        row.insert(row.end(), {"failed", "", "", "", "", "", e.what()});
        run.out() << "cell " << c.sweep << "/" << c.name << " failed: " << e.what() << "\n";
      }
      for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << csv_field(row[i]);
      csv << "\n";
    }
  }
  write_text(run.output(a.out), csv.str());
  run.out() << cells.size() << " cells, " << failed << " failed\n";
}

struct ReportArgs {
  std::vector<std::string> logs, evals;
  std::string budgets;
};

void cmd_report(Run& run, const ReportArgs& a) {
  run.args() = {{"logs", a.logs}, {"evals", a.evals}, {"budgets", a.budgets}};
  if (!a.logs.empty()) {
    std::ostringstream fr;
    fr << "run,step,fast_ratio_free,mean_len_fast,mean_len_slow,mean_accuracy\n";
    for (const auto& arg : a.logs) {
      const auto [name, p] = named_path(arg);
      require_file(p, "training log");
      for (const auto& m : read_train_log(p)) {
        auto o = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
        fr << csv_field(name) << "," << m.step << "," << o(m.fast_ratio_free) << "," << o(m.mean_len_fast) << ","
           << o(m.mean_len_slow) << "," << num(m.mean_accuracy) << "\n";
      }
    }
    write_text(run.output("fast_ratio.csv"), fr.str());
  }
  if (!a.evals.empty()) {
    std::vector<std::pair<std::string, EvalReport>> reports;
    for (const auto& arg : a.evals) {
      const auto [name, p] = named_path(arg);
      require_file(p, "eval report");
      try {
        reports.emplace_back(name, report_from_json(read_json(p)));
      } catch (const FormatError& e) {
        throw FormatError(p + ": " + e.what());
      }
    }
    std::vector<int> budgets;
    if (a.budgets.empty()) {
      int hi = 0;
      for (const auto& [_, r] : reports) hi = std::max(hi, r.max_len);
      for (int b = 4; b <= std::max(hi, 4); b += 4) budgets.push_back(b);
    } else {
      for (const auto& t : split(a.budgets, ',')) {
        try {
          budgets.push_back(std::stoi(t));
        } catch (const std::exception&) {
          throw ConfigError("bad budget '" + t + "'");
        }
      }
    }
    std::sort(budgets.begin(), budgets.end());
    budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());

    std::ostringstream bc;
    bc << "budget";
    std::vector<std::vector<std::pair<int, double>>> curves;
    for (const auto& [name, r] : reports) {
      bc << "," << csv_field(name);
      curves.push_back(budget_curve(r, budgets));
    }
    bc << "\n";
    for (std::size_t i = 0; i < budgets.size(); ++i) {
      bc << budgets[i];
      for (const auto& c : curves) bc << "," << num(c[i].second);
      bc << "\n";
    }
    write_text(run.output("budget_curve.csv"), bc.str());

    std::ostringstream ml;
    ml << "source,difficulty,prefix,responses,mean_len,accuracy\n";
    for (const auto& [name, r] : reports) {
      for (auto d : {Difficulty::Easy, Difficulty::Hard}) {
        for (auto p : {Prefix::Fast, Prefix::Slow, Prefix::None}) {
          int cnt = 0, correct = 0;
          double len = 0;
          for (const auto& rec : r.records) {
            if (rec.difficulty != d || rec.prefix != p) continue;
            ++cnt;
            len += rec.length;
            correct += rec.correct;
          }
          if (cnt == 0) continue;
          ml << csv_field(name) << "," << to_string(d) << "," << to_string(p) << "," << cnt << "," << num(len / cnt)
             << "," << num(static_cast<double>(correct) / cnt) << "\n";
        }
      }
    }
    write_text(run.output("mode_lengths.csv"), ml.str());
  }
  run.out() << "report: " << a.logs.size() << " logs, " << a.evals.size() << " eval reports\n";
}

void emit_error(std::ostream& err, const std::string& sub, const char* kind, const std::string& msg) {
  err << json{{"error", kind}, {"subcommand", sub}, {"message", msg}}.dump() << std::endl;
}

}  // namespace

// ---------------------------------------------------------------- entry

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-mode thinking RL pipeline at desk scale"};
  app.name("dmrl");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "flat JSON config file");
  auto* seed_opt = app.add_option("--seed", seed_value, "seed for every stage");
  app.add_option("--out-dir", g.out_dir, "directory for outputs");
  app.add_option("--profile", g.profile, "hyperparameter profile")->check(CLI::IsMember({"paper", "toy"}));
  app.set_version_flag("--version", std::string(kToolVersion));

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  gen_cmd->add_option("--n-items", gen.n_items);
  gen_cmd->add_option("--easy-fraction", gen.easy_fraction);
  gen_cmd->add_option("--chain-length", gen.chain_length);
  gen_cmd->add_option("--out", gen.out);

  ImprintArgs imp;
  auto* imp_cmd = app.add_subcommand("imprint", "fit the base policy to teacher traces");
  imp_cmd->add_option("--data", imp.data)->required();
  imp_cmd->add_option("--steps", imp.steps);
  imp_cmd->add_option("--out", imp.out);

  LabelArgs lab;
  auto* lab_cmd = app.add_subcommand("label", "label items fast/slow from base-policy lengths");
  lab_cmd->add_option("--data", lab.data)->required();
  lab_cmd->add_option("--policy", lab.policy)->required();
  lab_cmd->add_option("--tau-fast", lab.tau_fast);
  lab_cmd->add_option("--tau-slow", lab.tau_slow);
  lab_cmd->add_option("--n-rollouts", lab.n_rollouts);
  lab_cmd->add_option("--out", lab.out);
  lab_cmd->add_option("--discards", lab.discards);
  lab_cmd->add_option("--stats", lab.stats);

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "hybrid-sampled GRPO training");
  tr_cmd->add_option("--labeled", tr.labeled)->required();
  tr_cmd->add_option("--policy", tr.policy, "base snapshot; imprinted from the labeled items if omitted");
  tr_cmd->add_option("--n", tr.n);
  tr_cmd->add_option("--m", tr.m);
  tr_cmd->add_option("--steps", tr.steps);
  tr_cmd->add_option("--batch-size", tr.batch_size);
  tr_cmd->add_option("--lr", tr.lr);
  tr_cmd->add_option("--beta", tr.beta);
  tr_cmd->add_option("--checkpoint-every", tr.checkpoint_every);
  tr_cmd->add_option("--log", tr.log);
  tr_cmd->add_option("--final", tr.final_snapshot);
  tr_cmd->add_option("--dump-groups", tr.dump_groups, "write every rollout group as JSON lines");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a snapshot");
  ev_cmd->add_option("--data", ev.data)->required();
  ev_cmd->add_option("--policy", ev.policy)->required();
  ev_cmd->add_option("--forced", ev.forced)->check(CLI::IsMember({"fast", "slow"}));
  ev_cmd->add_option("--prompt", ev.prompt)->check(CLI::IsMember({"dual", "plain"}));
  ev_cmd->add_option("--samples", ev.samples);
  ev_cmd->add_option("--out", ev.out);

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "free-rollout and threshold sweeps");
  ab_cmd->add_option("--data", ab.data)->required();
  ab_cmd->add_option("--eval-data", ab.eval_data)->required();
  ab_cmd->add_option("--policy", ab.policy)->required();
  ab_cmd->add_option("--sweep", ab.sweep, "comma list of m, threshold; empty for none");
  ab_cmd->add_option("--out", ab.out);

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "plot-ready CSVs from logs and eval reports");
  rep_cmd->add_option("--log", rep.logs, "[name=]train_log.jsonl, repeatable");
  rep_cmd->add_option("--eval", rep.evals, "[name=]eval.json, repeatable");
  rep_cmd->add_option("--budgets", rep.budgets, "comma list of token budgets");

  std::vector<const char*> argv{"dmrl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::string sub = "";
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    emit_error(err, sub, "usage", e.what());
    return kExitUsage;
  }
  sub = app.get_subcommands().front()->get_name();

  try {
    Settings s = Settings::for_profile(g.profile);
    if (!g.config_path.empty()) {
      require_file(g.config_path, "config file");
      s.apply(read_json(g.config_path));
    }
    if (seed_opt->count() > 0) s.seed = seed_value;
    s.propagate_seed();
    fs::create_directories(g.out_dir);
    Run r(sub, g, s, out);
    if (sub == "gen") cmd_gen(r, gen);
    else if (sub == "imprint") cmd_imprint(r, imp);
    else if (sub == "label") cmd_label(r, lab);
    else if (sub == "train") cmd_train(r, tr);
    else if (sub == "eval") cmd_eval(r, ev);
    else if (sub == "ablate") cmd_ablate(r, ab);
    else if (sub == "report") cmd_report(r, rep);
    r.finish();
    return 0;
  } catch (const ConfigError& e) {
    emit_error(err, sub, "config", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    emit_error(err, sub, "format", e.what());
    return kExitFormat;
  } catch (const NumericError& e) {
    emit_error(err, sub, "numeric", e.what());
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    emit_error(err, sub, "io", e.what());
    return kExitFormat;
  } catch (const std::exception& e) {
    emit_error(err, sub, "internal", e.what());
    return kExitOther;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace dmrl::cli
