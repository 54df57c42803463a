#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dmrl/imprint.hpp"
#include "dmrl/labeler.hpp"
#include "dmrl/taskgen.hpp"
#include "dmrl/trainer.hpp"

namespace dmrl::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Every tunable value of a run. A profile fills the defaults, a flat JSON config
/// file overrides them and command-line flags override the file.
struct Settings {
  std::string profile = "toy";
  std::uint64_t seed = 1;
  TaskGenConfig taskgen;
  TeacherConfig teacher;
  int imprint_steps = 1500;
  ImprintOptions imprint;
  LabelerConfig labeler;
  TrainConfig train;
  int checkpoint_every = 0;  // 0 keeps only the final snapshot
  int eval_samples = 4;
  double eval_temperature = 1.0;
  int eval_max_len = 64;

  static Settings for_profile(std::string_view name);
  /// Flat key/value view; keys are what a config file may set.
  nlohmann::json to_json() const;
  /// Throws ConfigError on an unknown key or a value of the wrong type.
  void apply(const nlohmann::json& flat);
  /// Copies `seed` into every module config.
  void propagate_seed();
  void validate() const;
};

/// Written next to every subcommand's outputs as <subcommand>.manifest.json.
struct RunManifest {
  std::string subcommand;
  std::string run_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string profile;
  nlohmann::json config;  // resolved settings plus subcommand arguments
  std::vector<std::string> outputs;
  std::string version{kToolVersion};
  nlohmann::json to_json() const;
};

/// Runs the command line. Failures print one JSON object on `err` and return nonzero:
/// 2 for usage and configuration errors, 3 for unreadable or malformed files,
/// 4 for numeric failures, 1 otherwise.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace dmrl::cli
