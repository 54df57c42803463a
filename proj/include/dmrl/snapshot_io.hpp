#pragma once

#include <string>

#include "dmrl/policy.hpp"

namespace dmrl {

/// Snapshot file layout (version 1):
///
///   line 1   "dmrl-snapshot 1"
///   line 2   one JSON object: model spec, role, version, num_params
///   rest     num_params IEEE-754 binary64 values, little-endian
void save_snapshot(const std::string& path, const ModelSpec& spec, const PolicySnapshot& snapshot);

struct LoadedSnapshot {
  ModelSpec spec;
  PolicySnapshot snapshot;
};

LoadedSnapshot load_snapshot(const std::string& path);

}  // namespace dmrl
