#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dmrl {

/// Thinking mode assigned by the labeler and imposed by forced rollouts.
enum class Mode { Fast, Slow };

/// Prefix actually found at the head of a response.
enum class Prefix { Fast, Slow, None };

/// How the question is rendered to the policy. Plain is the bare question used
/// for labeling; DualMode adds the system prompt asking for a thinking prefix.
enum class PromptStyle { Plain, DualMode };

enum class Difficulty { Easy, Hard };

std::string_view to_string(Mode m);
std::string_view to_string(Prefix p);
std::string_view to_string(PromptStyle p);
std::string_view to_string(Difficulty d);

Mode parse_mode(std::string_view s);
Difficulty parse_difficulty(std::string_view s);
PromptStyle parse_prompt_style(std::string_view s);

inline Prefix to_prefix(Mode m) { return m == Mode::Fast ? Prefix::Fast : Prefix::Slow; }
inline Mode other(Mode m) { return m == Mode::Fast ? Mode::Slow : Mode::Fast; }

/// Invalid configuration or precondition violation.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input files (datasets, logs, snapshots).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared in an objective, gradient or parameter vector.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seeds are derived with splitmix64 so that every (seed, index...) tuple maps
// to an independent stream regardless of evaluation order.
std::uint64_t splitmix64(std::uint64_t x);

template <typename... Ts>
std::uint64_t derive_seed(std::uint64_t base, Ts... parts) {
  std::uint64_t h = splitmix64(base);
  ((h = splitmix64(h ^ (static_cast<std::uint64_t>(parts) + 0x9e3779b97f4a7c15ULL))), ...);
  return h;
}

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection; identical across standard libraries.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// 64-bit FNV-1a, stable across platforms and runs.
std::uint64_t fnv1a(std::string_view bytes);

std::string hex64(std::uint64_t v);

}  // namespace dmrl
