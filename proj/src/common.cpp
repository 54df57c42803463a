#include "dmrl/common.hpp"

#include <cstdio>

namespace dmrl {

std::string_view to_string(Mode m) { return m == Mode::Fast ? "fast" : "slow"; }

std::string_view to_string(Prefix p) {
  switch (p) {
    case Prefix::Fast: return "fast";
    case Prefix::Slow: return "slow";
    case Prefix::None: return "none";
  }
  return "none";
}

std::string_view to_string(PromptStyle p) { return p == PromptStyle::Plain ? "plain" : "dual"; }

std::string_view to_string(Difficulty d) { return d == Difficulty::Easy ? "easy" : "hard"; }

Mode parse_mode(std::string_view s) {
  if (s == "fast") return Mode::Fast;
  if (s == "slow") return Mode::Slow;
  throw FormatError("unknown thinking mode '" + std::string(s) + "'");
}

Difficulty parse_difficulty(std::string_view s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "hard") return Difficulty::Hard;
  throw FormatError("unknown difficulty '" + std::string(s) + "'");
}

PromptStyle parse_prompt_style(std::string_view s) {
  if (s == "plain") return PromptStyle::Plain;
  if (s == "dual") return PromptStyle::DualMode;
  throw FormatError("unknown prompt style '" + std::string(s) + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) throw ConfigError("uniform_index: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dmrl
