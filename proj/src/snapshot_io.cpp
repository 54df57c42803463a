#include "dmrl/snapshot_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace dmrl {

static_assert(std::endian::native == std::endian::little, "snapshot files assume a little-endian host");

namespace {
constexpr const char* kMagic = "dmrl-snapshot 1";
}

void save_snapshot(const std::string& path, const ModelSpec& spec, const PolicySnapshot& snapshot) {
  nlohmann::json header = {
      {"answer_values", spec.grammar.answer_values()},
      {"body_positions", spec.grammar.body_positions()},
      {"with_prefixes", spec.grammar.has_prefixes()},
      {"feature_dim", spec.feature_dim},
      {"question_vocab", spec.question_vocab},
      {"position_buckets", spec.position_buckets},
      {"role", std::string(to_string(snapshot.role()))},
      {"version", snapshot.version()},
      {"num_params", snapshot.size()},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open snapshot for writing: " + path);
  out << kMagic << '\n' << header.dump() << '\n';
  const auto p = snapshot.params();
  out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out) throw FormatError("failed writing snapshot: " + path);
}

LoadedSnapshot load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot: " + path);
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kMagic) throw FormatError(path + ": not a dmrl snapshot (bad header line)");
  std::getline(in, header_line);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_line);
    ModelSpec spec{ResponseGrammar(h.at("answer_values").get<int>(), h.at("body_positions").get<int>(),
                                   h.at("with_prefixes").get<bool>()),
                   h.at("feature_dim").get<int>(), h.at("question_vocab").get<int>(),
                   h.at("position_buckets").get<int>()};
    const auto n = h.at("num_params").get<std::size_t>();
    if (GatedLinearPolicy(spec).num_params() != n)
      throw FormatError(path + ": parameter count does not match the model spec");
    std::vector<double> params(n);
    in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) throw FormatError(path + ": truncated snapshot");
    return {spec, PolicySnapshot(std::move(params), parse_snapshot_role(h.at("role").get<std::string>()),
                                 h.at("version").get<std::int64_t>())};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad snapshot header: " + e.what());
  }
}

}  // namespace dmrl
