#include "nf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "nf/errors.hpp"

namespace nf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
  }
}

}  // namespace

void write_f64_le(const fs::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<std::uint64_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) raw[i] = to_le(std::bit_cast<std::uint64_t>(values[i]));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint64_t)));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> read_f64_le(const fs::path& path, std::size_t expected) {
  std::error_code ec;
  const auto actual = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  const std::uintmax_t expected_bytes = static_cast<std::uintmax_t>(expected) * 8u;
  if (actual != expected_bytes) {
    throw IoError("size mismatch for " + path.string() + ": expected " + std::to_string(expected_bytes) +
                  " bytes, found " + std::to_string(actual));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint64_t> raw(expected);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected_bytes));
  if (!in) throw IoError("short read from " + path.string());
  std::vector<double> values(expected);
  for (std::size_t i = 0; i < expected; ++i) values[i] = std::bit_cast<double>(to_le(raw[i]));
  return values;
}

json spec_to_json(const ModelSpec& spec) {
  json j;
  j["kernel_type"] = to_string(spec.kind);
  j["conditioning"] = spec.kind == ModelKind::SirenFilmLocal    ? "local"
                      : spec.kind == ModelKind::SirenFilmGlobal ? "global"
                      : spec.kind == ModelKind::MlpNonlinear    ? "local"
                                                                : "none";
  j["dims"] = spec.dims;
  j["channels"] = spec.channels;
  j["width"] = spec.width;
  j["depth"] = spec.depth;
  j["omega0"] = spec.omega0;
  j["conv_size"] = spec.conv_size;
  j["input_points"] = spec.input_points;
  j["seed"] = spec.seed;
  j["coord_center"] = spec.coord_center;
  j["coord_scale"] = spec.coord_scale;
  return j;
}

ModelSpec spec_from_json(const json& j) {
  try {
    ModelSpec s;
    s.kind = model_kind_from_string(j.at("kernel_type").get<std::string>());
    s.dims = j.at("dims").get<int>();
    s.channels = j.at("channels").get<int>();
    s.width = j.at("width").get<int>();
    s.depth = j.at("depth").get<int>();
    s.omega0 = j.at("omega0").get<double>();
    s.conv_size = j.value("conv_size", 5);
    s.input_points = j.value("input_points", 0);
    s.seed = j.at("seed").get<std::uint64_t>();
    s.coord_center = j.at("coord_center").get<std::vector<double>>();
    s.coord_scale = j.at("coord_scale").get<std::vector<double>>();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid model descriptor: ") + e.what());
  }
}

void save_checkpoint(const FunctionalModel& model, const fs::path& dir, const json& metadata) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  json desc;
  desc["format_version"] = kCheckpointVersion;
  desc["model"] = spec_to_json(model.spec());
  json params = json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", offset}});
    offset += static_cast<std::size_t>(p.value.size());
  }
  desc["parameters"] = params;
  desc["scalar_count"] = offset;
  desc["dtype"] = "float64-le";
  desc["metadata"] = metadata;

  const std::vector<double> flat = model.parameters().flatten();
  write_f64_le(dir / "params.bin", flat);
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << desc.dump(2) << "\n";
}

json read_checkpoint_descriptor(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("checkpoint descriptor not found: " + (dir / "model.json").string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint descriptor: " + std::string(e.what()));
  }
}

FunctionalModel load_checkpoint(const fs::path& dir) {
  const json desc = read_checkpoint_descriptor(dir);
  if (desc.value("format_version", 0) != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(desc.value("format_version", 0)));
  }
  const ModelSpec spec = spec_from_json(desc.at("model"));
  FunctionalModel model = FunctionalModel::create(spec);
  const auto& params = desc.at("parameters");
  if (params.size() != model.parameters().size()) throw IoError("checkpoint parameter list does not match architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = model.parameters()[i];
    const auto shape = params[i].at("shape").get<std::vector<Eigen::Index>>();
    if (params[i].at("name").get<std::string>() != p.name || shape.size() != 2 || shape[0] != p.value.rows() ||
        shape[1] != p.value.cols()) {
      throw IoError("checkpoint parameter '" + params[i].at("name").get<std::string>() + "' does not match architecture");
    }
  }
  const std::vector<double> flat = read_f64_le(dir / "params.bin", model.parameters().scalar_count());
  model.parameters().assign(flat);
  return model;
}

}  // namespace nf
