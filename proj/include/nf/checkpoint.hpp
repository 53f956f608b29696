#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "nf/functional.hpp"

namespace nf {

/// Little-endian float64 file I/O shared by checkpoints and datasets.
void write_f64_le(const std::filesystem::path& path, std::span<const double> values);
/// Reads exactly `expected` doubles; IoError names expected vs actual bytes.
std::vector<double> read_f64_le(const std::filesystem::path& path, std::size_t expected);

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

/// A checkpoint is a directory with model.json (descriptor) and params.bin
/// (flat little-endian float64, parameters in descriptor order).
void save_checkpoint(const FunctionalModel& model, const std::filesystem::path& dir,
                     const nlohmann::json& metadata = nlohmann::json::object());
FunctionalModel load_checkpoint(const std::filesystem::path& dir);
nlohmann::json read_checkpoint_descriptor(const std::filesystem::path& dir);

}  // namespace nf
