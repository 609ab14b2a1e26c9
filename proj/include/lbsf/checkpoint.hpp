#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lbsf/model.hpp"

namespace lbsf {

// Layout (little-endian):
//   "LBSF" | u32 version | u32 n + config JSON
//   u32 count, then per parameter: u32 n + name | u32 ndim | u64 dims[ndim] | f32 payload
//   u32 n + metadata JSON
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::size_t epoch = 0;
    std::uint64_t seed = 0;
    std::vector<double> loss_history;
    nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
// Throws ConfigError on missing or ill-typed fields.
ModelConfig model_config_from_json(const nlohmann::json& j);

void write_checkpoint(std::ostream& out, const LbsfModel<float>& model, const CheckpointMeta& meta);
void save_checkpoint(const LbsfModel<float>& model, const std::string& path, const CheckpointMeta& meta = {});

struct LoadedCheckpoint {
    LbsfModel<float> model;
    CheckpointMeta meta;
    nlohmann::json config; // the config block as stored
};

// Throws CheckpointError on bad magic, version mismatch, truncation, or a
// parameter table that does not match the stored config.
LoadedCheckpoint read_checkpoint(std::istream& in);
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace lbsf
