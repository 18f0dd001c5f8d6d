#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gbcc/matrix.hpp"
#include "gbcc/model.hpp"

namespace gbcc::ckpt {

// TrainConfig as a JSON object string and back. Unknown keys are rejected.
std::string config_to_json(const model::TrainConfig& cfg);
model::TrainConfig config_from_json(const std::string& text);
model::TrainConfig load_config_file(const std::filesystem::path& path);

struct Checkpoint {
  model::TrainConfig cfg;
  std::vector<std::int64_t> view_dims;
  std::int64_t epoch = 0;
  std::int64_t adam_step = 0;
  std::vector<std::pair<std::string, Matrix>> params;
  std::vector<Matrix> adam_m, adam_v;  // present iff adam_step > 0
};

// Container: magic "GBCK", u32 version (=1), u64 JSON header length, the
// header (config echo, view dims, epoch, adam step, parameter names), then
// each parameter as u64 rows, u64 cols, f64 payload, then the Adam moment
// matrices in the same layout when adam_step > 0. Little-endian throughout.
void save(const std::filesystem::path& path, model::Trainer& trainer);
Checkpoint load(const std::filesystem::path& path);

// Rebuilds a trainer over the given views from checkpoint state. View count
// and dimensions must match the config echo.
model::Trainer restore(const Checkpoint& ck, std::vector<Matrix> views);

}  // namespace gbcc::ckpt
