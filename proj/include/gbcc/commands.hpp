#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gbcc/data.hpp"
#include "gbcc/model.hpp"

namespace gbcc::cmd {

struct SynthArgs {
  std::filesystem::path out;
  data::SynthSpec spec;
};

struct TrainArgs {
  std::filesystem::path data_manifest;
  std::filesystem::path out;
  model::TrainConfig cfg;
  std::optional<std::filesystem::path> resume;  // continue from a checkpoint;
                                                // cfg.epochs sets the total target
  int eval_restarts = 10;
  bool quiet = false;  // suppress per-epoch progress on stderr
};

struct EvaluateArgs {
  std::filesystem::path data_manifest;
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> out;  // directory for metrics/prediction files
  std::int64_t k = 0;                        // 0: use the label count
  int restarts = 10;
};

struct SweepArgs {
  std::filesystem::path data_manifest;
  std::filesystem::path out;
  model::TrainConfig cfg;  // base config; each cell overrides p and d
  std::vector<std::int64_t> p_grid = {1, 2, 4, 8, 16};
  std::vector<std::int64_t> d_grid = {8, 16, 32, 64, 128, 256};
  int eval_restarts = 10;
};

struct ExportArgs {
  std::filesystem::path data_manifest;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  bool csv = false;  // write csv alongside the binary matrices
};

// Each command throws gbcc errors; run_guarded maps them to exit codes
// (0 ok, 2 config, 3 data, 4 numeric, 1 internal).
int synth(const SynthArgs& args);
int train(const TrainArgs& args);
int evaluate(const EvaluateArgs& args);
int sweep(const SweepArgs& args);
int export_embeddings(const ExportArgs& args);

int run_guarded(const std::function<int()>& fn);

}  // namespace gbcc::cmd
