#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gbcc/matrix.hpp"

namespace gbcc::data {

struct MultiViewDataset {
  std::string name;
  std::vector<Matrix> views;
  std::vector<std::string> view_names;  // file stems, used for export tags
  std::optional<std::vector<std::int64_t>> labels;

  std::int64_t samples() const { return views.empty() ? 0 : views[0].rows; }
  std::int64_t truth_clusters() const;  // distinct label values, 0 when unlabeled
};

// Binary matrix container: magic "GBMV", u32 version (=1), u64 rows, u64
// cols, then rows*cols f64 values, row-major, all little-endian.
void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

// CSV with one header row; cells must parse as finite doubles.
void save_csv(const std::filesystem::path& path, const Matrix& m);
Matrix load_csv(const std::filesystem::path& path);

// One integer label per line.
void save_labels(const std::filesystem::path& path,
                 const std::vector<std::int64_t>& labels);
std::vector<std::int64_t> load_labels(const std::filesystem::path& path);

// In-place per-column min-max scaling to [0,1]; constant columns map to 0.
void minmax_scale(Matrix& m);

// Manifest: plain text, one directive per line, paths relative to the
// manifest's directory. '#' starts a comment.
//   name <dataset name>
//   view <file> [minmax]     (.csv loads as CSV, anything else as binary)
//   labels <file>
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes dir/manifest.txt plus view<i>.gbmv files (and labels.txt when
// labels are given). Returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& dir,
                                   const std::string& name,
                                   const std::vector<Matrix>& views,
                                   const std::vector<std::int64_t>* labels);

struct SynthSpec {
  std::int64_t clusters = 3;
  std::int64_t per_cluster = 100;
  std::int64_t views = 2;
  std::vector<std::int64_t> dims;  // per-view feature dims, size == views
  double sigma = 0.1;              // noise std as a fraction of the mapped center spread
  std::int64_t latent_dim = 8;
  std::uint64_t seed = 1;
  std::string name = "synth";
};

// Shared latent cluster centers; each view applies an independent random
// linear map and adds Gaussian noise with per-coordinate std sigma times
// that view's mean pairwise mapped-center distance. Labels are the planted
// cluster ids, cluster-major order.
MultiViewDataset synth(const SynthSpec& spec);

}  // namespace gbcc::data
