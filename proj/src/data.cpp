#include "gbcc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "gbcc/errors.hpp"
#include "gbcc/rng.hpp"

namespace gbcc::data {

namespace {

constexpr char kMagic[4] = {'G', 'B', 'M', 'V'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const std::filesystem::path& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw data_error("truncated file: " + path.string());
}

void check_finite(const Matrix& m, const std::filesystem::path& path) {
  for (std::int64_t i = 0; i < m.rows; ++i)
    for (std::int64_t j = 0; j < m.cols; ++j)
      if (!std::isfinite(m(i, j)))
        throw data_error("non-finite value at row " + std::to_string(i) + " col " +
                         std::to_string(j) + " of " + path.string());
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::int64_t MultiViewDataset::truth_clusters() const {
  if (!labels) return 0;
  std::set<std::int64_t> distinct(labels->begin(), labels->end());
  return static_cast<std::int64_t>(distinct.size());
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path.string());
  write_bytes(out, kMagic, 4);
  write_bytes(out, &kVersion, 4);
  const auto rows = static_cast<std::uint64_t>(m.rows);
  const auto cols = static_cast<std::uint64_t>(m.cols);
  write_bytes(out, &rows, 8);
  write_bytes(out, &cols, 8);
  write_bytes(out, m.data.data(), m.data.size() * sizeof(double));
  if (!out) throw data_error("write failed: " + path.string());
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("not a matrix file (bad magic): " + path.string());
  std::uint32_t version = 0;
  read_bytes(in, &version, 4, path);
  if (version != kVersion)
    throw data_error("unsupported matrix file version " + std::to_string(version) + ": " +
                     path.string());
  std::uint64_t rows = 0, cols = 0;
  read_bytes(in, &rows, 8, path);
  read_bytes(in, &cols, 8, path);
  if (rows == 0 || cols == 0 || rows > (1ull << 32) || cols > (1ull << 32))
    throw data_error("implausible matrix shape in " + path.string());
  Matrix m = Matrix::zeros(static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols));
  read_bytes(in, m.data.data(), m.data.size() * sizeof(double), path);
  check_finite(m, path);
  return m;
}

void save_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  for (std::int64_t j = 0; j < m.cols; ++j) out << (j ? ",f" : "f") << j;
  out << "\n";
  for (std::int64_t i = 0; i < m.rows; ++i) {
    for (std::int64_t j = 0; j < m.cols; ++j) {
      if (j) out << ",";
      out << format_double(m(i, j));
    }
    out << "\n";
  }
  if (!out) throw data_error("write failed: " + path.string());
}

Matrix load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty csv: " + path.string());
  std::vector<std::vector<double>> rows;
  std::int64_t cols = -1;
  std::int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || (end && *end != '\0' && *end != '\r' && *end != ' '))
        throw data_error("unparseable cell '" + cell + "' at line " +
                         std::to_string(lineno) + " of " + path.string());
      row.push_back(v);
    }
    if (cols < 0)
      cols = static_cast<std::int64_t>(row.size());
    else if (static_cast<std::int64_t>(row.size()) != cols)
      throw data_error("ragged csv row at line " + std::to_string(lineno) + " of " +
                       path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty() || cols < 1) throw data_error("csv has no data rows: " + path.string());
  Matrix m = Matrix::zeros(static_cast<std::int64_t>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), m.row(static_cast<std::int64_t>(i)));
  check_finite(m, path);
  return m;
}

void save_labels(const std::filesystem::path& path,
                 const std::vector<std::int64_t>& labels) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  for (auto l : labels) out << l << "\n";
  if (!out) throw data_error("write failed: " + path.string());
}

std::vector<std::int64_t> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  std::vector<std::int64_t> labels;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      labels.push_back(std::stoll(line));
    } catch (const std::exception&) {
      throw data_error("unparseable label at line " + std::to_string(lineno) + " of " +
                       path.string());
    }
  }
  if (labels.empty()) throw data_error("label file is empty: " + path.string());
  return labels;
}

void minmax_scale(Matrix& m) {
  for (std::int64_t j = 0; j < m.cols; ++j) {
    double lo = m(0, j), hi = m(0, j);
    for (std::int64_t i = 1; i < m.rows; ++i) {
      lo = std::min(lo, m(i, j));
      hi = std::max(hi, m(i, j));
    }
    const double span = hi - lo;
    for (std::int64_t i = 0; i < m.rows; ++i)
      m(i, j) = span > 0 ? (m(i, j) - lo) / span : 0.0;
  }
}

MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw data_error("cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  MultiViewDataset ds;
  ds.name = manifest_path.stem().string();
  std::optional<std::filesystem::path> label_path;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::stringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    if (kind == "name") {
      ss >> ds.name;
    } else if (kind == "view") {
      std::string file, opt;
      if (!(ss >> file)) throw data_error("view directive without a file in manifest");
      bool scale = false;
      while (ss >> opt) {
        if (opt == "minmax")
          scale = true;
        else
          throw data_error("unknown view option '" + opt + "' in manifest");
      }
      const auto path = base / file;
      Matrix m = path.extension() == ".csv" ? load_csv(path) : load_matrix(path);
      if (scale) minmax_scale(m);
      ds.views.push_back(std::move(m));
      ds.view_names.push_back(std::filesystem::path(file).stem().string());
    } else if (kind == "labels") {
      std::string file;
      if (!(ss >> file)) throw data_error("labels directive without a file in manifest");
      label_path = base / file;
    } else {
      throw data_error("unknown manifest directive '" + kind + "'");
    }
  }
  if (ds.views.empty()) throw data_error("manifest lists no views: " + manifest_path.string());
  for (std::size_t v = 1; v < ds.views.size(); ++v)
    if (ds.views[v].rows != ds.views[0].rows)
      throw data_error("view rows differ: '" + ds.view_names[0] + "' has " +
                       std::to_string(ds.views[0].rows) + ", '" + ds.view_names[v] +
                       "' has " + std::to_string(ds.views[v].rows));
  if (label_path) {
    auto labels = load_labels(*label_path);
    if (static_cast<std::int64_t>(labels.size()) != ds.views[0].rows)
      throw data_error("label count " + std::to_string(labels.size()) +
                       " does not match view rows " + std::to_string(ds.views[0].rows));
    ds.labels = std::move(labels);
  }
  return ds;
}

std::filesystem::path save_dataset(const std::filesystem::path& dir, const std::string& name,
                                   const std::vector<Matrix>& views,
                                   const std::vector<std::int64_t>* labels) {
  if (views.empty()) throw contract_error("save_dataset needs at least one view");
  std::filesystem::create_directories(dir);
  const auto manifest_path = dir / "manifest.txt";
  std::ofstream out(manifest_path);
  if (!out) throw data_error("cannot write " + manifest_path.string());
  out << "name " << name << "\n";
  for (std::size_t v = 0; v < views.size(); ++v) {
    const std::string file = "view" + std::to_string(v) + ".gbmv";
    save_matrix(dir / file, views[v]);
    out << "view " << file << "\n";
  }
  if (labels) {
    save_labels(dir / "labels.txt", *labels);
    out << "labels labels.txt\n";
  }
  if (!out) throw data_error("write failed: " + manifest_path.string());
  return manifest_path;
}

MultiViewDataset synth(const SynthSpec& spec) {
  if (spec.clusters < 2) throw config_error("synth needs at least 2 clusters");
  if (spec.views < 2) throw config_error("synth needs at least 2 views");
  if (spec.per_cluster < 1) throw config_error("per-cluster count must be >= 1");
  if (spec.latent_dim < 1) throw config_error("latent dimension must be >= 1");
  if (spec.sigma < 0) throw config_error("sigma must be >= 0");
  if (static_cast<std::int64_t>(spec.dims.size()) != spec.views)
    throw config_error("synth needs one feature dimension per view (got " +
                       std::to_string(spec.dims.size()) + " for " +
                       std::to_string(spec.views) + " views)");
  for (auto d : spec.dims)
    if (d < 1) throw config_error("view dimensions must be >= 1");

  const std::int64_t k = spec.clusters;
  const std::int64_t n = k * spec.per_cluster;
  const std::int64_t ld = spec.latent_dim;

  // Latent centers with a minimum mutual separation so relative noise keyed
  // to the mean center distance cannot blur the closest pair.
  Rng center_rng = Rng::derive(spec.seed, {0xC1});
  Matrix centers = Matrix::zeros(k, ld);
  const double min_sep = std::sqrt(static_cast<double>(ld)) / 2.0;
  for (std::int64_t i = 0; i < k; ++i) {
    for (int attempt = 0;; ++attempt) {
      for (std::int64_t j = 0; j < ld; ++j) centers(i, j) = center_rng.normal();
      bool ok = true;
      for (std::int64_t q = 0; q < i && ok; ++q) {
        double d2 = 0.0;
        for (std::int64_t j = 0; j < ld; ++j) {
          const double diff = centers(i, j) - centers(q, j);
          d2 += diff * diff;
        }
        ok = d2 >= min_sep * min_sep;
      }
      if (ok) break;
      if (attempt > 10000)
        throw numeric_error("could not place separated cluster centers; "
                            "reduce clusters or raise latent dimension");
    }
  }

  MultiViewDataset ds;
  ds.name = spec.name;
  std::vector<std::int64_t> labels(n);
  for (std::int64_t i = 0; i < n; ++i) labels[i] = i / spec.per_cluster;

  for (std::int64_t v = 0; v < spec.views; ++v) {
    const std::int64_t dv = spec.dims[v];
    Rng map_rng = Rng::derive(spec.seed, {0xC2, static_cast<std::uint64_t>(v)});
    Matrix a = Matrix::randn(ld, dv, map_rng, 1.0 / std::sqrt(static_cast<double>(ld)));

    // Mapped centers and their mean pairwise distance (the view's spread).
    Matrix mc = Matrix::zeros(k, dv);
    for (std::int64_t i = 0; i < k; ++i)
      for (std::int64_t j = 0; j < dv; ++j) {
        double s = 0.0;
        for (std::int64_t t = 0; t < ld; ++t) s += centers(i, t) * a(t, j);
        mc(i, j) = s;
      }
    double spread = 0.0;
    std::int64_t pairs = 0;
    for (std::int64_t i = 0; i < k; ++i)
      for (std::int64_t q = i + 1; q < k; ++q) {
        double d2 = 0.0;
        for (std::int64_t j = 0; j < dv; ++j) {
          const double diff = mc(i, j) - mc(q, j);
          d2 += diff * diff;
        }
        spread += std::sqrt(d2);
        ++pairs;
      }
    spread /= static_cast<double>(pairs);
    const double noise = spec.sigma * spread;

    Rng noise_rng = Rng::derive(spec.seed, {0xC3, static_cast<std::uint64_t>(v)});
    Matrix x = Matrix::zeros(n, dv);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < dv; ++j)
        x(i, j) = mc(labels[i], j) + noise * noise_rng.normal();
    ds.views.push_back(std::move(x));
    ds.view_names.push_back("view" + std::to_string(v));
  }
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace gbcc::data
