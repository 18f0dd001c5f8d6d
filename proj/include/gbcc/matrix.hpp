#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gbcc/errors.hpp"
#include "gbcc/rng.hpp"

namespace gbcc {

// Row-major dense matrix of 64-bit floats. The only array type in the
// project; vectors are 1xN or Nx1, scalars 1x1.
struct Matrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::int64_t r, std::int64_t c)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {
    if (r < 0 || c < 0) throw shape_error("matrix dimensions must be non-negative");
  }

  static Matrix zeros(std::int64_t r, std::int64_t c) { return Matrix(r, c); }

  static Matrix full(std::int64_t r, std::int64_t c, double v) {
    Matrix m(r, c);
    for (auto& x : m.data) x = v;
    return m;
  }

  static Matrix identity(std::int64_t n) {
    Matrix m(n, n);
    for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rws) {
    const std::int64_t r = static_cast<std::int64_t>(rws.size());
    const std::int64_t c = r > 0 ? static_cast<std::int64_t>(rws.begin()->size()) : 0;
    Matrix m(r, c);
    std::int64_t i = 0;
    for (const auto& rw : rws) {
      if (static_cast<std::int64_t>(rw.size()) != c)
        throw shape_error("ragged initializer");
      std::int64_t j = 0;
      for (double v : rw) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  static Matrix randn(std::int64_t r, std::int64_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& x : m.data) x = rng.normal() * scale;
    return m;
  }

  static Matrix rand_uniform(std::int64_t r, std::int64_t c, Rng& rng, double lo, double hi) {
    Matrix m(r, c);
    for (auto& x : m.data) x = rng.uniform(lo, hi);
    return m;
  }

  std::int64_t size() const { return rows * cols; }

  double* row(std::int64_t i) { return data.data() + i * cols; }
  const double* row(std::int64_t i) const { return data.data() + i * cols; }

  double& operator()(std::int64_t i, std::int64_t j) { return data[i * cols + j]; }
  double operator()(std::int64_t i, std::int64_t j) const { return data[i * cols + j]; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

// First non-finite entry, if any.
inline std::optional<std::pair<std::int64_t, std::int64_t>> find_nonfinite(const Matrix& m) {
  for (std::int64_t i = 0; i < m.rows; ++i)
    for (std::int64_t j = 0; j < m.cols; ++j)
      if (!std::isfinite(m(i, j))) return std::make_pair(i, j);
  return std::nullopt;
}

inline bool all_finite(const Matrix& m) { return !find_nonfinite(m).has_value(); }

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace gbcc
