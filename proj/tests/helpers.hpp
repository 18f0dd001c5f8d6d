#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <doctest.h>

#include "gbcc/diff.hpp"
#include "gbcc/matrix.hpp"

namespace testutil {

using gbcc::Matrix;
using gbcc::diff::NodePtr;

// Builds a scalar loss from leaf nodes; must be a pure function of the values.
using GraphBuilder = std::function<NodePtr(const std::vector<NodePtr>&)>;

inline double eval_loss(const GraphBuilder& build, const std::vector<Matrix>& inputs) {
  std::vector<NodePtr> leaves;
  leaves.reserve(inputs.size());
  for (const auto& m : inputs) leaves.push_back(gbcc::diff::leaf(m));
  return build(leaves)->scalar();
}

// Central finite differences against the analytic gradient of every input.
// rel = |a - n| / max(|a|, |n|, 1).
inline void check_gradients(const std::vector<Matrix>& inputs, const GraphBuilder& build,
                            double h = 1e-6, double tol = 1e-5) {
  std::vector<NodePtr> leaves;
  leaves.reserve(inputs.size());
  for (const auto& m : inputs) leaves.push_back(gbcc::diff::leaf(m));
  NodePtr loss = build(leaves);
  gbcc::diff::backward(loss);
  for (std::size_t li = 0; li < inputs.size(); ++li) {
    const Matrix& grad = leaves[li]->ensure_grad();
    for (std::int64_t i = 0; i < inputs[li].rows; ++i)
      for (std::int64_t j = 0; j < inputs[li].cols; ++j) {
        std::vector<Matrix> plus = inputs, minus = inputs;
        plus[li](i, j) += h;
        minus[li](i, j) -= h;
        const double numeric = (eval_loss(build, plus) - eval_loss(build, minus)) / (2.0 * h);
        const double analytic = grad(i, j);
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
        const double rel = std::fabs(analytic - numeric) / denom;
        INFO("input ", li, " entry (", i, ",", j, "): analytic ", analytic, " numeric ", numeric);
        CHECK(rel < tol);
      }
  }
}

inline Matrix random_matrix(std::int64_t r, std::int64_t c, gbcc::Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  return Matrix::rand_uniform(r, c, rng, lo, hi);
}

// Entries bounded away from zero (for relu / norms near kinks).
inline Matrix random_matrix_away_from_zero(std::int64_t r, std::int64_t c, gbcc::Rng& rng,
                                           double min_abs = 0.5, double max_abs = 2.0) {
  Matrix m(r, c);
  for (auto& x : m.data) {
    const double mag = rng.uniform(min_abs, max_abs);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return m;
}

// |a - b| <= tol * max(1, |a|, |b|) elementwise.
inline void check_close(const Matrix& a, const Matrix& b, double tol = 1e-12) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < a.cols; ++j) {
      const double d = std::fabs(a(i, j) - b(i, j));
      const double bound = tol * std::max({1.0, std::fabs(a(i, j)), std::fabs(b(i, j))});
      INFO("entry (", i, ",", j, "): ", a(i, j), " vs ", b(i, j));
      CHECK(d <= bound);
    }
}

}  // namespace testutil
