#pragma once

#include <cstdint>
#include <vector>

#include "gbcc/matrix.hpp"
#include "gbcc/rng.hpp"

namespace gbcc::eval {

struct Metrics {
  double acc = 0.0;
  double nmi = 0.0;
  double pur = 0.0;
};

// Equal-weight view fusion: Z = (1/V) sum_v H^v. Views must share shape.
Matrix fuse(const std::vector<Matrix>& h_views);

// Best-SSE k-means labels over restarts; deterministic for a fixed rng state.
std::vector<std::int64_t> cluster(const Matrix& z, std::int64_t k, Rng& rng,
                                  int restarts = 10);

// Exact minimum-cost assignment on a square cost matrix (shortest augmenting
// paths with potentials, O(dim^3)). Returns col_of_row.
std::vector<std::int64_t> min_cost_assignment(const Matrix& cost);

// Fraction matched under the best one-to-one mapping between predicted and
// true labels (optimal assignment on the contingency matrix).
double accuracy(const std::vector<std::int64_t>& pred,
                const std::vector<std::int64_t>& truth);

// Mutual information normalized by the geometric mean of the entropies
// (natural logs). Identical partitions give 1; a zero-entropy side gives 0
// unless both sides are constant (identical single-cluster partitions).
double nmi(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& truth);

// Mean over predicted clusters' majority-class fractions.
double purity(const std::vector<std::int64_t>& pred,
              const std::vector<std::int64_t>& truth);

Metrics evaluate(const std::vector<std::int64_t>& pred,
                 const std::vector<std::int64_t>& truth);

}  // namespace gbcc::eval
