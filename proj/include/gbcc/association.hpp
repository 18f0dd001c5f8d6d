#pragma once

#include <cstdint>
#include <vector>

#include "gbcc/granular.hpp"
#include "gbcc/matrix.hpp"

namespace gbcc::assoc {

// Unified 2k x 2k contrastive mask [[A^m, P],[P^T, A^n]] with the per-row
// positive (Omega) and negative (Phi) index sets materialized. Rows with an
// empty Omega or Phi contribute nothing to the loss.
struct MaskMatrix {
  Matrix m;
  std::vector<std::vector<std::int64_t>> positives;
  std::vector<std::vector<std::int64_t>> negatives;
};

// Cross-view ball association: entry (i,j) is 1 iff the shared-member count
// of ball i in the first set and ball j in the second is at least tau times
// the smaller ball's size. Both sets must partition the same id universe and
// have equal ball counts.
Matrix cross_association(const granular::BallSet& s_m, const granular::BallSet& s_n, double tau);

MaskMatrix assemble_mask(const Matrix& a_m, const Matrix& a_n, const Matrix& p_mn);

}  // namespace gbcc::assoc
