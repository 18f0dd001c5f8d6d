#include "gbcc/association.hpp"

#include <algorithm>
#include <string>

#include "gbcc/errors.hpp"

namespace gbcc::assoc {

namespace {
std::vector<std::int64_t> id_universe(const granular::BallSet& s) {
  std::vector<std::int64_t> ids;
  for (const auto& b : s.balls) ids.insert(ids.end(), b.member_ids.begin(), b.member_ids.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

// both inputs sorted ascending
std::int64_t intersection_size(const std::vector<std::int64_t>& a,
                               const std::vector<std::int64_t>& b) {
  std::int64_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib)
      ++ia;
    else if (*ib < *ia)
      ++ib;
    else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}
}  // namespace

Matrix cross_association(const granular::BallSet& s_m, const granular::BallSet& s_n, double tau) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw contract_error("cross_association: tau must be in (0, 1], got " + std::to_string(tau));
  const std::int64_t k = s_m.k();
  if (s_n.k() != k)
    throw contract_error("cross_association: ball counts differ, " + std::to_string(k) + " vs " +
                         std::to_string(s_n.k()));
  if (id_universe(s_m) != id_universe(s_n))
    throw contract_error("cross_association: ball sets cover different sample ids");
  Matrix p(k, k);
  for (std::int64_t i = 0; i < k; ++i) {
    const auto& bi = s_m.balls[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < k; ++j) {
      const auto& bj = s_n.balls[static_cast<std::size_t>(j)];
      const std::int64_t t_both = intersection_size(bi.member_ids, bj.member_ids);
      const std::int64_t t_min = std::min(bi.count(), bj.count());
      if (static_cast<double>(t_both) / static_cast<double>(t_min) >= tau) p(i, j) = 1.0;
    }
  }
  return p;
}

MaskMatrix assemble_mask(const Matrix& a_m, const Matrix& a_n, const Matrix& p_mn) {
  const std::int64_t k = a_m.rows;
  if (a_m.cols != k || a_n.rows != k || a_n.cols != k || p_mn.rows != k || p_mn.cols != k)
    throw shape_error("assemble_mask: blocks must all be " + std::to_string(k) + "x" +
                      std::to_string(k) + ", got " + a_m.shape_str() + ", " + a_n.shape_str() +
                      ", " + p_mn.shape_str());
  MaskMatrix out;
  out.m = Matrix(2 * k, 2 * k);
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < k; ++j) {
      out.m(i, j) = a_m(i, j);
      out.m(i, k + j) = p_mn(i, j);
      out.m(k + i, j) = p_mn(j, i);
      out.m(k + i, k + j) = a_n(i, j);
    }
  const std::int64_t n = 2 * k;
  out.positives.resize(static_cast<std::size_t>(n));
  out.negatives.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      (out.m(i, j) != 0.0 ? out.positives : out.negatives)[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return out;
}

}  // namespace gbcc::assoc
