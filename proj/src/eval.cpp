#include "gbcc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gbcc/errors.hpp"
#include "gbcc/granular.hpp"

namespace gbcc::eval {

namespace {

// Maps arbitrary label values to dense indices 0..K-1 (sorted by value).
std::vector<std::int64_t> densify(const std::vector<std::int64_t>& labels,
                                  std::int64_t& k_out) {
  std::map<std::int64_t, std::int64_t> index;
  for (auto l : labels) index.emplace(l, 0);
  std::int64_t next = 0;
  for (auto& [value, idx] : index) idx = next++;
  std::vector<std::int64_t> dense(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) dense[i] = index[labels[i]];
  k_out = next;
  return dense;
}

Matrix contingency(const std::vector<std::int64_t>& pred,
                   const std::vector<std::int64_t>& truth, std::int64_t& kp,
                   std::int64_t& kt) {
  if (pred.size() != truth.size())
    throw contract_error("label vectors differ in length: " + std::to_string(pred.size()) +
                         " vs " + std::to_string(truth.size()));
  if (pred.empty()) throw contract_error("label vectors are empty");
  auto p = densify(pred, kp);
  auto t = densify(truth, kt);
  Matrix n = Matrix::zeros(kp, kt);
  for (std::size_t i = 0; i < p.size(); ++i) n(p[i], t[i]) += 1.0;
  return n;
}

}  // namespace

Matrix fuse(const std::vector<Matrix>& h_views) {
  if (h_views.empty()) throw contract_error("fuse needs at least one view");
  Matrix z = h_views[0];
  for (std::size_t v = 1; v < h_views.size(); ++v) {
    require_same_shape(z, h_views[v], "fuse");
    for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] += h_views[v].data[i];
  }
  const double inv = 1.0 / static_cast<double>(h_views.size());
  for (auto& x : z.data) x *= inv;
  return z;
}

std::vector<std::int64_t> cluster(const Matrix& z, std::int64_t k, Rng& rng, int restarts) {
  return granular::kmeans(z, k, rng, 100, restarts).assignments;
}

std::vector<std::int64_t> min_cost_assignment(const Matrix& cost) {
  if (cost.rows != cost.cols) throw contract_error("cost matrix must be square");
  const std::int64_t dim = cost.rows;
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting paths with dual potentials; 1-based with a dummy
  // row/column 0.
  std::vector<double> u(dim + 1, 0.0), v(dim + 1, 0.0);
  std::vector<std::int64_t> p(dim + 1, 0), way(dim + 1, 0);
  for (std::int64_t i = 1; i <= dim; ++i) {
    p[0] = i;
    std::int64_t j0 = 0;
    std::vector<double> minv(dim + 1, inf);
    std::vector<char> used(dim + 1, 0);
    do {
      used[j0] = 1;
      const std::int64_t i0 = p[j0];
      std::int64_t j1 = 0;
      double delta = inf;
      for (std::int64_t j = 1; j <= dim; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::int64_t j = 0; j <= dim; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::int64_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::int64_t> col_of_row(dim, -1);
  for (std::int64_t j = 1; j <= dim; ++j)
    if (p[j] >= 1) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

double accuracy(const std::vector<std::int64_t>& pred,
                const std::vector<std::int64_t>& truth) {
  std::int64_t kp = 0, kt = 0;
  Matrix n = contingency(pred, truth, kp, kt);
  const std::int64_t dim = std::max(kp, kt);
  Matrix cost = Matrix::zeros(dim, dim);
  for (std::int64_t i = 0; i < kp; ++i)
    for (std::int64_t j = 0; j < kt; ++j) cost(i, j) = -n(i, j);
  auto col_of_row = min_cost_assignment(cost);
  double matched = 0.0;
  for (std::int64_t i = 0; i < kp; ++i)
    if (col_of_row[i] < kt) matched += n(i, col_of_row[i]);
  return matched / static_cast<double>(pred.size());
}

double nmi(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& truth) {
  std::int64_t kp = 0, kt = 0;
  Matrix n = contingency(pred, truth, kp, kt);
  const double total = static_cast<double>(pred.size());
  std::vector<double> a(kp, 0.0), b(kt, 0.0);
  for (std::int64_t i = 0; i < kp; ++i)
    for (std::int64_t j = 0; j < kt; ++j) {
      a[i] += n(i, j);
      b[j] += n(i, j);
    }
  double hp = 0.0, ht = 0.0, mi = 0.0;
  for (std::int64_t i = 0; i < kp; ++i)
    if (a[i] > 0) hp -= (a[i] / total) * std::log(a[i] / total);
  for (std::int64_t j = 0; j < kt; ++j)
    if (b[j] > 0) ht -= (b[j] / total) * std::log(b[j] / total);
  if (hp == 0.0 && ht == 0.0) return 1.0;  // both constant: identical partitions
  if (hp == 0.0 || ht == 0.0) return 0.0;
  for (std::int64_t i = 0; i < kp; ++i)
    for (std::int64_t j = 0; j < kt; ++j)
      if (n(i, j) > 0)
        mi += (n(i, j) / total) * std::log(n(i, j) * total / (a[i] * b[j]));
  double out = mi / std::sqrt(hp * ht);
  return std::clamp(out, 0.0, 1.0);
}

double purity(const std::vector<std::int64_t>& pred,
              const std::vector<std::int64_t>& truth) {
  std::int64_t kp = 0, kt = 0;
  Matrix n = contingency(pred, truth, kp, kt);
  double matched = 0.0;
  for (std::int64_t i = 0; i < kp; ++i) {
    double best = 0.0;
    for (std::int64_t j = 0; j < kt; ++j) best = std::max(best, n(i, j));
    matched += best;
  }
  return matched / static_cast<double>(pred.size());
}

Metrics evaluate(const std::vector<std::int64_t>& pred,
                 const std::vector<std::int64_t>& truth) {
  Metrics m;
  m.acc = accuracy(pred, truth);
  m.nmi = nmi(pred, truth);
  m.pur = purity(pred, truth);
  return m;
}

}  // namespace gbcc::eval
