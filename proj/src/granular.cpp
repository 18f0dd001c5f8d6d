#include "gbcc/granular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gbcc/errors.hpp"
#include "gbcc/kernels.hpp"

namespace gbcc::granular {

namespace {
const kernels::Ops& K() { return kernels::active(); }

// Detached center (mean) and radius (mean distance to center) of a row subset.
void plain_stats(const Matrix& h, const std::vector<std::int64_t>& rows,
                 std::vector<double>& center, double& radius) {
  const std::int64_t d = h.cols;
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  center.assign(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t r : rows) K().axpy(1.0, h.row(r), center.data(), d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& c : center) c *= inv_n;
  radius = 0.0;
  for (std::int64_t r : rows) {
    double s = 0.0;
    const double* x = h.row(r);
    for (std::int64_t j = 0; j < d; ++j) {
      const double diff = center[static_cast<std::size_t>(j)] - x[j];
      s += diff * diff;
    }
    radius += std::sqrt(s);
  }
  radius *= inv_n;
}

// Builds a Ball from latent rows, ordered by ascending global id.
Ball make_ball(const diff::NodePtr& h, const std::vector<std::int64_t>& rows,
               const std::vector<std::int64_t>& global_ids) {
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;  // (gid, row)
  pairs.reserve(rows.size());
  for (std::int64_t r : rows) pairs.emplace_back(global_ids[static_cast<std::size_t>(r)], r);
  std::sort(pairs.begin(), pairs.end());
  Ball b;
  b.member_ids.reserve(pairs.size());
  b.local_rows.reserve(pairs.size());
  for (const auto& [gid, row] : pairs) {
    b.member_ids.push_back(gid);
    b.local_rows.push_back(row);
  }
  auto [center, radius] = ball_stats(diff::gather_rows(h, b.local_rows));
  b.center = std::move(center);
  b.radius = std::move(radius);
  return b;
}

BallSet finalize_set(const diff::NodePtr& h, std::vector<std::vector<std::int64_t>> groups,
                     const std::vector<std::int64_t>& global_ids) {
  BallSet s;
  s.balls.reserve(groups.size());
  std::vector<diff::NodePtr> centers;
  centers.reserve(groups.size());
  for (auto& g : groups) {
    s.balls.push_back(make_ball(h, g, global_ids));
    centers.push_back(s.balls.back().center);
    s.radii.push_back(s.balls.back().radius->scalar());
  }
  s.centers = diff::concat_rows(centers);
  compute_overlap(s);
  return s;
}

struct KmRun {
  std::vector<std::int64_t> assignments;
  Matrix centroids;
  double sse;
  int iterations;
};

KmRun kmeans_once(const Matrix& x, std::int64_t k, Rng& rng, int max_iters) {
  const std::int64_t n = x.rows, d = x.cols;
  Matrix c(k, d);
  // k-means++ seeding
  {
    const std::int64_t first = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    std::copy_n(x.row(first), d, c.row(0));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        const double diff = x(i, j) - c(0, j);
        s += diff * diff;
      }
      d2[static_cast<std::size_t>(i)] = s;
    }
    for (std::int64_t t = 1; t < k; ++t) {
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      std::int64_t pick;
      if (total > 0.0) {
        const double r = rng.uniform() * total;
        double cum = 0.0;
        pick = n - 1;
        for (std::int64_t i = 0; i < n; ++i) {
          cum += d2[static_cast<std::size_t>(i)];
          if (cum > r) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      }
      std::copy_n(x.row(pick), d, c.row(t));
      for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          const double diff = x(i, j) - c(t, j);
          s += diff * diff;
        }
        auto& cur = d2[static_cast<std::size_t>(i)];
        cur = std::min(cur, s);
      }
    }
  }

  std::vector<std::int64_t> assign(static_cast<std::size_t>(n), -1);
  std::vector<std::int64_t> prev;
  Matrix dists(n, k);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(k));
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    K().sq_dists(n, k, d, x.data.data(), c.data.data(), dists.data.data());
    for (std::int64_t i = 0; i < n; ++i) {
      std::int64_t best = 0;
      double bd = dists(i, 0);
      for (std::int64_t j = 1; j < k; ++j)
        if (dists(i, j) < bd) {
          bd = dists(i, j);
          best = j;
        }
      assign[static_cast<std::size_t>(i)] = best;
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (std::int64_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    // reseed empty clusters to the point farthest from its nearest centroid
    for (std::int64_t j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      std::int64_t far = -1;
      double far_d = -1.0;
      for (std::int64_t i = 0; i < n; ++i) {
        // never steal the sole member of another cluster
        if (counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] < 2) continue;
        double nearest = dists(i, 0);
        for (std::int64_t jj = 1; jj < k; ++jj) nearest = std::min(nearest, dists(i, jj));
        if (nearest > far_d) {
          far_d = nearest;
          far = i;
        }
      }
      if (far < 0) continue;  // unreachable for k < n; defensive
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = j;
      ++counts[static_cast<std::size_t>(j)];
      std::copy_n(x.row(far), d, c.row(j));
      for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t jj = 0; jj < d; ++jj) {
          const double diff = x(i, jj) - c(j, jj);
          s += diff * diff;
        }
        dists(i, j) = s;
      }
    }
    const bool fixpoint = (assign == prev);
    // means of the (non-empty) clusters
    std::fill(c.data.begin(), c.data.end(), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      K().axpy(1.0, x.row(i), c.row(assign[static_cast<std::size_t>(i)]), d);
    for (std::int64_t j = 0; j < k; ++j)
      if (counts[static_cast<std::size_t>(j)] > 0)
        K().scale(c.row(j), 1.0 / static_cast<double>(counts[static_cast<std::size_t>(j)]), c.row(j), d);
    if (fixpoint) {
      ++iter;
      break;
    }
    prev = assign;
  }
  double sse = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    const double* cj = c.row(assign[static_cast<std::size_t>(i)]);
    for (std::int64_t j = 0; j < d; ++j) {
      const double diff = xi[j] - cj[j];
      sse += diff * diff;
    }
  }
  return {std::move(assign), std::move(c), sse, iter};
}
}  // namespace

std::pair<diff::NodePtr, diff::NodePtr> ball_stats(const diff::NodePtr& points) {
  const std::int64_t n = points->value.rows;
  if (n < 1) throw contract_error("ball_stats: empty point set");
  diff::NodePtr center = diff::col_mean(points);
  diff::NodePtr norms = diff::row_norms(diff::sub_rowvec(points, center));
  diff::NodePtr radius = diff::scale(diff::sum(norms), 1.0 / static_cast<double>(n));
  return {std::move(center), std::move(radius)};
}

KmeansResult kmeans(const Matrix& x, std::int64_t k, Rng& rng, int max_iters, int restarts) {
  const std::int64_t n = x.rows;
  if (k < 1) throw config_error("kmeans: k must be at least 1");
  if (k > n) throw config_error("kmeans: k = " + std::to_string(k) + " exceeds point count " +
                                std::to_string(n));
  if (restarts < 1) throw contract_error("kmeans: restarts must be at least 1");
  if (k == n) {
    // one point per cluster; SSE 0 is optimal
    KmeansResult r;
    r.assignments.resize(static_cast<std::size_t>(n));
    std::iota(r.assignments.begin(), r.assignments.end(), 0);
    r.centroids = x;
    return r;
  }
  KmRun best{{}, Matrix(), std::numeric_limits<double>::infinity(), 0};
  for (int t = 0; t < restarts; ++t) {
    KmRun run = kmeans_once(x, k, rng, max_iters);
    if (run.sse < best.sse) best = std::move(run);
  }
  return {std::move(best.assignments), std::move(best.centroids), best.sse, best.iterations};
}

BallSet generate_balls_kmeans(const diff::NodePtr& h, std::int64_t p,
                              const std::vector<std::int64_t>& global_ids, Rng& rng) {
  const std::int64_t n = h->value.rows;
  if (n < 1) throw contract_error("generate_balls_kmeans: empty batch");
  if (p < 1) throw contract_error("generate_balls_kmeans: granularity must be at least 1");
  if (static_cast<std::int64_t>(global_ids.size()) != n)
    throw contract_error("generate_balls_kmeans: id count does not match row count");
  const std::int64_t k = std::max<std::int64_t>(n / p, 1);
  KmeansResult km = kmeans(h->value, k, rng);
  std::vector<std::vector<std::int64_t>> groups(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < n; ++i)
    groups[static_cast<std::size_t>(km.assignments[static_cast<std::size_t>(i)])].push_back(i);
  return finalize_set(h, std::move(groups), global_ids);
}

BallSet generate_balls_classic(const Matrix& h, std::int64_t eta,
                               const std::vector<std::int64_t>& global_ids, Rng& rng) {
  const std::int64_t n = h.rows;
  if (n < 1) throw contract_error("generate_balls_classic: empty input");
  if (eta < 1) throw contract_error("generate_balls_classic: capacity threshold must be at least 1");
  if (static_cast<std::int64_t>(global_ids.size()) != n)
    throw contract_error("generate_balls_classic: id count does not match row count");

  // recursive 2-means splitting (iterative, deterministic order)
  std::vector<std::vector<std::int64_t>> leaves;
  std::vector<std::vector<std::int64_t>> stack;
  {
    std::vector<std::int64_t> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    stack.push_back(std::move(all));
  }
  std::vector<double> ctr;
  while (!stack.empty()) {
    std::vector<std::int64_t> rows = std::move(stack.back());
    stack.pop_back();
    const std::int64_t cnt = static_cast<std::int64_t>(rows.size());
    bool split = false;
    std::vector<std::int64_t> left, right;
    // a split is admissible only when both children stay at or above the
    // capacity floor eta (no undersized ball may be created)
    if (cnt >= 2 * eta) {
      double parent_r;
      plain_stats(h, rows, ctr, parent_r);
      if (parent_r > 0.0) {
        Matrix sub(cnt, h.cols);
        for (std::int64_t i = 0; i < cnt; ++i)
          std::copy_n(h.row(rows[static_cast<std::size_t>(i)]), h.cols, sub.row(i));
        KmeansResult km = kmeans(sub, 2, rng);
        for (std::int64_t i = 0; i < cnt; ++i)
          (km.assignments[static_cast<std::size_t>(i)] == 0 ? left : right)
              .push_back(rows[static_cast<std::size_t>(i)]);
        if (static_cast<std::int64_t>(left.size()) >= eta &&
            static_cast<std::int64_t>(right.size()) >= eta) {
          double r1, r2;
          plain_stats(h, left, ctr, r1);
          plain_stats(h, right, ctr, r2);
          const double child_avg =
              (static_cast<double>(left.size()) * r1 + static_cast<double>(right.size()) * r2) /
              static_cast<double>(cnt);
          split = parent_r > child_avg;
        }
      }
    }
    if (split) {
      stack.push_back(std::move(right));
      stack.push_back(std::move(left));
    } else {
      leaves.push_back(std::move(rows));
    }
  }

  // merge overlapping pairs, closest gap first, until stable
  while (leaves.size() > 1) {
    const std::int64_t k = static_cast<std::int64_t>(leaves.size());
    Matrix centers(k, h.cols);
    std::vector<double> radii(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) {
      double r;
      plain_stats(h, leaves[static_cast<std::size_t>(i)], ctr, r);
      std::copy(ctr.begin(), ctr.end(), centers.row(i));
      radii[static_cast<std::size_t>(i)] = r;
    }
    Matrix a = overlap_matrix(centers, radii);
    std::int64_t bi = -1, bj = -1;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < k; ++i)
      for (std::int64_t j = i + 1; j < k; ++j) {
        if (a(i, j) == 0.0) continue;
        double s = 0.0;
        for (std::int64_t c = 0; c < h.cols; ++c) {
          const double diff = centers(i, c) - centers(j, c);
          s += diff * diff;
        }
        const double gap = std::sqrt(s) - (radii[static_cast<std::size_t>(i)] +
                                           radii[static_cast<std::size_t>(j)]);
        if (gap < best_gap) {
          best_gap = gap;
          bi = i;
          bj = j;
        }
      }
    if (bi < 0) break;
    auto& dst = leaves[static_cast<std::size_t>(bi)];
    auto& src = leaves[static_cast<std::size_t>(bj)];
    dst.insert(dst.end(), src.begin(), src.end());
    std::sort(dst.begin(), dst.end());
    leaves.erase(leaves.begin() + bj);
  }

  diff::NodePtr hc = diff::constant(h);
  return finalize_set(hc, std::move(leaves), global_ids);
}

Matrix overlap_matrix(const Matrix& centers, const std::vector<double>& radii,
                      std::vector<std::int64_t>* counts_out) {
  const std::int64_t k = centers.rows;
  if (static_cast<std::int64_t>(radii.size()) != k)
    throw contract_error("overlap_matrix: radius count does not match center count");
  Matrix gap(k, k);
  K().sq_dists(k, k, centers.cols, centers.data.data(), centers.data.data(), gap.data.data());
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < k; ++j)
      gap(i, j) = std::sqrt(gap(i, j)) -
                  (radii[static_cast<std::size_t>(i)] + radii[static_cast<std::size_t>(j)]);
  // pass 1: strict geometric overlap counts
  std::vector<std::int64_t> strict(static_cast<std::size_t>(k), 0);
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < k; ++j)
      if (i != j && gap(i, j) < 0.0) ++strict[static_cast<std::size_t>(i)];
  // pass 2: tolerance given by the strict counts
  Matrix a(k, k);
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = i + 1; j < k; ++j) {
      const std::int64_t pmin =
          std::min(strict[static_cast<std::size_t>(i)], strict[static_cast<std::size_t>(j)]);
      const double omega = pmin > 0 ? std::min(radii[static_cast<std::size_t>(i)],
                                               radii[static_cast<std::size_t>(j)]) /
                                          static_cast<double>(pmin)
                                    : 0.0;
      if (gap(i, j) < omega) a(i, j) = a(j, i) = 1.0;
    }
  if (counts_out) {
    counts_out->assign(static_cast<std::size_t>(k), 0);
    for (std::int64_t i = 0; i < k; ++i) {
      std::int64_t c = 0;
      for (std::int64_t j = 0; j < k; ++j) c += a(i, j) != 0.0;
      (*counts_out)[static_cast<std::size_t>(i)] = c;
    }
  }
  return a;
}

void compute_overlap(BallSet& s) {
  s.overlap = overlap_matrix(s.centers->value, s.radii, &s.overlap_counts);
}

}  // namespace gbcc::granular
