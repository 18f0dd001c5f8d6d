#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gbcc/diff.hpp"
#include "gbcc/matrix.hpp"
#include "gbcc/rng.hpp"

namespace gbcc::granular {

// One ball over a subset of the batch. Center and radius live in the
// computation graph of the latent matrix they were built from; member ids
// are constants.
struct Ball {
  std::vector<std::int64_t> member_ids;   // global sample ids, sorted ascending
  std::vector<std::int64_t> local_rows;   // rows in the batch latent matrix, same order
  diff::NodePtr center;                   // 1 x d
  diff::NodePtr radius;                   // 1 x 1, >= 0
  std::int64_t count() const { return static_cast<std::int64_t>(member_ids.size()); }
};

struct BallSet {
  int view_id = 0;
  std::vector<Ball> balls;
  diff::NodePtr centers;                     // k x d, rows in ball order
  std::vector<double> radii;                 // detached radius values
  Matrix overlap;                            // k x k binary, filled by compute_overlap
  std::vector<std::int64_t> overlap_counts;  // row sums of the final overlap matrix
  std::int64_t k() const { return static_cast<std::int64_t>(balls.size()); }
};

// Mean center and mean distance-to-center radius, differentiable w.r.t. the
// point rows. points must have >= 1 row.
std::pair<diff::NodePtr, diff::NodePtr> ball_stats(const diff::NodePtr& points);

struct KmeansResult {
  std::vector<std::int64_t> assignments;  // length N, values in [0, k)
  Matrix centroids;                       // k x d
  double sse = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm from k-means++ seeding; stops at an assignment fixpoint
// or max_iters. Empty clusters are reseeded to the point farthest from its
// nearest centroid (and that point is reassigned), so all k clusters end
// non-empty. restarts > 1 keeps the lowest-SSE run.
KmeansResult kmeans(const Matrix& x, std::int64_t k, Rng& rng, int max_iters = 100,
                    int restarts = 1);

// k = max(floor(N / p), 1) balls from k-means clusters on the latent rows.
// Assignments are detached; centers/radii differentiable through h.
BallSet generate_balls_kmeans(const diff::NodePtr& h, std::int64_t p,
                              const std::vector<std::int64_t>& global_ids, Rng& rng);

// Classic construction: recursive 2-means splitting (a ball splits when its
// member count exceeds eta and its radius exceeds the count-weighted mean of
// its children's radii), then repeated merging of overlapping pairs until
// stable. Operates on detached features.
BallSet generate_balls_classic(const Matrix& h, std::int64_t eta,
                               const std::vector<std::int64_t>& global_ids, Rng& rng);

// Pairwise overlap in two passes: strict geometric overlap counts first,
// then the tolerance test gap < omega with omega = min(r_i, r_j) / min(p_i, p_j)
// (omega = 0 when either strict count is zero). Returns a symmetric binary
// matrix with zero diagonal; counts_out, when given, receives the row sums
// of the returned matrix.
Matrix overlap_matrix(const Matrix& centers, const std::vector<double>& radii,
                      std::vector<std::int64_t>* counts_out = nullptr);

// Fills s.overlap and s.overlap_counts from s.centers / s.radii.
void compute_overlap(BallSet& s);

}  // namespace gbcc::granular
