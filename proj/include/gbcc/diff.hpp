#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "gbcc/matrix.hpp"

namespace gbcc::diff {

class Node;
using NodePtr = std::shared_ptr<Node>;

// Scratch gradients for one backward traversal. Kept separate from the
// persistent Node::grad so repeated backward calls accumulate correctly.
class BackwardPass {
 public:
  Matrix& of(const Node* n);

 private:
  std::unordered_map<const Node*, Matrix> buf_;
};

// One vertex of the computation DAG. Graphs are rebuilt per step; leaves
// (parameters) persist across steps and carry accumulated gradients.
class Node {
 public:
  Matrix value;
  Matrix grad;  // lazily allocated, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(const Matrix& gout, BackwardPass& pass, Node& self)> backprop;

  Matrix& ensure_grad() {
    if (!grad.same_shape(value)) grad = Matrix::zeros(value.rows, value.cols);
    return grad;
  }
  void zero_grad() {
    if (grad.same_shape(value))
      std::fill(grad.data.begin(), grad.data.end(), 0.0);
  }
  double scalar() const { return value.data.empty() ? 0.0 : value.data[0]; }
};

NodePtr constant(Matrix v);
NodePtr leaf(Matrix v);

// --- elementwise / linear algebra ---
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);  // Hadamard
NodePtr scale(const NodePtr& x, double alpha);
NodePtr relu(const NodePtr& x);

// --- broadcasting over rows (v is 1 x n) ---
NodePtr add_rowvec(const NodePtr& x, const NodePtr& v);
NodePtr sub_rowvec(const NodePtr& x, const NodePtr& v);

// --- reductions / reshaping ---
NodePtr sum(const NodePtr& x);               // -> 1x1
NodePtr col_mean(const NodePtr& x);          // m x n -> 1 x n
NodePtr row_norms(const NodePtr& x);         // m x n -> m x 1 (L2)
NodePtr gather_rows(const NodePtr& x, std::vector<std::int64_t> rows);
NodePtr concat_rows(const std::vector<NodePtr>& parts);

// --- normalizations ---
// Per-column z-score over the batch (population std), guarded by eps.
NodePtr standardize(const NodePtr& x, double eps = 1e-8);
// Rows scaled to unit L2 norm, guarded by eps.
NodePtr row_l2_normalize(const NodePtr& x, double eps = 1e-12);

// Pairwise cosine similarities: out(i,j) = u_i . v_j / (|u_i||v_j| + eps).
// u and v may be the same node.
NodePtr cosine_matrix(const NodePtr& u, const NodePtr& v, double eps = 1e-12);

// InfoNCE-style masked loss over a square logit matrix. For each anchor row
// i with non-empty positives omega[i] and negatives phi[i]:
//   -log( exp(L_ij) / (exp(L_ij) + sum_{z in phi_i} exp(L_iz)) )   summed
// over j in omega[i]; rows with empty omega or phi are skipped. The total is
// divided by k_norm. Log-sum-exp stabilized.
NodePtr masked_infonce(const NodePtr& logits,
                       const std::vector<std::vector<std::int64_t>>& omega,
                       const std::vector<std::vector<std::int64_t>>& phi,
                       std::int64_t k_norm);

// Reverse-mode sweep from a 1x1 loss. Visits each reachable node once in
// topological order and adds this pass's gradients into Node::grad, so
// calling twice without zeroing doubles the gradients.
void backward(const NodePtr& loss);

// Zero grads of every node reachable from root (test utility; training code
// zeroes its parameter list explicitly).
void zero_all_grads(const NodePtr& root);

struct DebugStats {
  std::uint64_t cosine_zero_norm_rows = 0;
};
DebugStats& debug_stats();

}  // namespace gbcc::diff
