#include "gbcc/diff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gbcc/errors.hpp"
#include "gbcc/kernels.hpp"

namespace gbcc::diff {

namespace {
const kernels::Ops& K() { return kernels::active(); }

NodePtr make_op(Matrix value, std::vector<NodePtr> parents,
                std::function<void(const Matrix&, BackwardPass&, Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}
}  // namespace

Matrix& BackwardPass::of(const Node* n) {
  auto it = buf_.find(n);
  if (it == buf_.end())
    it = buf_.emplace(n, Matrix::zeros(n->value.rows, n->value.cols)).first;
  return it->second;
}

DebugStats& debug_stats() {
  thread_local DebugStats stats;
  return stats;
}

NodePtr constant(Matrix v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return n;
}

NodePtr leaf(Matrix v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->value.cols != b->value.rows)
    throw shape_error("matmul: inner dimensions disagree, " + a->value.shape_str() +
                      " x " + b->value.shape_str());
  const std::int64_t m = a->value.rows, k = a->value.cols, n = b->value.cols;
  Matrix out(m, n);
  K().gemm_nn(m, k, n, a->value.data.data(), b->value.data.data(), out.data.data(), false);
  return make_op(std::move(out), {a, b}, [m, k, n](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* pa = self.parents[0].get();
    const Node* pb = self.parents[1].get();
    if (pa->requires_grad)
      K().gemm_nt(m, n, k, g.data.data(), pb->value.data.data(), pass.of(pa).data.data(), true);
    if (pb->requires_grad)
      K().gemm_tn(k, m, n, pa->value.data.data(), g.data.data(), pass.of(pb).data.data(), true);
  });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "add");
  Matrix out(a->value.rows, a->value.cols);
  K().add(a->value.data.data(), b->value.data.data(), out.data.data(), out.size());
  return make_op(std::move(out), {a, b}, [](const Matrix& g, BackwardPass& pass, Node& self) {
    for (int which = 0; which < 2; ++which) {
      const Node* p = self.parents[which].get();
      if (p->requires_grad)
        K().axpy(1.0, g.data.data(), pass.of(p).data.data(), g.size());
    }
  });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "sub");
  Matrix out(a->value.rows, a->value.cols);
  K().sub(a->value.data.data(), b->value.data.data(), out.data.data(), out.size());
  return make_op(std::move(out), {a, b}, [](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* pa = self.parents[0].get();
    const Node* pb = self.parents[1].get();
    if (pa->requires_grad) K().axpy(1.0, g.data.data(), pass.of(pa).data.data(), g.size());
    if (pb->requires_grad) K().axpy(-1.0, g.data.data(), pass.of(pb).data.data(), g.size());
  });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "mul");
  Matrix out(a->value.rows, a->value.cols);
  K().hadamard(a->value.data.data(), b->value.data.data(), out.data.data(), out.size());
  return make_op(std::move(out), {a, b}, [](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* pa = self.parents[0].get();
    const Node* pb = self.parents[1].get();
    const std::int64_t n = g.size();
    if (pa->requires_grad) {
      Matrix tmp(g.rows, g.cols);
      K().hadamard(g.data.data(), pb->value.data.data(), tmp.data.data(), n);
      K().axpy(1.0, tmp.data.data(), pass.of(pa).data.data(), n);
    }
    if (pb->requires_grad) {
      Matrix tmp(g.rows, g.cols);
      K().hadamard(g.data.data(), pa->value.data.data(), tmp.data.data(), n);
      K().axpy(1.0, tmp.data.data(), pass.of(pb).data.data(), n);
    }
  });
}

NodePtr scale(const NodePtr& x, double alpha) {
  Matrix out(x->value.rows, x->value.cols);
  K().scale(x->value.data.data(), alpha, out.data.data(), out.size());
  return make_op(std::move(out), {x}, [alpha](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* p = self.parents[0].get();
    if (p->requires_grad) K().axpy(alpha, g.data.data(), pass.of(p).data.data(), g.size());
  });
}

NodePtr relu(const NodePtr& x) {
  Matrix out(x->value.rows, x->value.cols);
  K().relu_fwd(x->value.data.data(), out.data.data(), out.size());
  return make_op(std::move(out), {x}, [](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* p = self.parents[0].get();
    if (p->requires_grad)
      K().relu_bwd(p->value.data.data(), g.data.data(), pass.of(p).data.data(), g.size());
  });
}

NodePtr add_rowvec(const NodePtr& x, const NodePtr& v) {
  if (v->value.rows != 1 || v->value.cols != x->value.cols)
    throw shape_error("add_rowvec: want 1x" + std::to_string(x->value.cols) + ", got " +
                      v->value.shape_str());
  Matrix out(x->value.rows, x->value.cols);
  for (std::int64_t i = 0; i < x->value.rows; ++i)
    K().add(x->value.row(i), v->value.row(0), out.row(i), x->value.cols);
  return make_op(std::move(out), {x, v}, [](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* px = self.parents[0].get();
    const Node* pv = self.parents[1].get();
    if (px->requires_grad) K().axpy(1.0, g.data.data(), pass.of(px).data.data(), g.size());
    if (pv->requires_grad) {
      Matrix& gv = pass.of(pv);
      for (std::int64_t i = 0; i < g.rows; ++i) K().axpy(1.0, g.row(i), gv.row(0), g.cols);
    }
  });
}

NodePtr sub_rowvec(const NodePtr& x, const NodePtr& v) {
  if (v->value.rows != 1 || v->value.cols != x->value.cols)
    throw shape_error("sub_rowvec: want 1x" + std::to_string(x->value.cols) + ", got " +
                      v->value.shape_str());
  Matrix out(x->value.rows, x->value.cols);
  for (std::int64_t i = 0; i < x->value.rows; ++i)
    K().sub(x->value.row(i), v->value.row(0), out.row(i), x->value.cols);
  return make_op(std::move(out), {x, v}, [](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* px = self.parents[0].get();
    const Node* pv = self.parents[1].get();
    if (px->requires_grad) K().axpy(1.0, g.data.data(), pass.of(px).data.data(), g.size());
    if (pv->requires_grad) {
      Matrix& gv = pass.of(pv);
      for (std::int64_t i = 0; i < g.rows; ++i) K().axpy(-1.0, g.row(i), gv.row(0), g.cols);
    }
  });
}

NodePtr sum(const NodePtr& x) {
  Matrix out(1, 1);
  out(0, 0) = K().sum(x->value.data.data(), x->value.size());
  return make_op(std::move(out), {x}, [](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    Matrix& gx = pass.of(p);
    const double g0 = g(0, 0);
    for (auto& e : gx.data) e += g0;
  });
}

NodePtr col_mean(const NodePtr& x) {
  const std::int64_t m = x->value.rows, n = x->value.cols;
  if (m < 1) throw contract_error("col_mean: empty input");
  Matrix out(1, n);
  for (std::int64_t i = 0; i < m; ++i) K().axpy(1.0, x->value.row(i), out.row(0), n);
  K().scale(out.row(0), 1.0 / static_cast<double>(m), out.row(0), n);
  return make_op(std::move(out), {x}, [m, n](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    Matrix& gx = pass.of(p);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::int64_t i = 0; i < m; ++i) K().axpy(inv_m, g.row(0), gx.row(i), n);
  });
}

NodePtr row_norms(const NodePtr& x) {
  const std::int64_t m = x->value.rows, n = x->value.cols;
  Matrix out(m, 1);
  for (std::int64_t i = 0; i < m; ++i)
    out(i, 0) = std::sqrt(K().dot(x->value.row(i), x->value.row(i), n));
  return make_op(std::move(out), {x}, [m, n](const Matrix& g, BackwardPass& pass, Node& self) {
    const Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    Matrix& gx = pass.of(p);
    for (std::int64_t i = 0; i < m; ++i) {
      const double r = self.value(i, 0);
      if (r > 0.0) K().axpy(g(i, 0) / r, p->value.row(i), gx.row(i), n);
    }
  });
}

NodePtr gather_rows(const NodePtr& x, std::vector<std::int64_t> rows) {
  const std::int64_t n = x->value.cols;
  for (std::int64_t r : rows)
    if (r < 0 || r >= x->value.rows)
      throw contract_error("gather_rows: row index " + std::to_string(r) + " out of range");
  Matrix out(static_cast<std::int64_t>(rows.size()), n);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x->value.row(rows[i]), n, out.row(static_cast<std::int64_t>(i)));
  return make_op(std::move(out), {x},
                 [rows = std::move(rows), n](const Matrix& g, BackwardPass& pass, Node& self) {
                   const Node* p = self.parents[0].get();
                   if (!p->requires_grad) return;
                   Matrix& gx = pass.of(p);
                   for (std::size_t i = 0; i < rows.size(); ++i)
                     K().axpy(1.0, g.row(static_cast<std::int64_t>(i)), gx.row(rows[i]), n);
                 });
}

NodePtr concat_rows(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw contract_error("concat_rows: no parts");
  const std::int64_t n = parts[0]->value.cols;
  std::int64_t m = 0;
  for (const auto& p : parts) {
    if (p->value.cols != n) throw shape_error("concat_rows: column counts differ");
    m += p->value.rows;
  }
  Matrix out(m, n);
  std::int64_t at = 0;
  for (const auto& p : parts) {
    std::copy_n(p->value.data.data(), p->value.size(), out.row(at));
    at += p->value.rows;
  }
  return make_op(std::move(out), parts, [](const Matrix& g, BackwardPass& pass, Node& self) {
    std::int64_t at = 0;
    for (const auto& p : self.parents) {
      if (p->requires_grad)
        K().axpy(1.0, g.row(at), pass.of(p.get()).data.data(), p->value.size());
      at += p->value.rows;
    }
  });
}

NodePtr standardize(const NodePtr& x, double eps) {
  const std::int64_t m = x->value.rows, n = x->value.cols;
  if (m < 2) throw contract_error("standardize: batch of " + std::to_string(m) + " rows is degenerate");
  std::vector<double> mu(n, 0.0), sigma(n, 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) mu[j] += x->value(i, j);
  for (std::int64_t j = 0; j < n; ++j) mu[j] /= static_cast<double>(m);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      const double c = x->value(i, j) - mu[j];
      sigma[j] += c * c;
    }
  for (std::int64_t j = 0; j < n; ++j) sigma[j] = std::sqrt(sigma[j] / static_cast<double>(m));
  Matrix out(m, n);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      out(i, j) = (x->value(i, j) - mu[j]) / (sigma[j] + eps);
  return make_op(std::move(out), {x},
                 [m, n, eps, mu = std::move(mu), sigma = std::move(sigma)](
                     const Matrix& g, BackwardPass& pass, Node& self) {
                   const Node* p = self.parents[0].get();
                   if (!p->requires_grad) return;
                   Matrix& gx = pass.of(p);
                   const double inv_m = 1.0 / static_cast<double>(m);
                   for (std::int64_t j = 0; j < n; ++j) {
                     const double s = 1.0 / (sigma[j] + eps);
                     double gsum = 0.0, gc = 0.0;
                     for (std::int64_t i = 0; i < m; ++i) {
                       const double c = p->value(i, j) - mu[j];
                       gsum += g(i, j);
                       gc += g(i, j) * c;
                     }
                     // d/dx of the centered term plus the sigma chain; the
                     // sigma term vanishes for a constant column.
                     const double sig_coef =
                         sigma[j] > 0.0 ? gc * s * s * inv_m / sigma[j] : 0.0;
                     for (std::int64_t i = 0; i < m; ++i) {
                       const double c = p->value(i, j) - mu[j];
                       gx(i, j) += s * (g(i, j) - gsum * inv_m) - sig_coef * c;
                     }
                   }
                 });
}

NodePtr row_l2_normalize(const NodePtr& x, double eps) {
  const std::int64_t m = x->value.rows, n = x->value.cols;
  std::vector<double> norms(m);
  Matrix out(m, n);
  for (std::int64_t i = 0; i < m; ++i) {
    norms[i] = std::sqrt(K().dot(x->value.row(i), x->value.row(i), n));
    K().scale(x->value.row(i), 1.0 / (norms[i] + eps), out.row(i), n);
  }
  return make_op(std::move(out), {x},
                 [m, n, eps, norms = std::move(norms)](const Matrix& g, BackwardPass& pass,
                                                       Node& self) {
                   const Node* p = self.parents[0].get();
                   if (!p->requires_grad) return;
                   Matrix& gx = pass.of(p);
                   for (std::int64_t i = 0; i < m; ++i) {
                     const double r = norms[i];
                     const double s = 1.0 / (r + eps);
                     K().axpy(s, g.row(i), gx.row(i), n);
                     if (r > 0.0) {
                       const double gdotx = K().dot(g.row(i), p->value.row(i), n);
                       K().axpy(-gdotx / (r * (r + eps) * (r + eps)), p->value.row(i), gx.row(i), n);
                     }
                   }
                 });
}

NodePtr cosine_matrix(const NodePtr& u, const NodePtr& v, double eps) {
  const std::int64_t p = u->value.rows, q = v->value.rows, d = u->value.cols;
  if (p < 1 || q < 1) throw shape_error("cosine_matrix: operands need at least one row");
  if (v->value.cols != d)
    throw shape_error("cosine_matrix: column counts differ, " + u->value.shape_str() + " vs " +
                      v->value.shape_str());
  std::vector<double> nu(p), nv(q);
  for (std::int64_t i = 0; i < p; ++i) {
    nu[i] = std::sqrt(K().dot(u->value.row(i), u->value.row(i), d));
    if (nu[i] == 0.0) ++debug_stats().cosine_zero_norm_rows;
  }
  for (std::int64_t j = 0; j < q; ++j) {
    nv[j] = std::sqrt(K().dot(v->value.row(j), v->value.row(j), d));
    if (v.get() != u.get() && nv[j] == 0.0) ++debug_stats().cosine_zero_norm_rows;
  }
  Matrix out(p, q);
  K().gemm_nt(p, d, q, u->value.data.data(), v->value.data.data(), out.data.data(), false);
  for (std::int64_t i = 0; i < p; ++i)
    for (std::int64_t j = 0; j < q; ++j) out(i, j) /= nu[i] * nv[j] + eps;
  return make_op(
      std::move(out), {u, v},
      [p, q, d, eps, nu = std::move(nu), nv = std::move(nv)](const Matrix& g, BackwardPass& pass,
                                                             Node& self) {
        const Node* pu = self.parents[0].get();
        const Node* pv = self.parents[1].get();
        // W = g / Q with Q_ij = |u_i||v_j| + eps
        Matrix w(p, q);
        for (std::int64_t i = 0; i < p; ++i)
          for (std::int64_t j = 0; j < q; ++j) w(i, j) = g(i, j) / (nu[i] * nv[j] + eps);
        if (pu->requires_grad) {
          Matrix& gu = pass.of(pu);
          K().gemm_nn(p, q, d, w.data.data(), pv->value.data.data(), gu.data.data(), true);
          for (std::int64_t i = 0; i < p; ++i) {
            if (nu[i] == 0.0) continue;
            double dn = 0.0;
            for (std::int64_t j = 0; j < q; ++j) dn -= w(i, j) * self.value(i, j) * nv[j];
            K().axpy(dn / nu[i], pu->value.row(i), gu.row(i), d);
          }
        }
        if (pv->requires_grad) {
          Matrix& gv = pass.of(pv);
          K().gemm_tn(q, p, d, w.data.data(), pu->value.data.data(), gv.data.data(), true);
          for (std::int64_t j = 0; j < q; ++j) {
            if (nv[j] == 0.0) continue;
            double dn = 0.0;
            for (std::int64_t i = 0; i < p; ++i) dn -= w(i, j) * self.value(i, j) * nu[i];
            K().axpy(dn / nv[j], pv->value.row(j), gv.row(j), d);
          }
        }
      });
}

NodePtr masked_infonce(const NodePtr& logits,
                       const std::vector<std::vector<std::int64_t>>& omega,
                       const std::vector<std::vector<std::int64_t>>& phi,
                       std::int64_t k_norm) {
  const std::int64_t n = logits->value.rows;
  if (logits->value.cols != n) throw shape_error("masked_infonce: logits must be square");
  if (static_cast<std::int64_t>(omega.size()) != n || static_cast<std::int64_t>(phi.size()) != n)
    throw contract_error("masked_infonce: mask row count mismatch");
  if (k_norm < 1) throw contract_error("masked_infonce: k_norm must be positive");
  auto in_range = [n](std::int64_t j) { return j >= 0 && j < n; };
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j : omega[i])
      if (!in_range(j)) throw contract_error("masked_infonce: positive index out of range");
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t z : phi[i])
      if (!in_range(z)) throw contract_error("masked_infonce: negative index out of range");
  const Matrix& L = logits->value;
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (omega[i].empty() || phi[i].empty()) continue;
    double mx = -HUGE_VAL;
    for (std::int64_t j : omega[i]) mx = std::max(mx, L(i, j));
    for (std::int64_t z : phi[i]) mx = std::max(mx, L(i, z));
    double negsum = 0.0;
    for (std::int64_t z : phi[i]) negsum += std::exp(L(i, z) - mx);
    for (std::int64_t j : omega[i]) {
      const double ej = std::exp(L(i, j) - mx);
      total += std::log(ej + negsum) + mx - L(i, j);
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(k_norm);
  return make_op(std::move(out), {logits},
                 [n, k_norm, om = omega, ph = phi](const Matrix& g, BackwardPass& pass, Node& self) {
                   const Node* p = self.parents[0].get();
                   if (!p->requires_grad) return;
                   Matrix& gl = pass.of(p);
                   const Matrix& lv = p->value;
                   const double scale = g(0, 0) / static_cast<double>(k_norm);
                   for (std::int64_t i = 0; i < n; ++i) {
                     if (om[i].empty() || ph[i].empty()) continue;
                     double mx = -HUGE_VAL;
                     for (std::int64_t j : om[i]) mx = std::max(mx, lv(i, j));
                     for (std::int64_t z : ph[i]) mx = std::max(mx, lv(i, z));
                     double negsum = 0.0;
                     for (std::int64_t z : ph[i]) negsum += std::exp(lv(i, z) - mx);
                     double sum_recip = 0.0;
                     for (std::int64_t j : om[i]) {
                       const double ej = std::exp(lv(i, j) - mx);
                       const double denom = ej + negsum;
                       gl(i, j) += scale * (ej / denom - 1.0);
                       sum_recip += 1.0 / denom;
                     }
                     for (std::int64_t z : ph[i])
                       gl(i, z) += scale * std::exp(lv(i, z) - mx) * sum_recip;
                   }
                 });
}

void backward(const NodePtr& loss) {
  if (loss->value.rows != 1 || loss->value.cols != 1)
    throw contract_error("backward: loss must be 1x1, got " + loss->value.shape_str());
  if (!loss->requires_grad) return;
  // iterative post-order DFS over the requires_grad subgraph
  struct Frame {
    Node* n;
    std::size_t next = 0;
  };
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<Frame> stack;
  visited.insert(loss.get());
  stack.push_back({loss.get()});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  BackwardPass pass;
  pass.of(loss.get())(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop) node->backprop(pass.of(node), pass, *node);
  }
  for (Node* node : order) {
    Matrix& acc = node->ensure_grad();
    const Matrix& p = pass.of(node);
    kernels::active().axpy(1.0, p.data.data(), acc.data.data(), acc.size());
  }
}

void zero_all_grads(const NodePtr& root) {
  std::unordered_set<const Node*> visited;
  std::vector<Node*> stack{root.get()};
  visited.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    n->zero_grad();
    for (const auto& p : n->parents)
      if (!visited.count(p.get())) {
        visited.insert(p.get());
        stack.push_back(p.get());
      }
  }
}

}  // namespace gbcc::diff
