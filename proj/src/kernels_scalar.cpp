#include <cmath>

#include "gbcc/kernels.hpp"

// Reference kernels. Plain loops, no intrinsics; the AVX2 variants are
// equivalence-tested against these.

namespace gbcc::kernels {
namespace {

double s_dot(const double* a, const double* b, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double s_sum(const double* a, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void s_axpy(double alpha, const double* x, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_scale(const double* x, double alpha, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void s_add(const double* a, const double* b, double* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_hadamard(const double* a, const double* b, double* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_relu_fwd(const double* x, double* out, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_bwd(const double* x, const double* g, double* gx, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0) gx[i] += g[i];
}

void s_gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n,
               const double* A, const double* B, double* C, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) C[i] = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (std::int64_t l = 0; l < k; ++l) {
      const double a = arow[l];
      const double* brow = B + l * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void s_gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n,
               const double* A, const double* B, double* C, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double d = s_dot(arow, B + j * k, k);
      crow[j] = accumulate ? crow[j] + d : d;
    }
  }
}

void s_gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n,
               const double* A, const double* B, double* C, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) C[i] = 0.0;
  for (std::int64_t l = 0; l < k; ++l) {
    const double* arow = A + l * m;
    const double* brow = B + l * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double a = arow[i];
      double* crow = C + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void s_sq_dists(std::int64_t n, std::int64_t m, std::int64_t d,
                const double* X, const double* Y, double* out) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double* xi = X + i * d;
    double* orow = out + i * m;
    for (std::int64_t j = 0; j < m; ++j) {
      const double* yj = Y + j * d;
      double acc = 0.0;
      for (std::int64_t l = 0; l < d; ++l) {
        const double diff = xi[l] - yj[l];
        acc += diff * diff;
      }
      orow[j] = acc;
    }
  }
}

void s_adam_update(std::int64_t n, double* p, const double* g, double* mo, double* vo,
                   double lr, double beta1, double beta2, double eps, double weight_decay,
                   double bc1, double bc2) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double gi = g[i] + weight_decay * p[i];
    mo[i] = beta1 * mo[i] + (1.0 - beta1) * gi;
    vo[i] = beta2 * vo[i] + (1.0 - beta2) * gi * gi;
    const double mhat = mo[i] * bc1;
    const double vhat = vo[i] * bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {
      "scalar", s_dot, s_sum, s_axpy, s_scale, s_add, s_sub, s_hadamard,
      s_relu_fwd, s_relu_bwd, s_gemm_nn, s_gemm_nt, s_gemm_tn, s_sq_dists, s_adam_update,
  };
  return ops;
}

}  // namespace gbcc::kernels
