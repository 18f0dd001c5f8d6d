#include "gbcc/kernels.hpp"

// AVX2+FMA kernels. This translation unit is compiled with -mavx2 -mfma on
// x86_64; everywhere else it degrades to the nullptr stub at the bottom.
// Reductions use multiple accumulators, so results can differ from the
// scalar reference in the last ulps; the equivalence tests use tolerances.

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace gbcc::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double v_dot(const double* a, const double* b, std::int64_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double r = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double v_sum(const double* a, std::int64_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
  double r = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += a[i];
  return r;
}

void v_axpy(double alpha, const double* x, double* y, std::int64_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void v_scale(const double* x, double alpha, double* y, std::int64_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void v_add(const double* a, const double* b, double* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_hadamard(const double* a, const double* b, double* out, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_relu_fwd(const double* x, double* out, std::int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_bwd(const double* x, const double* g, double* gx, std::int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d pass = _mm256_and_pd(mask, _mm256_loadu_pd(g + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), pass));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) gx[i] += g[i];
}

constexpr std::int64_t kKBlock = 256;   // k panel for nn/tn
constexpr std::int64_t kJBlock = 128;   // B-row panel for nt

// C[i0..i0+4) x [j0..j0+8) micro-tile, k range [l0, l1). Loads and re-stores
// C, so callers zero C first when not accumulating.
inline void nn_tile_4x8(std::int64_t k_ld, std::int64_t n, const double* A, const double* B,
                        double* C, std::int64_t i0, std::int64_t j0,
                        std::int64_t l0, std::int64_t l1) {
  __m256d c00 = _mm256_loadu_pd(C + (i0 + 0) * n + j0);
  __m256d c01 = _mm256_loadu_pd(C + (i0 + 0) * n + j0 + 4);
  __m256d c10 = _mm256_loadu_pd(C + (i0 + 1) * n + j0);
  __m256d c11 = _mm256_loadu_pd(C + (i0 + 1) * n + j0 + 4);
  __m256d c20 = _mm256_loadu_pd(C + (i0 + 2) * n + j0);
  __m256d c21 = _mm256_loadu_pd(C + (i0 + 2) * n + j0 + 4);
  __m256d c30 = _mm256_loadu_pd(C + (i0 + 3) * n + j0);
  __m256d c31 = _mm256_loadu_pd(C + (i0 + 3) * n + j0 + 4);
  for (std::int64_t l = l0; l < l1; ++l) {
    const __m256d b0 = _mm256_loadu_pd(B + l * n + j0);
    const __m256d b1 = _mm256_loadu_pd(B + l * n + j0 + 4);
    __m256d a = _mm256_set1_pd(A[(i0 + 0) * k_ld + l]);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_set1_pd(A[(i0 + 1) * k_ld + l]);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_set1_pd(A[(i0 + 2) * k_ld + l]);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_set1_pd(A[(i0 + 3) * k_ld + l]);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
  }
  _mm256_storeu_pd(C + (i0 + 0) * n + j0, c00);
  _mm256_storeu_pd(C + (i0 + 0) * n + j0 + 4, c01);
  _mm256_storeu_pd(C + (i0 + 1) * n + j0, c10);
  _mm256_storeu_pd(C + (i0 + 1) * n + j0 + 4, c11);
  _mm256_storeu_pd(C + (i0 + 2) * n + j0, c20);
  _mm256_storeu_pd(C + (i0 + 2) * n + j0 + 4, c21);
  _mm256_storeu_pd(C + (i0 + 3) * n + j0, c30);
  _mm256_storeu_pd(C + (i0 + 3) * n + j0 + 4, c31);
}

void v_gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n,
               const double* A, const double* B, double* C, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) C[i] = 0.0;
  for (std::int64_t l0 = 0; l0 < k; l0 += kKBlock) {
    const std::int64_t l1 = std::min(k, l0 + kKBlock);
    std::int64_t i0 = 0;
    for (; i0 + 4 <= m; i0 += 4) {
      std::int64_t j0 = 0;
      for (; j0 + 8 <= n; j0 += 8) nn_tile_4x8(k, n, A, B, C, i0, j0, l0, l1);
      // column tail, one row at a time
      for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t l = l0; l < l1; ++l) {
          const double a = A[(i0 + r) * k + l];
          for (std::int64_t j = j0; j < n; ++j) C[(i0 + r) * n + j] += a * B[l * n + j];
        }
    }
    for (; i0 < m; ++i0)
      for (std::int64_t l = l0; l < l1; ++l)
        v_axpy(A[i0 * k + l], B + l * n, C + i0 * n, n);
  }
}

void v_gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n,
               const double* A, const double* B, double* C, bool accumulate) {
  for (std::int64_t j0 = 0; j0 < n; j0 += kJBlock) {
    const std::int64_t j1 = std::min(n, j0 + kJBlock);
    for (std::int64_t i = 0; i < m; ++i) {
      const double* arow = A + i * k;
      std::int64_t j = j0;
      for (; j + 4 <= j1; j += 4) {
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        __m256d acc2 = _mm256_setzero_pd();
        __m256d acc3 = _mm256_setzero_pd();
        const double* b0 = B + (j + 0) * k;
        const double* b1 = B + (j + 1) * k;
        const double* b2 = B + (j + 2) * k;
        const double* b3 = B + (j + 3) * k;
        std::int64_t l = 0;
        for (; l + 4 <= k; l += 4) {
          const __m256d a = _mm256_loadu_pd(arow + l);
          acc0 = _mm256_fmadd_pd(a, _mm256_loadu_pd(b0 + l), acc0);
          acc1 = _mm256_fmadd_pd(a, _mm256_loadu_pd(b1 + l), acc1);
          acc2 = _mm256_fmadd_pd(a, _mm256_loadu_pd(b2 + l), acc2);
          acc3 = _mm256_fmadd_pd(a, _mm256_loadu_pd(b3 + l), acc3);
        }
        double d0 = hsum(acc0), d1 = hsum(acc1), d2 = hsum(acc2), d3 = hsum(acc3);
        for (; l < k; ++l) {
          d0 += arow[l] * b0[l];
          d1 += arow[l] * b1[l];
          d2 += arow[l] * b2[l];
          d3 += arow[l] * b3[l];
        }
        double* c = C + i * n + j;
        if (accumulate) {
          c[0] += d0; c[1] += d1; c[2] += d2; c[3] += d3;
        } else {
          c[0] = d0; c[1] = d1; c[2] = d2; c[3] = d3;
        }
      }
      for (; j < j1; ++j) {
        const double d = v_dot(arow, B + j * k, k);
        C[i * n + j] = accumulate ? C[i * n + j] + d : d;
      }
    }
  }
}

void v_gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n,
               const double* A, const double* B, double* C, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < m * n; ++i) C[i] = 0.0;
  for (std::int64_t l0 = 0; l0 < k; l0 += kKBlock) {
    const std::int64_t l1 = std::min(k, l0 + kKBlock);
    for (std::int64_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::int64_t l = l0; l < l1; ++l)
        v_axpy(A[l * m + i], B + l * n, crow, n);
    }
  }
}

void v_sq_dists(std::int64_t n, std::int64_t m, std::int64_t d,
                const double* X, const double* Y, double* out) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double* xi = X + i * d;
    double* orow = out + i * m;
    for (std::int64_t j = 0; j < m; ++j) {
      const double* yj = Y + j * d;
      __m256d acc = _mm256_setzero_pd();
      std::int64_t l = 0;
      for (; l + 4 <= d; l += 4) {
        const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(xi + l), _mm256_loadu_pd(yj + l));
        acc = _mm256_fmadd_pd(diff, diff, acc);
      }
      double s = hsum(acc);
      for (; l < d; ++l) {
        const double diff = xi[l] - yj[l];
        s += diff * diff;
      }
      orow[j] = s;
    }
  }
}

void v_adam_update(std::int64_t n, double* p, const double* g, double* mo, double* vo,
                   double lr, double beta1, double beta2, double eps, double weight_decay,
                   double bc1, double bc2) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vwd = _mm256_set1_pd(weight_decay);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vbc1 = _mm256_set1_pd(bc1);
  const __m256d vbc2 = _mm256_set1_pd(bc2);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vp = _mm256_loadu_pd(p + i);
    const __m256d vg = _mm256_fmadd_pd(vwd, vp, _mm256_loadu_pd(g + i));
    __m256d vm = _mm256_loadu_pd(mo + i);
    __m256d vv = _mm256_loadu_pd(vo + i);
    vm = _mm256_fmadd_pd(vb1, vm, _mm256_mul_pd(vb1c, vg));
    vv = _mm256_fmadd_pd(vb2, vv, _mm256_mul_pd(vb2c, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(mo + i, vm);
    _mm256_storeu_pd(vo + i, vv);
    const __m256d mhat = _mm256_mul_pd(vm, vbc1);
    const __m256d vhat = _mm256_mul_pd(vv, vbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    vp = _mm256_sub_pd(vp, _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom));
    _mm256_storeu_pd(p + i, vp);
  }
  for (; i < n; ++i) {
    const double gi = g[i] + weight_decay * p[i];
    mo[i] = beta1 * mo[i] + (1.0 - beta1) * gi;
    vo[i] = beta2 * vo[i] + (1.0 - beta2) * gi * gi;
    p[i] -= lr * (mo[i] * bc1) / (std::sqrt(vo[i] * bc2) + eps);
  }
}

}  // namespace

const Ops* avx2_ops() {
  static const Ops ops = {
      "avx2", v_dot, v_sum, v_axpy, v_scale, v_add, v_sub, v_hadamard,
      v_relu_fwd, v_relu_bwd, v_gemm_nn, v_gemm_nt, v_gemm_tn, v_sq_dists, v_adam_update,
  };
  return &ops;
}

}  // namespace gbcc::kernels

#else  // no AVX2/FMA at compile time

namespace gbcc::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace gbcc::kernels

#endif
