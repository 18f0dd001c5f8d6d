#pragma once

#include <cstdint>

namespace gbcc::kernels {

// Arithmetic inner loops behind all matrix math. Two implementations: a
// scalar reference and an AVX2+FMA variant, selected once at runtime.
// All matrices are dense row-major f64 with no padding.
//
// gemm shapes (C is always m x n, inner dimension k):
//   gemm_nn: A[m x k] * B[k x n]
//   gemm_nt: A[m x k] * B[n x k]^T
//   gemm_tn: A[k x m]^T * B[k x n]
// accumulate=false overwrites C, true adds into it.
struct Ops {
  const char* name;

  double (*dot)(const double* a, const double* b, std::int64_t n);
  double (*sum)(const double* a, std::int64_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::int64_t n);   // y += alpha*x
  void (*scale)(const double* x, double alpha, double* y, std::int64_t n);  // y = alpha*x
  void (*add)(const double* a, const double* b, double* out, std::int64_t n);
  void (*sub)(const double* a, const double* b, double* out, std::int64_t n);
  void (*hadamard)(const double* a, const double* b, double* out, std::int64_t n);
  void (*relu_fwd)(const double* x, double* out, std::int64_t n);
  void (*relu_bwd)(const double* x, const double* g, double* gx, std::int64_t n);  // gx += g * [x>0]

  void (*gemm_nn)(std::int64_t m, std::int64_t k, std::int64_t n,
                  const double* A, const double* B, double* C, bool accumulate);
  void (*gemm_nt)(std::int64_t m, std::int64_t k, std::int64_t n,
                  const double* A, const double* B, double* C, bool accumulate);
  void (*gemm_tn)(std::int64_t m, std::int64_t k, std::int64_t n,
                  const double* A, const double* B, double* C, bool accumulate);

  // out[i*m + j] = squared L2 distance between X row i (of n rows) and Y row j (of m rows).
  void (*sq_dists)(std::int64_t n, std::int64_t m, std::int64_t d,
                   const double* X, const double* Y, double* out);

  // In-place Adam update over n contiguous values. bc1/bc2 are the
  // precomputed bias corrections 1/(1-beta1^t), 1/(1-beta2^t).
  void (*adam_update)(std::int64_t n, double* p, const double* g, double* m, double* v,
                      double lr, double beta1, double beta2, double eps, double weight_decay,
                      double bc1, double bc2);
};

const Ops& scalar_ops();

// AVX2+FMA implementation, or nullptr when not compiled in.
const Ops* avx2_ops();

// Active implementation. Chosen on first call: GBCC_SIMD=scalar|avx2|auto
// (default auto), then CPU support. Throws config_error if GBCC_SIMD=avx2 on
// a machine without AVX2.
const Ops& active();

// Test hook: force a backend by name ("scalar", "avx2", "auto").
void force_backend(const char* name);

}  // namespace gbcc::kernels
