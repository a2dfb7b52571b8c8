#pragma once

#include <cstddef>
#include <string>

namespace drx::kern {

// Hot inner loops of the tensor engine. Each entry has a scalar reference
// implementation and an AVX2 variant; the active table is chosen once at
// startup from CPUID, overridable with DRX_KERNELS=scalar|avx2.
//
// All matrices are dense fp64, row-major. gemm flavors follow BLAS naming:
//   gemm_nn: c[m,n] (+)= a[m,k] * b[k,n]
//   gemm_nt: c[m,n] (+)= a[m,k] * b[n,k]^T
//   gemm_tn: c[m,n] (+)= a[k,m]^T * b[k,n]
// conv1d kernels implement left-zero-padded causal convolution on a single
// sample laid out as [channels, time].
struct Kernels {
  const char* name;

  double (*dot)(const double* x, const double* y, size_t n);
  // y += a * x
  void (*axpy)(double* y, const double* x, double a, size_t n);

  void (*gemm_nn)(const double* a, const double* b, double* c, size_t m,
                  size_t k, size_t n, bool accumulate);
  void (*gemm_nt)(const double* a, const double* b, double* c, size_t m,
                  size_t k, size_t n, bool accumulate);
  void (*gemm_tn)(const double* a, const double* b, double* c, size_t m,
                  size_t k, size_t n, bool accumulate);

  // y[cout, t] = bias[cout] + sum_{ci, j} w[cout, ci, j] * x[ci, t-(kw-1-j)*dil]
  // (x addressed only at valid positions; out-of-range reads are zero pad).
  void (*conv1d_fwd)(const double* x, const double* w, const double* bias,
                     double* y, size_t cin, size_t cout, size_t t, size_t kw,
                     size_t dil);
  // dx += w^T (*) dy
  void (*conv1d_bwd_x)(const double* dy, const double* w, double* dx,
                       size_t cin, size_t cout, size_t t, size_t kw,
                       size_t dil);
  // dw += dy (*) x, dbias += rowsum(dy)
  void (*conv1d_bwd_w)(const double* x, const double* dy, double* dw,
                       double* dbias, size_t cin, size_t cout, size_t t,
                       size_t kw, size_t dil);

  void (*relu_fwd)(const double* x, double* y, size_t n);
  // dx += dy where x > 0
  void (*relu_bwd)(const double* x, const double* dy, double* dx, size_t n);

  // In-place Adam update with precomputed bias corrections bc1=1-b1^t,
  // bc2=1-b2^t.
  void (*adam_update)(double* p, const double* g, double* m, double* v,
                      size_t n, double lr, double b1, double b2, double eps,
                      double bc1, double bc2);
};

const Kernels& scalar_kernels();
const Kernels& avx2_kernels();  // falls back to scalar when not compiled in

bool cpu_has_avx2();
bool avx2_compiled();

// Runtime-selected table (env override read once).
const Kernels& active();
// Test hook: force a table by name for the current process.
void force_kernels(const std::string& name);

}  // namespace drx::kern
