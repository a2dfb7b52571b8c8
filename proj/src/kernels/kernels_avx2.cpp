// AVX2+FMA variants of the hot kernels. Built with -mavx2 -mfma; selection
// happens at runtime in dispatch.cpp so the rest of the binary stays baseline.
#include <algorithm>
#include <cmath>
#include <cstring>

#include "drx/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace drx::kern {
namespace avx2 {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot(const double* x, const double* y, size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double* y, const double* x, double a, size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

// c row i accumulates a[i,p]*b[p,:] with p unrolled by 2 to halve c traffic.
void gemm_nn(const double* a, const double* b, double* c, size_t m, size_t k,
             size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    size_t p = 0;
    for (; p + 2 <= k; p += 2) {
      const __m256d a0 = _mm256_set1_pd(ai[p]);
      const __m256d a1 = _mm256_set1_pd(ai[p + 1]);
      const double* b0 = b + p * n;
      const double* b1 = b0 + n;
      size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d cv = _mm256_loadu_pd(ci + j);
        cv = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), cv);
        cv = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), cv);
        _mm256_storeu_pd(ci + j, cv);
      }
      for (; j < n; ++j) ci[j] += ai[p] * b0[j] + ai[p + 1] * b1[j];
    }
    for (; p < k; ++p) {
      const __m256d a0 = _mm256_set1_pd(ai[p]);
      const double* b0 = b + p * n;
      size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d cv = _mm256_loadu_pd(ci + j);
        cv = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), cv);
        _mm256_storeu_pd(ci + j, cv);
      }
      for (; j < n; ++j) ci[j] += ai[p] * b0[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, size_t m, size_t k,
             size_t n, bool accumulate) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double d = dot(ai, b + j * k, k);
      ci[j] = accumulate ? ci[j] + d : d;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, size_t m, size_t k,
             size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (size_t i = 0; i < m; ++i) {
      const __m256d av = _mm256_set1_pd(ap[i]);
      double* ci = c + i * n;
      size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d cv = _mm256_loadu_pd(ci + j);
        cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), cv);
        _mm256_storeu_pd(ci + j, cv);
      }
      for (; j < n; ++j) ci[j] += ap[i] * bp[j];
    }
  }
}

// Accumulates each output chunk across taps in registers: one store per chunk
// instead of one read-modify-write sweep per (channel, tap).
void conv1d_fwd(const double* x, const double* w, const double* bias, double* y,
                size_t cin, size_t cout, size_t t, size_t kw, size_t dil) {
  const size_t head = std::min(t, (kw - 1) * dil);
  for (size_t co = 0; co < cout; ++co) {
    double* yo = y + co * t;
    const double* wrow = w + co * cin * kw;
    const double bv = bias ? bias[co] : 0.0;
    for (size_t i = 0; i < head; ++i) {
      double acc = bv;
      for (size_t ci = 0; ci < cin; ++ci) {
        for (size_t j = 0; j < kw; ++j) {
          const size_t off = (kw - 1 - j) * dil;
          if (off > i) continue;
          acc += wrow[ci * kw + j] * x[ci * t + i - off];
        }
      }
      yo[i] = acc;
    }
    size_t i = head;
    for (; i + 8 <= t; i += 8) {
      __m256d acc0 = _mm256_set1_pd(bv);
      __m256d acc1 = acc0;
      for (size_t ci = 0; ci < cin; ++ci) {
        const double* xi = x + ci * t + i;
        for (size_t j = 0; j < kw; ++j) {
          const size_t off = (kw - 1 - j) * dil;
          const __m256d wv = _mm256_set1_pd(wrow[ci * kw + j]);
          acc0 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(xi - off), acc0);
          acc1 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(xi - off + 4), acc1);
        }
      }
      _mm256_storeu_pd(yo + i, acc0);
      _mm256_storeu_pd(yo + i + 4, acc1);
    }
    for (; i < t; ++i) {
      double acc = bv;
      for (size_t ci = 0; ci < cin; ++ci) {
        for (size_t j = 0; j < kw; ++j) {
          const size_t off = (kw - 1 - j) * dil;
          acc += wrow[ci * kw + j] * x[ci * t + i - off];
        }
      }
      yo[i] = acc;
    }
  }
}

void conv1d_bwd_x(const double* dy, const double* w, double* dx, size_t cin,
                  size_t cout, size_t t, size_t kw, size_t dil) {
  for (size_t co = 0; co < cout; ++co) {
    const double* dyo = dy + co * t;
    for (size_t ci = 0; ci < cin; ++ci) {
      double* dxi = dx + ci * t;
      for (size_t j = 0; j < kw; ++j) {
        const size_t off = (kw - 1 - j) * dil;
        if (off >= t) continue;
        axpy(dxi, dyo + off, w[(co * cin + ci) * kw + j], t - off);
      }
    }
  }
}

void conv1d_bwd_w(const double* x, const double* dy, double* dw, double* dbias,
                  size_t cin, size_t cout, size_t t, size_t kw, size_t dil) {
  for (size_t co = 0; co < cout; ++co) {
    const double* dyo = dy + co * t;
    if (dbias) {
      double s = 0.0;
      size_t i = 0;
      __m256d acc = _mm256_setzero_pd();
      for (; i + 4 <= t; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(dyo + i));
      s = hsum(acc);
      for (; i < t; ++i) s += dyo[i];
      dbias[co] += s;
    }
    for (size_t ci = 0; ci < cin; ++ci) {
      const double* xi = x + ci * t;
      for (size_t j = 0; j < kw; ++j) {
        const size_t off = (kw - 1 - j) * dil;
        if (off >= t) continue;
        dw[(co * cin + ci) * kw + j] += dot(dyo + off, xi, t - off);
      }
    }
  }
}

void relu_fwd(const double* x, double* y, size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* dy, double* dx, size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), add));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

void adam_update(double* p, const double* g, double* m, double* v, size_t n,
                 double lr, double b1, double b2, double eps, double bc1,
                 double bc2) {
  const __m256d vb1 = _mm256_set1_pd(b1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - b1);
  const __m256d vb2 = _mm256_set1_pd(b2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - b2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vibc1 = _mm256_set1_pd(1.0 / bc1);
  const __m256d vibc2 = _mm256_set1_pd(1.0 / bc2);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_fmadd_pd(vb1, mv, _mm256_mul_pd(vb1c, gv));
    vv = _mm256_fmadd_pd(vb2, vv, _mm256_mul_pd(vb2c, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, vibc1);
    const __m256d vhat = _mm256_mul_pd(vv, vibc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    __m256d pv = _mm256_loadu_pd(p + i);
    pv = _mm256_sub_pd(pv, _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom));
    _mm256_storeu_pd(p + i, pv);
  }
  for (; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace avx2

const Kernels& avx2_kernels() {
  static const Kernels k = {
      "avx2",
      avx2::dot,
      avx2::axpy,
      avx2::gemm_nn,
      avx2::gemm_nt,
      avx2::gemm_tn,
      avx2::conv1d_fwd,
      avx2::conv1d_bwd_x,
      avx2::conv1d_bwd_w,
      avx2::relu_fwd,
      avx2::relu_bwd,
      avx2::adam_update,
  };
  return k;
}

bool avx2_compiled() { return true; }

}  // namespace drx::kern

#else

namespace drx::kern {
const Kernels& avx2_kernels() { return scalar_kernels(); }
bool avx2_compiled() { return false; }
}  // namespace drx::kern

#endif
