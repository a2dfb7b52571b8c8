#include <cmath>
#include <cstring>

#include "drx/kernels.hpp"

namespace drx::kern {
namespace scalar {

double dot(const double* x, const double* y, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double* y, const double* x, double a, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemm_nn(const double* a, const double* b, double* c, size_t m, size_t k,
             size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
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
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void conv1d_fwd(const double* x, const double* w, const double* bias, double* y,
                size_t cin, size_t cout, size_t t, size_t kw, size_t dil) {
  for (size_t co = 0; co < cout; ++co) {
    double* yo = y + co * t;
    const double bv = bias ? bias[co] : 0.0;
    for (size_t i = 0; i < t; ++i) yo[i] = bv;
    for (size_t ci = 0; ci < cin; ++ci) {
      const double* xi = x + ci * t;
      for (size_t j = 0; j < kw; ++j) {
        const size_t off = (kw - 1 - j) * dil;
        if (off >= t) continue;
        const double wv = w[(co * cin + ci) * kw + j];
        for (size_t i = off; i < t; ++i) yo[i] += wv * xi[i - off];
      }
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
        const double wv = w[(co * cin + ci) * kw + j];
        for (size_t i = off; i < t; ++i) dxi[i - off] += wv * dyo[i];
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
      for (size_t i = 0; i < t; ++i) s += dyo[i];
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
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* dy, double* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

void adam_update(double* p, const double* g, double* m, double* v, size_t n,
                 double lr, double b1, double b2, double eps, double bc1,
                 double bc2) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace scalar

const Kernels& scalar_kernels() {
  static const Kernels k = {
      "scalar",
      scalar::dot,
      scalar::axpy,
      scalar::gemm_nn,
      scalar::gemm_nt,
      scalar::gemm_tn,
      scalar::conv1d_fwd,
      scalar::conv1d_bwd_x,
      scalar::conv1d_bwd_w,
      scalar::relu_fwd,
      scalar::relu_bwd,
      scalar::adam_update,
  };
  return k;
}

}  // namespace drx::kern
