#include "drx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "drx/kernels.hpp"

namespace drx {

namespace {

void check_defined(const Tensor& t, const char* who) {
  if (!t.defined()) throw std::runtime_error(std::string(who) + ": undefined tensor");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

bool track(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Builds the output node when gradients are being tracked.
Tensor make_node(std::vector<int> shape, std::initializer_list<const Tensor*> inputs) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (track(inputs)) {
    out.set_requires_grad(true);
    for (const Tensor* t : inputs) out.impl()->parents.push_back(*t);
  }
  return out;
}

double* grad_of(Tensor& t) { return t.grad().data(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_same_shape(a, b, "add");
  Tensor out = make_node(a.shape(), {&a, &b});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    Tensor ga = a, gb = b, go = out;
    out.impl()->backward = [ga, gb, go]() mutable {
      const double* dy = go.grad().data();
      const size_t n = go.size();
      if (ga.requires_grad()) {
        double* da = grad_of(ga);
        for (size_t i = 0; i < n; ++i) da[i] += dy[i];
      }
      if (gb.requires_grad()) {
        double* db = grad_of(gb);
        for (size_t i = 0; i < n; ++i) db[i] += dy[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_defined(a, "sub");
  check_same_shape(a, b, "sub");
  Tensor out = make_node(a.shape(), {&a, &b});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (out.requires_grad()) {
    Tensor ga = a, gb = b, go = out;
    out.impl()->backward = [ga, gb, go]() mutable {
      const double* dy = go.grad().data();
      const size_t n = go.size();
      if (ga.requires_grad()) {
        double* da = grad_of(ga);
        for (size_t i = 0; i < n; ++i) da[i] += dy[i];
      }
      if (gb.requires_grad()) {
        double* db = grad_of(gb);
        for (size_t i = 0; i < n; ++i) db[i] -= dy[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_same_shape(a, b, "mul");
  Tensor out = make_node(a.shape(), {&a, &b});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (out.requires_grad()) {
    Tensor ga = a, gb = b, go = out;
    out.impl()->backward = [ga, gb, go]() mutable {
      const double* dy = go.grad().data();
      const size_t n = go.size();
      if (ga.requires_grad()) {
        double* da = grad_of(ga);
        const double* bv = gb.data();
        for (size_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
      }
      if (gb.requires_grad()) {
        double* db = grad_of(gb);
        const double* av = ga.data();
        for (size_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
      }
    };
  }
  return out;
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  check_defined(a, "maximum");
  check_same_shape(a, b, "maximum");
  Tensor out = make_node(a.shape(), {&a, &b});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) {
    out.data()[i] = a.data()[i] > b.data()[i] ? a.data()[i] : b.data()[i];
  }
  if (out.requires_grad()) {
    Tensor ga = a, gb = b, go = out;
    out.impl()->backward = [ga, gb, go]() mutable {
      const double* dy = go.grad().data();
      const size_t n = go.size();
      const double* av = ga.data();
      const double* bv = gb.data();
      double* da = ga.requires_grad() ? grad_of(ga) : nullptr;
      double* db = gb.requires_grad() ? grad_of(gb) : nullptr;
      for (size_t i = 0; i < n; ++i) {
        if (av[i] > bv[i]) {
          if (da) da[i] += dy[i];
        } else if (db) {
          db[i] += dy[i];
        }
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  check_defined(x, "scale");
  Tensor out = make_node(x.shape(), {&x});
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = c * x.data()[i];
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go, c]() mutable {
      kern::active().axpy(grad_of(gx), go.grad().data(), c, go.size());
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  check_defined(x, "relu");
  Tensor out = make_node(x.shape(), {&x});
  kern::active().relu_fwd(x.data(), out.data(), x.size());
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go]() mutable {
      kern::active().relu_bwd(gx.data(), go.grad().data(), grad_of(gx), gx.size());
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  check_defined(x, "sigmoid");
  Tensor out = make_node(x.shape(), {&x});
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go]() mutable {
      const double* y = go.data();
      const double* dy = go.grad().data();
      double* dx = grad_of(gx);
      for (size_t i = 0; i < go.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
    };
  }
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined(x, "affine");
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
    throw std::invalid_argument("affine: expected x[m,k], w[k,n], b[n]");
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k || b.dim(0) != n)
    throw std::invalid_argument("affine: dimension mismatch");
  Tensor out = make_node({m, n}, {&x, &w, &b});
  kern::active().gemm_nn(x.data(), w.data(), out.data(), m, k, n, false);
  for (int i = 0; i < m; ++i) {
    double* row = out.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) row[j] += b.data()[j];
  }
  if (out.requires_grad()) {
    Tensor gx = x, gw = w, gb = b, go = out;
    out.impl()->backward = [gx, gw, gb, go, m, k, n]() mutable {
      const double* dy = go.grad().data();
      const auto& kr = kern::active();
      if (gx.requires_grad())
        kr.gemm_nt(dy, gw.data(), grad_of(gx), m, n, k, true);
      if (gw.requires_grad())
        kr.gemm_tn(gx.data(), dy, grad_of(gw), k, m, n, true);
      if (gb.requires_grad()) {
        double* db = grad_of(gb);
        for (int i = 0; i < m; ++i) {
          const double* row = dy + static_cast<size_t>(i) * n;
          for (int j = 0; j < n; ++j) db[j] += row[j];
        }
      }
    };
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul_nt");
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: expected a[m,k], b[n,k]");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out = make_node({m, n}, {&a, &b});
  kern::active().gemm_nt(a.data(), b.data(), out.data(), m, k, n, false);
  if (out.requires_grad()) {
    Tensor ga = a, gb = b, go = out;
    out.impl()->backward = [ga, gb, go, m, k, n]() mutable {
      const double* dy = go.grad().data();
      const auto& kr = kern::active();
      if (ga.requires_grad()) kr.gemm_nn(dy, gb.data(), grad_of(ga), m, n, k, true);
      if (gb.requires_grad()) kr.gemm_tn(dy, ga.data(), grad_of(gb), n, m, k, true);
    };
  }
  return out;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  check_defined(a, "bmm_nt");
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("bmm_nt: expected a[B,H,D], b[B,G,D]");
  const int B = a.dim(0), H = a.dim(1), D = a.dim(2), G = b.dim(1);
  Tensor out = make_node({B, H, G}, {&a, &b});
  const auto& kr = kern::active();
  for (int s = 0; s < B; ++s) {
    kr.gemm_nt(a.data() + static_cast<size_t>(s) * H * D,
               b.data() + static_cast<size_t>(s) * G * D,
               out.data() + static_cast<size_t>(s) * H * G, H, D, G, false);
  }
  if (out.requires_grad()) {
    Tensor ga = a, gb = b, go = out;
    out.impl()->backward = [ga, gb, go, B, H, D, G]() mutable {
      const auto& kr = kern::active();
      const double* dy = go.grad().data();
      double* da = ga.requires_grad() ? grad_of(ga) : nullptr;
      double* db = gb.requires_grad() ? grad_of(gb) : nullptr;
      for (int s = 0; s < B; ++s) {
        const double* dys = dy + static_cast<size_t>(s) * H * G;
        if (da)
          kr.gemm_nn(dys, gb.data() + static_cast<size_t>(s) * G * D,
                     da + static_cast<size_t>(s) * H * D, H, G, D, true);
        if (db)
          kr.gemm_tn(dys, ga.data() + static_cast<size_t>(s) * H * D,
                     db + static_cast<size_t>(s) * G * D, G, H, D, true);
      }
    };
  }
  return out;
}

Tensor bmm_nn(const Tensor& a, const Tensor& b) {
  check_defined(a, "bmm_nn");
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw std::invalid_argument("bmm_nn: expected a[B,H,G], b[B,G,D]");
  const int B = a.dim(0), H = a.dim(1), G = a.dim(2), D = b.dim(2);
  Tensor out = make_node({B, H, D}, {&a, &b});
  const auto& kr = kern::active();
  for (int s = 0; s < B; ++s) {
    kr.gemm_nn(a.data() + static_cast<size_t>(s) * H * G,
               b.data() + static_cast<size_t>(s) * G * D,
               out.data() + static_cast<size_t>(s) * H * D, H, G, D, false);
  }
  if (out.requires_grad()) {
    Tensor ga = a, gb = b, go = out;
    out.impl()->backward = [ga, gb, go, B, H, G, D]() mutable {
      const auto& kr = kern::active();
      const double* dy = go.grad().data();
      double* da = ga.requires_grad() ? grad_of(ga) : nullptr;
      double* db = gb.requires_grad() ? grad_of(gb) : nullptr;
      for (int s = 0; s < B; ++s) {
        const double* dys = dy + static_cast<size_t>(s) * H * D;
        if (da)
          kr.gemm_nt(dys, gb.data() + static_cast<size_t>(s) * G * D,
                     da + static_cast<size_t>(s) * H * G, H, D, G, true);
        if (db)
          kr.gemm_tn(ga.data() + static_cast<size_t>(s) * H * G, dys,
                     db + static_cast<size_t>(s) * G * D, G, H, D, true);
      }
    };
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  check_defined(x, "softmax_rows");
  if (x.ndim() < 1) throw std::invalid_argument("softmax_rows: rank >= 1 required");
  const int cols = x.dim(x.ndim() - 1);
  const size_t rows = x.size() / static_cast<size_t>(cols);
  Tensor out = make_node(x.shape(), {&x});
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = out.data() + r * cols;
    double mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
  }
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go, rows, cols]() mutable {
      const double* y = go.data();
      const double* dy = go.grad().data();
      double* dx = grad_of(gx);
      for (size_t r = 0; r < rows; ++r) {
        const double* yr = y + r * cols;
        const double* dyr = dy + r * cols;
        double* dxr = dx + r * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
        for (int j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
      }
    };
  }
  return out;
}

namespace {

// Shared core for the flat and grouped maxpool: groups of H rows of width C.
Tensor maxpool_impl(const Tensor& x, int groups, int rows, int cols,
                    std::vector<int> out_shape) {
  if (rows < 1) throw std::invalid_argument("maxpool_over_rows: needs rows >= 1");
  Tensor out = make_node(std::move(out_shape), {&x});
  std::vector<int> argmax(static_cast<size_t>(groups) * cols);
  for (int g = 0; g < groups; ++g) {
    const double* base = x.data() + static_cast<size_t>(g) * rows * cols;
    double* yg = out.data() + static_cast<size_t>(g) * cols;
    int* am = argmax.data() + static_cast<size_t>(g) * cols;
    for (int j = 0; j < cols; ++j) {
      double best = base[j];
      int bi = 0;
      for (int i = 1; i < rows; ++i) {
        const double v = base[static_cast<size_t>(i) * cols + j];
        if (v > best) {
          best = v;
          bi = i;
        }
      }
      yg[j] = best;
      am[j] = bi;
    }
  }
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go, argmax = std::move(argmax), groups, rows,
                            cols]() mutable {
      const double* dy = go.grad().data();
      double* dx = grad_of(gx);
      for (int g = 0; g < groups; ++g) {
        const int* am = argmax.data() + static_cast<size_t>(g) * cols;
        const double* dyg = dy + static_cast<size_t>(g) * cols;
        double* dxg = dx + static_cast<size_t>(g) * rows * cols;
        for (int j = 0; j < cols; ++j)
          dxg[static_cast<size_t>(am[j]) * cols + j] += dyg[j];
      }
    };
  }
  return out;
}

}  // namespace

Tensor maxpool_over_rows(const Tensor& x) {
  check_defined(x, "maxpool_over_rows");
  if (x.ndim() != 2) throw std::invalid_argument("maxpool_over_rows: expected [r,c]");
  return maxpool_impl(x, 1, x.dim(0), x.dim(1), {1, x.dim(1)});
}

Tensor maxpool_rows_grouped(const Tensor& x) {
  check_defined(x, "maxpool_rows_grouped");
  if (x.ndim() != 3) throw std::invalid_argument("maxpool_rows_grouped: expected [B,H,C]");
  return maxpool_impl(x, x.dim(0), x.dim(1), x.dim(2), {x.dim(0), x.dim(2)});
}

namespace {

// Batchnorm over an index set per feature. Layout is abstracted by the
// plan's inline offset: for [m,f] feature j has elements x[i*f+j], for
// [B,C,T] channel c has elements x[(b*C+c)*T+t].
struct Bn2dPlan {
  int features;
  size_t per_feature;
  size_t at(int f, size_t i) const { return i * static_cast<size_t>(features) + f; }
};

template <class Plan>
Tensor batchnorm_impl(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      BatchNormState& state, bool train, const Plan& plan,
                      const char* who) {
  const int F = plan.features;
  if (gamma.ndim() != 1 || gamma.dim(0) != F || beta.ndim() != 1 || beta.dim(0) != F)
    throw std::invalid_argument(std::string(who) + ": gamma/beta must be [features]");
  if (static_cast<int>(state.running_mean.size()) != F)
    throw std::invalid_argument(std::string(who) + ": running stats feature mismatch");
  if (train && plan.per_feature < 2)
    throw std::invalid_argument(std::string(who) + ": train mode needs batch >= 2");

  Tensor out = make_node(x.shape(), {&x, &gamma, &beta});
  std::vector<double> mean(F), var(F);
  if (train) {
    for (int f = 0; f < F; ++f) {
      double s = 0.0;
      for (size_t i = 0; i < plan.per_feature; ++i) s += x.data()[plan.at(f, i)];
      const double mu = s / static_cast<double>(plan.per_feature);
      double v = 0.0;
      for (size_t i = 0; i < plan.per_feature; ++i) {
        const double d = x.data()[plan.at(f, i)] - mu;
        v += d * d;
      }
      mean[f] = mu;
      var[f] = v / static_cast<double>(plan.per_feature);
      state.running_mean[f] = state.momentum * state.running_mean[f] + (1.0 - state.momentum) * mu;
      state.running_var[f] = state.momentum * state.running_var[f] + (1.0 - state.momentum) * var[f];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(F);
  for (int f = 0; f < F; ++f) inv_std[f] = 1.0 / std::sqrt(var[f] + state.eps);
  for (int f = 0; f < F; ++f) {
    const double g = gamma.data()[f], b = beta.data()[f];
    for (size_t i = 0; i < plan.per_feature; ++i) {
      const size_t off = plan.at(f, i);
      out.data()[off] = g * (x.data()[off] - mean[f]) * inv_std[f] + b;
    }
  }

  if (out.requires_grad()) {
    Tensor gx = x, gg = gamma, gb = beta, go = out;
    const size_t pf = plan.per_feature;
    out.impl()->backward = [gx, gg, gb, go, plan, pf, F, mean = std::move(mean),
                            inv_std = std::move(inv_std), train]() mutable {
      const double* dy = go.grad().data();
      const double* xv = gx.data();
      double* dx = gx.requires_grad() ? grad_of(gx) : nullptr;
      double* dgamma = gg.requires_grad() ? grad_of(gg) : nullptr;
      double* dbeta = gb.requires_grad() ? grad_of(gb) : nullptr;
      const double inv_n = 1.0 / static_cast<double>(pf);
      for (int f = 0; f < F; ++f) {
        const double g = gg.data()[f];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (size_t i = 0; i < pf; ++i) {
          const size_t off = plan.at(f, i);
          const double xhat = (xv[off] - mean[f]) * inv_std[f];
          sum_dy += dy[off];
          sum_dy_xhat += dy[off] * xhat;
        }
        if (dgamma) dgamma[f] += sum_dy_xhat;
        if (dbeta) dbeta[f] += sum_dy;
        if (dx) {
          if (train) {
            for (size_t i = 0; i < pf; ++i) {
              const size_t off = plan.at(f, i);
              const double xhat = (xv[off] - mean[f]) * inv_std[f];
              dx[off] += g * inv_std[f] *
                         (dy[off] - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
            }
          } else {
            for (size_t i = 0; i < pf; ++i) {
              const size_t off = plan.at(f, i);
              dx[off] += g * inv_std[f] * dy[off];
            }
          }
        }
      }
    };
  }
  return out;
}

}  // namespace

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, bool train) {
  check_defined(x, "batchnorm");
  if (x.ndim() != 2) throw std::invalid_argument("batchnorm: expected [batch,features]");
  const int m = x.dim(0), f = x.dim(1);
  Bn2dPlan plan{f, static_cast<size_t>(m)};
  return batchnorm_impl(x, gamma, beta, state, train, plan, "batchnorm");
}

// Separate implementation with contiguous per-(sample, channel) rows; this
// sits on the training hot path where generic per-element addressing is too
// slow.
Tensor batchnorm_nct(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, bool train) {
  check_defined(x, "batchnorm_nct");
  if (x.ndim() != 3) throw std::invalid_argument("batchnorm_nct: expected [B,C,T]");
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C)
    throw std::invalid_argument("batchnorm_nct: gamma/beta must be [channels]");
  if (static_cast<int>(state.running_mean.size()) != C)
    throw std::invalid_argument("batchnorm_nct: running stats channel mismatch");
  const size_t n = static_cast<size_t>(B) * T;
  if (train && n < 2)
    throw std::invalid_argument("batchnorm_nct: train mode needs batch >= 2");

  auto row = [C, T](auto* base, int b, int c) {
    return base + (static_cast<size_t>(b) * C + c) * T;
  };

  Tensor out = make_node(x.shape(), {&x, &gamma, &beta});
  std::vector<double> mean(static_cast<size_t>(C)), var(static_cast<size_t>(C));
  if (train) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* xr = row(x.data(), b, c);
        for (int i = 0; i < T; ++i) s += xr[i];
      }
      const double mu = s / static_cast<double>(n);
      double v = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* xr = row(x.data(), b, c);
        for (int i = 0; i < T; ++i) {
          const double d = xr[i] - mu;
          v += d * d;
        }
      }
      mean[static_cast<size_t>(c)] = mu;
      var[static_cast<size_t>(c)] = v / static_cast<double>(n);
      state.running_mean[static_cast<size_t>(c)] =
          state.momentum * state.running_mean[static_cast<size_t>(c)] + (1.0 - state.momentum) * mu;
      state.running_var[static_cast<size_t>(c)] =
          state.momentum * state.running_var[static_cast<size_t>(c)] +
          (1.0 - state.momentum) * var[static_cast<size_t>(c)];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c)
    inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + state.eps);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const double g = gamma.data()[c] * inv_std[static_cast<size_t>(c)];
      const double shift = beta.data()[c] - g * mean[static_cast<size_t>(c)];
      const double* xr = row(x.data(), b, c);
      double* yr = row(out.data(), b, c);
      for (int i = 0; i < T; ++i) yr[i] = g * xr[i] + shift;
    }
  }

  if (out.requires_grad()) {
    Tensor gx = x, gg = gamma, gb = beta, go = out;
    out.impl()->backward = [gx, gg, gb, go, B, C, T, n, mean = std::move(mean),
                            inv_std = std::move(inv_std), train, row]() mutable {
      const double* dy = go.grad().data();
      const double* xv = gx.data();
      double* dx = gx.requires_grad() ? grad_of(gx) : nullptr;
      double* dgamma = gg.requires_grad() ? grad_of(gg) : nullptr;
      double* dbeta = gb.requires_grad() ? grad_of(gb) : nullptr;
      const double inv_n = 1.0 / static_cast<double>(n);
      for (int c = 0; c < C; ++c) {
        const double mu = mean[static_cast<size_t>(c)];
        const double is = inv_std[static_cast<size_t>(c)];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < B; ++b) {
          const double* dyr = row(dy, b, c);
          const double* xr = row(xv, b, c);
          for (int i = 0; i < T; ++i) {
            sum_dy += dyr[i];
            sum_dy_xhat += dyr[i] * (xr[i] - mu) * is;
          }
        }
        if (dgamma) dgamma[c] += sum_dy_xhat;
        if (dbeta) dbeta[c] += sum_dy;
        if (dx) {
          const double g = gg.data()[c] * is;
          if (train) {
            const double m_dy = inv_n * sum_dy;
            const double m_dyx = inv_n * sum_dy_xhat;
            for (int b = 0; b < B; ++b) {
              const double* dyr = row(dy, b, c);
              const double* xr = row(xv, b, c);
              double* dxr = row(dx, b, c);
              for (int i = 0; i < T; ++i)
                dxr[i] += g * (dyr[i] - m_dy - (xr[i] - mu) * is * m_dyx);
            }
          } else {
            for (int b = 0; b < B; ++b) {
              const double* dyr = row(dy, b, c);
              double* dxr = row(dx, b, c);
              for (int i = 0; i < T; ++i) dxr[i] += g * dyr[i];
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& b,
                     int dilation) {
  check_defined(x, "conv1d_causal");
  if (x.ndim() != 3 || w.ndim() != 3)
    throw std::invalid_argument("conv1d_causal: expected x[B,Cin,T], w[Cout,Cin,K]");
  if (dilation < 1) throw std::invalid_argument("conv1d_causal: dilation >= 1");
  const int B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const int Cout = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Cin)
    throw std::invalid_argument("conv1d_causal: kernel/input channel mismatch");
  if (b.ndim() != 1 || b.dim(0) != Cout)
    throw std::invalid_argument("conv1d_causal: bias must be [Cout]");
  Tensor out = make_node({B, Cout, T}, {&x, &w, &b});
  const auto& kr = kern::active();
  for (int s = 0; s < B; ++s) {
    kr.conv1d_fwd(x.data() + static_cast<size_t>(s) * Cin * T, w.data(), b.data(),
                  out.data() + static_cast<size_t>(s) * Cout * T, Cin, Cout, T, K,
                  dilation);
  }
  if (out.requires_grad()) {
    Tensor gx = x, gw = w, gb = b, go = out;
    out.impl()->backward = [gx, gw, gb, go, B, Cin, Cout, T, K, dilation]() mutable {
      const auto& kr = kern::active();
      const double* dy = go.grad().data();
      double* dx = gx.requires_grad() ? grad_of(gx) : nullptr;
      double* dw = gw.requires_grad() ? grad_of(gw) : nullptr;
      double* db = gb.requires_grad() ? grad_of(gb) : nullptr;
      for (int s = 0; s < B; ++s) {
        const double* dys = dy + static_cast<size_t>(s) * Cout * T;
        if (dx)
          kr.conv1d_bwd_x(dys, gw.data(), dx + static_cast<size_t>(s) * Cin * T,
                          Cin, Cout, T, K, dilation);
        if (dw || db)
          kr.conv1d_bwd_w(gx.data() + static_cast<size_t>(s) * Cin * T, dys, dw,
                          db, Cin, Cout, T, K, dilation);
      }
    };
  }
  return out;
}

Tensor channelwise_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined(x, "channelwise_dense");
  if (x.ndim() != 3 || w.ndim() != 3 || b.ndim() != 2)
    throw std::invalid_argument("channelwise_dense: expected x[B,C,Ti], w[C,To,Ti], b[C,To]");
  const int B = x.dim(0), C = x.dim(1), Ti = x.dim(2);
  const int To = w.dim(1);
  if (w.dim(0) != C || w.dim(2) != Ti || b.dim(0) != C || b.dim(1) != To)
    throw std::invalid_argument("channelwise_dense: dimension mismatch");
  Tensor out = make_node({B, C, To}, {&x, &w, &b});
  const auto& kr = kern::active();
  // Rows of one channel are strided across samples; gather into scratch so
  // the gemm sees contiguous input.
  std::vector<double> xc(static_cast<size_t>(B) * Ti);
  std::vector<double> yc(static_cast<size_t>(B) * To);
  for (int c = 0; c < C; ++c) {
    for (int s = 0; s < B; ++s)
      std::memcpy(xc.data() + static_cast<size_t>(s) * Ti,
                  x.data() + (static_cast<size_t>(s) * C + c) * Ti,
                  sizeof(double) * Ti);
    kr.gemm_nt(xc.data(), w.data() + static_cast<size_t>(c) * To * Ti, yc.data(),
               B, Ti, To, false);
    const double* bc = b.data() + static_cast<size_t>(c) * To;
    for (int s = 0; s < B; ++s) {
      double* dst = out.data() + (static_cast<size_t>(s) * C + c) * To;
      const double* src = yc.data() + static_cast<size_t>(s) * To;
      for (int j = 0; j < To; ++j) dst[j] = src[j] + bc[j];
    }
  }
  if (out.requires_grad()) {
    Tensor gx = x, gw = w, gb = b, go = out;
    out.impl()->backward = [gx, gw, gb, go, B, C, Ti, To]() mutable {
      const auto& kr = kern::active();
      const double* dy = go.grad().data();
      double* dxp = gx.requires_grad() ? grad_of(gx) : nullptr;
      double* dwp = gw.requires_grad() ? grad_of(gw) : nullptr;
      double* dbp = gb.requires_grad() ? grad_of(gb) : nullptr;
      std::vector<double> dyc(static_cast<size_t>(B) * To);
      std::vector<double> xc(static_cast<size_t>(B) * Ti);
      std::vector<double> dxc(static_cast<size_t>(B) * Ti);
      for (int c = 0; c < C; ++c) {
        for (int s = 0; s < B; ++s)
          std::memcpy(dyc.data() + static_cast<size_t>(s) * To,
                      dy + (static_cast<size_t>(s) * C + c) * To,
                      sizeof(double) * To);
        if (dbp) {
          double* dbc = dbp + static_cast<size_t>(c) * To;
          for (int s = 0; s < B; ++s) {
            const double* row = dyc.data() + static_cast<size_t>(s) * To;
            for (int j = 0; j < To; ++j) dbc[j] += row[j];
          }
        }
        if (dxp || dwp) {
          for (int s = 0; s < B; ++s)
            std::memcpy(xc.data() + static_cast<size_t>(s) * Ti,
                        gx.data() + (static_cast<size_t>(s) * C + c) * Ti,
                        sizeof(double) * Ti);
        }
        if (dwp) {
          // dW_c [To,Ti] += dY_c^T [To,B] * X_c [B,Ti]
          kr.gemm_tn(dyc.data(), xc.data(), dwp + static_cast<size_t>(c) * To * Ti,
                     To, B, Ti, true);
        }
        if (dxp) {
          kr.gemm_nn(dyc.data(), gw.data() + static_cast<size_t>(c) * To * Ti,
                     dxc.data(), B, To, Ti, false);
          for (int s = 0; s < B; ++s) {
            double* dst = dxp + (static_cast<size_t>(s) * C + c) * Ti;
            const double* src = dxc.data() + static_cast<size_t>(s) * Ti;
            for (int j = 0; j < Ti; ++j) dst[j] += src[j];
          }
        }
      }
    };
  }
  return out;
}

Tensor local_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined(x, "local_dense");
  if (x.ndim() != 3 || w.ndim() != 3 || b.ndim() != 2)
    throw std::invalid_argument("local_dense: expected x[B,C,H], w[H,F,C], b[H,F]");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2);
  const int F = w.dim(1);
  if (w.dim(0) != H || w.dim(2) != C || b.dim(0) != H || b.dim(1) != F)
    throw std::invalid_argument("local_dense: dimension mismatch");
  Tensor out = make_node({B, H, F}, {&x, &w, &b});
  const auto& kr = kern::active();
  std::vector<double> xrow(C);
  for (int s = 0; s < B; ++s) {
    for (int h = 0; h < H; ++h) {
      for (int c = 0; c < C; ++c)
        xrow[c] = x.data()[(static_cast<size_t>(s) * C + c) * H + h];
      double* yo = out.data() + (static_cast<size_t>(s) * H + h) * F;
      const double* wh = w.data() + static_cast<size_t>(h) * F * C;
      const double* bh = b.data() + static_cast<size_t>(h) * F;
      for (int f = 0; f < F; ++f)
        yo[f] = kr.dot(wh + static_cast<size_t>(f) * C, xrow.data(), C) + bh[f];
    }
  }
  if (out.requires_grad()) {
    Tensor gx = x, gw = w, gb = b, go = out;
    out.impl()->backward = [gx, gw, gb, go, B, C, H, F]() mutable {
      const auto& kr = kern::active();
      const double* dy = go.grad().data();
      double* dxp = gx.requires_grad() ? grad_of(gx) : nullptr;
      double* dwp = gw.requires_grad() ? grad_of(gw) : nullptr;
      double* dbp = gb.requires_grad() ? grad_of(gb) : nullptr;
      std::vector<double> xrow(C), dxrow(C);
      for (int s = 0; s < B; ++s) {
        for (int h = 0; h < H; ++h) {
          const double* dyo = dy + (static_cast<size_t>(s) * H + h) * F;
          const double* wh = gw.data() + static_cast<size_t>(h) * F * C;
          for (int c = 0; c < C; ++c)
            xrow[c] = gx.data()[(static_cast<size_t>(s) * C + c) * H + h];
          if (dbp) {
            double* dbh = dbp + static_cast<size_t>(h) * F;
            for (int f = 0; f < F; ++f) dbh[f] += dyo[f];
          }
          if (dwp) {
            double* dwh = dwp + static_cast<size_t>(h) * F * C;
            for (int f = 0; f < F; ++f)
              kr.axpy(dwh + static_cast<size_t>(f) * C, xrow.data(), dyo[f], C);
          }
          if (dxp) {
            std::fill(dxrow.begin(), dxrow.end(), 0.0);
            for (int f = 0; f < F; ++f)
              kr.axpy(dxrow.data(), wh + static_cast<size_t>(f) * C, dyo[f], C);
            for (int c = 0; c < C; ++c)
              dxp[(static_cast<size_t>(s) * C + c) * H + h] += dxrow[c];
          }
        }
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
  check_defined(table, "gather_rows");
  if (table.ndim() != 2) throw std::invalid_argument("gather_rows: expected [V,E]");
  const int V = table.dim(0), E = table.dim(1);
  for (int i : idx) {
    if (i < 0 || i >= V) throw std::out_of_range("gather_rows: index out of range");
  }
  const int N = static_cast<int>(idx.size());
  Tensor out = make_node({N, E}, {&table});
  for (int r = 0; r < N; ++r)
    std::memcpy(out.data() + static_cast<size_t>(r) * E,
                table.data() + static_cast<size_t>(idx[r]) * E, sizeof(double) * E);
  if (out.requires_grad()) {
    Tensor gt = table, go = out;
    out.impl()->backward = [gt, go, idx, E]() mutable {
      const double* dy = go.grad().data();
      double* dt = grad_of(gt);
      for (size_t r = 0; r < idx.size(); ++r) {
        double* dst = dt + static_cast<size_t>(idx[r]) * E;
        const double* src = dy + r * E;
        for (int j = 0; j < E; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

Tensor rows_to_channels(const Tensor& x, int batch, int time) {
  check_defined(x, "rows_to_channels");
  if (x.ndim() != 2 || x.dim(0) != batch * time)
    throw std::invalid_argument("rows_to_channels: expected [batch*time,E]");
  const int E = x.dim(1);
  Tensor out = make_node({batch, E, time}, {&x});
  for (int s = 0; s < batch; ++s) {
    for (int t = 0; t < time; ++t) {
      const double* src = x.data() + (static_cast<size_t>(s) * time + t) * E;
      for (int e = 0; e < E; ++e)
        out.data()[(static_cast<size_t>(s) * E + e) * time + t] = src[e];
    }
  }
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go, batch, time, E]() mutable {
      const double* dy = go.grad().data();
      double* dx = grad_of(gx);
      for (int s = 0; s < batch; ++s) {
        for (int t = 0; t < time; ++t) {
          double* dst = dx + (static_cast<size_t>(s) * time + t) * E;
          for (int e = 0; e < E; ++e)
            dst[e] += dy[(static_cast<size_t>(s) * E + e) * time + t];
        }
      }
    };
  }
  return out;
}

namespace {

Tensor concat_impl(const std::vector<Tensor>& parts, bool channels) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int nd = channels ? 3 : 2;
  const Tensor& first = parts.front();
  if (first.ndim() != nd) throw std::invalid_argument("concat: unexpected rank");
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != nd) throw std::invalid_argument("concat: rank mismatch");
    if (p.dim(0) != first.dim(0)) throw std::invalid_argument("concat: leading dim mismatch");
    if (channels && p.dim(2) != first.dim(2))
      throw std::invalid_argument("concat_channels: time dim mismatch");
    total += p.dim(1);
  }

  std::vector<int> out_shape = channels ? std::vector<int>{first.dim(0), total, first.dim(2)}
                                        : std::vector<int>{first.dim(0), total};
  Tensor out = Tensor::zeros(out_shape);
  bool rg = false;
  if (grad_enabled()) {
    for (const Tensor& p : parts) rg = rg || p.requires_grad();
  }
  if (rg) {
    out.set_requires_grad(true);
    for (const Tensor& p : parts) out.impl()->parents.push_back(p);
  }

  const int B = first.dim(0);
  const size_t inner = channels ? static_cast<size_t>(first.dim(2)) : 1;
  size_t acc_off = 0;
  for (const Tensor& p : parts) {
    const size_t span = static_cast<size_t>(p.dim(1)) * inner;
    for (int s = 0; s < B; ++s)
      std::memcpy(out.data() + (static_cast<size_t>(s) * total) * inner + acc_off,
                  p.data() + static_cast<size_t>(s) * span, sizeof(double) * span);
    acc_off += span;
  }

  if (rg) {
    std::vector<Tensor> gps = parts;
    Tensor go = out;
    out.impl()->backward = [gps, go, B, total, inner]() mutable {
      const double* dy = go.grad().data();
      size_t acc_off = 0;
      for (Tensor& p : gps) {
        const size_t span = static_cast<size_t>(p.dim(1)) * inner;
        if (p.requires_grad()) {
          double* dp = grad_of(p);
          for (int s = 0; s < B; ++s) {
            const double* src = dy + (static_cast<size_t>(s) * total) * inner + acc_off;
            double* dst = dp + static_cast<size_t>(s) * span;
            for (size_t j = 0; j < span; ++j) dst[j] += src[j];
          }
        }
        acc_off += span;
      }
    };
  }
  return out;
}

}  // namespace

Tensor concat_channels(const std::vector<Tensor>& parts) { return concat_impl(parts, true); }
Tensor concat_cols(const std::vector<Tensor>& parts) { return concat_impl(parts, false); }

Tensor sub_bcast_rows(const Tensor& x, const Tensor& v) {
  check_defined(x, "sub_bcast_rows");
  if (x.ndim() != 3 || v.ndim() != 2 || x.dim(0) != v.dim(0) || x.dim(2) != v.dim(1))
    throw std::invalid_argument("sub_bcast_rows: expected x[B,H,C], v[B,C]");
  const int B = x.dim(0), H = x.dim(1), C = x.dim(2);
  Tensor out = make_node(x.shape(), {&x, &v});
  for (int s = 0; s < B; ++s) {
    const double* vs = v.data() + static_cast<size_t>(s) * C;
    for (int h = 0; h < H; ++h) {
      const double* xs = x.data() + (static_cast<size_t>(s) * H + h) * C;
      double* ys = out.data() + (static_cast<size_t>(s) * H + h) * C;
      for (int c = 0; c < C; ++c) ys[c] = xs[c] - vs[c];
    }
  }
  if (out.requires_grad()) {
    Tensor gx = x, gv = v, go = out;
    out.impl()->backward = [gx, gv, go, B, H, C]() mutable {
      const double* dy = go.grad().data();
      if (gx.requires_grad()) {
        double* dx = grad_of(gx);
        for (size_t i = 0; i < go.size(); ++i) dx[i] += dy[i];
      }
      if (gv.requires_grad()) {
        double* dv = grad_of(gv);
        for (int s = 0; s < B; ++s) {
          double* dvs = dv + static_cast<size_t>(s) * C;
          for (int h = 0; h < H; ++h) {
            const double* row = dy + (static_cast<size_t>(s) * H + h) * C;
            for (int c = 0; c < C; ++c) dvs[c] -= row[c];
          }
        }
      }
    };
  }
  return out;
}

Tensor mul_bcast_rows(const Tensor& x, const Tensor& v) {
  check_defined(x, "mul_bcast_rows");
  if (x.ndim() != 3 || v.ndim() != 2 || x.dim(0) != v.dim(0) || x.dim(2) != v.dim(1))
    throw std::invalid_argument("mul_bcast_rows: expected x[B,H,C], v[B,C]");
  const int B = x.dim(0), H = x.dim(1), C = x.dim(2);
  Tensor out = make_node(x.shape(), {&x, &v});
  for (int s = 0; s < B; ++s) {
    const double* vs = v.data() + static_cast<size_t>(s) * C;
    for (int h = 0; h < H; ++h) {
      const double* xs = x.data() + (static_cast<size_t>(s) * H + h) * C;
      double* ys = out.data() + (static_cast<size_t>(s) * H + h) * C;
      for (int c = 0; c < C; ++c) ys[c] = xs[c] * vs[c];
    }
  }
  if (out.requires_grad()) {
    Tensor gx = x, gv = v, go = out;
    out.impl()->backward = [gx, gv, go, B, H, C]() mutable {
      const double* dy = go.grad().data();
      double* dx = gx.requires_grad() ? grad_of(gx) : nullptr;
      double* dv = gv.requires_grad() ? grad_of(gv) : nullptr;
      for (int s = 0; s < B; ++s) {
        const double* vs = gv.data() + static_cast<size_t>(s) * C;
        double* dvs = dv ? dv + static_cast<size_t>(s) * C : nullptr;
        for (int h = 0; h < H; ++h) {
          const size_t base = (static_cast<size_t>(s) * H + h) * C;
          const double* row_dy = dy + base;
          const double* row_x = gx.data() + base;
          if (dx) {
            double* row_dx = dx + base;
            for (int c = 0; c < C; ++c) row_dx[c] += row_dy[c] * vs[c];
          }
          if (dvs) {
            for (int c = 0; c < C; ++c) dvs[c] += row_dy[c] * row_x[c];
          }
        }
      }
    };
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  check_defined(x, "reshape");
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  if (n != x.size()) throw std::invalid_argument("reshape: element count mismatch");
  Tensor out;
  out.impl_ = std::make_shared<Tensor::Impl>();
  out.impl_->shape = std::move(shape);
  out.impl_->vals = x.impl()->vals;  // shared storage
  if (grad_enabled() && x.requires_grad()) {
    out.impl_->requires_grad = true;
    out.impl_->parents.push_back(x);
    // Share the gradient buffer as well; accumulation lands directly in the
    // parent, so the node itself has nothing to do.
    Tensor gx = x;
    gx.grad();
    out.impl_->grad = gx.impl()->grad;
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  check_defined(x, "sum_all");
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = make_node({1}, {&x});
  out.data()[0] = s;
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go]() mutable {
      const double dy = go.grad()[0];
      double* dx = grad_of(gx);
      for (size_t i = 0; i < gx.size(); ++i) dx[i] += dy;
    };
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  check_defined(x, "mean_all");
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = make_node({1}, {&x});
  out.data()[0] = s * inv;
  if (out.requires_grad()) {
    Tensor gx = x, go = out;
    out.impl()->backward = [gx, go, inv]() mutable {
      const double dy = go.grad()[0] * inv;
      double* dx = grad_of(gx);
      for (size_t i = 0; i < gx.size(); ++i) dx[i] += dy;
    };
  }
  return out;
}

}  // namespace drx
