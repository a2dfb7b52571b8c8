#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace drx {

// Dense fp64 tensor with reverse-mode autodiff. A Tensor is a cheap shared
// handle; ops build a graph of nodes, backward(loss) walks it in reverse
// topological order and accumulates gradients into every reachable tensor
// that requires_grad.
class Tensor {
 public:
  struct Impl {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> vals;
    std::shared_ptr<std::vector<double>> grad;  // lazily allocated
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void()> backward;
  };

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  size_t size() const { return impl_->vals->size(); }

  std::vector<double>& values() { return *impl_->vals; }
  const std::vector<double>& values() const { return *impl_->vals; }
  double* data() { return impl_->vals->data(); }
  const double* data() const { return impl_->vals->data(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return impl_->grad != nullptr; }
  // Allocates a zero gradient buffer on first use.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();
  void drop_grad() { impl_->grad.reset(); }

  double item() const;

  Impl* impl() const { return impl_.get(); }
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode sweep from a scalar loss. Throws if loss is not scalar.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);

// Thread-local gradient mode; predictions and finite-difference probes run
// under NoGradGuard so no graph is recorded.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

// Named parameters with deterministic (lexicographic) iteration order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  size_t count() const { return params_.size(); }
  size_t total_values() const;
  void zero_grads();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> moments;
};

// One Adam step over every parameter; throws naming the parameter if a
// gradient is missing.
void adam_step(ParameterStore& params, AdamState& state);

// Glorot-style uniform init in +/- sqrt(6/(fan_in+fan_out)), seeded from the
// parameter name hash combined with the run seed.
Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out,
                      const std::string& name, uint64_t run_seed);

// Central finite-difference check of d(loss)/d(params). loss_fn must be a
// pure function of the parameter values.
struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_param;
  size_t checked = 0;
  size_t skipped_nonsmooth = 0;  // coordinates with a kink inside [x-h, x+h]
};
GradCheckReport gradient_check(ParameterStore& params,
                               const std::function<Tensor()>& loss_fn,
                               double h = 1e-5);

}  // namespace drx
