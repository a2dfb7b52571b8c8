#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "drx/forecast.hpp"
#include "drx/rng.hpp"

namespace drx::forecast {

void TrainingConfig::validate() const {
  if (batch_size < 2)
    throw std::invalid_argument("TrainingConfig: batch_size >= 2 required");
  if (epochs < 0) throw std::invalid_argument("TrainingConfig: epochs >= 0");
  if (eval_quantiles.empty())
    throw std::invalid_argument("TrainingConfig: no evaluation quantiles");
  for (double q : eval_quantiles) {
    if (!(q > 0.0 && q < 1.0))
      throw std::invalid_argument("TrainingConfig: quantiles must lie in (0,1)");
  }
}

double quantile_loss(std::span<const double> targets,
                     std::span<const double> predictions,
                     std::span<const double> quantiles) {
  if (targets.size() != predictions.size())
    throw std::invalid_argument("quantile_loss: size mismatch");
  if (targets.empty() || quantiles.empty())
    throw std::invalid_argument("quantile_loss: empty input");
  for (double q : quantiles) {
    if (!(q > 0.0 && q < 1.0))
      throw std::invalid_argument("quantile_loss: quantile outside (0,1)");
  }
  double acc = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    const double e = targets[i] - predictions[i];
    for (double q : quantiles) acc += e >= 0.0 ? q * e : (q - 1.0) * e;
  }
  return acc / (static_cast<double>(targets.size()) * static_cast<double>(quantiles.size()));
}

namespace {

// Graph-side pinball with one quantile per sample, averaged over samples and
// horizon.
Tensor pinball_graph(const Tensor& pred, const Tensor& target_leaf,
                     const Tensor& q_leaf, const Tensor& qm1_leaf) {
  Tensor err = sub(target_leaf, pred);
  return mean_all(maximum(mul(q_leaf, err), mul(qm1_leaf, err)));
}

Tensor l2_conv_penalty(ModelState& model, double lambda) {
  Tensor acc;
  for (size_t i = 0; i < model.dims.dilations.size(); ++i) {
    Tensor w = model.params.at("dcnn.conv" + std::to_string(i) + ".w");
    Tensor sq = sum_all(mul(w, w));
    acc = acc.defined() ? add(acc, sq) : sq;
  }
  return scale(acc, lambda);
}

double eval_batch_aql(ModelState& model, std::span<const ForecastWindow> windows,
                      std::span<const double> quantiles) {
  NoGradGuard ng;
  const int H = model.dims.horizon;
  constexpr int kEvalBatch = 64;
  double acc = 0.0;
  size_t terms = 0;
  for (double q : quantiles) {
    for (size_t start = 0; start < windows.size(); start += kEvalBatch) {
      const size_t end = std::min(windows.size(), start + kEvalBatch);
      std::vector<const ForecastWindow*> batch;
      std::vector<double> qs(end - start, q);
      for (size_t i = start; i < end; ++i) batch.push_back(&windows[i]);
      Tensor out = model_forward(model, batch, qs, false);
      for (size_t i = 0; i < batch.size(); ++i) {
        for (int h = 0; h < H; ++h) {
          const double e = batch[i]->target[static_cast<size_t>(h)] -
                           out.values()[i * static_cast<size_t>(H) + h];
          acc += e >= 0.0 ? q * e : (q - 1.0) * e;
          ++terms;
        }
      }
    }
  }
  return acc / static_cast<double>(terms);
}

}  // namespace

double evaluate_aql(ModelState& model, std::span<const ForecastWindow> windows,
                    std::span<const double> quantiles) {
  if (windows.empty()) throw std::invalid_argument("evaluate_aql: no windows");
  return eval_batch_aql(model, windows, quantiles);
}

TrainedModel train(ModelState initial,
                   const std::vector<ForecastWindow>& train_windows,
                   const std::vector<ForecastWindow>& val_windows,
                   const TrainingConfig& config) {
  config.validate();
  if (train_windows.empty()) throw std::invalid_argument("train: no training windows");

  TrainedModel result;
  ModelState& model = initial;
  const int H = model.dims.horizon;

  AdamState adam;
  adam.lr = config.lr;
  Rng rng(subseed(config.seed, "train"));

  ModelState best = model.clone_values();
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  std::vector<size_t> order(train_windows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

    double epoch_loss = 0.0;
    size_t epoch_samples = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const size_t bs = end - start;
      if (bs < 2) continue;  // batchnorm needs at least two samples

      std::vector<const ForecastWindow*> batch;
      std::vector<double> qs;
      Tensor target = Tensor::zeros({static_cast<int>(bs), H});
      Tensor qmat = Tensor::zeros({static_cast<int>(bs), H});
      Tensor qm1 = Tensor::zeros({static_cast<int>(bs), H});
      for (size_t i = start; i < end; ++i) {
        const ForecastWindow& w = train_windows[order[i]];
        batch.push_back(&w);
        const double q = rng.uniform();
        qs.push_back(q);
        const size_t row = i - start;
        for (int h = 0; h < H; ++h) {
          target.values()[row * static_cast<size_t>(H) + h] = w.target[static_cast<size_t>(h)];
          qmat.values()[row * static_cast<size_t>(H) + h] = q;
          qm1.values()[row * static_cast<size_t>(H) + h] = q - 1.0;
        }
      }

      Tensor pred = model_forward(model, batch, qs, true);
      Tensor loss = pinball_graph(pred, target, qmat, qm1);
      if (config.l2_lambda > 0.0) loss = add(loss, l2_conv_penalty(model, config.l2_lambda));
      const double loss_v = loss.item();
      if (!std::isfinite(loss_v))
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      model.params.zero_grads();
      backward(loss);
      adam_step(model.params, adam);

      epoch_loss += loss_v * static_cast<double>(bs);
      epoch_samples += bs;
    }
    result.train_loss_history.push_back(epoch_loss / static_cast<double>(epoch_samples));

    double val_aql = std::numeric_limits<double>::quiet_NaN();
    if (!val_windows.empty()) {
      val_aql = eval_batch_aql(model, val_windows, config.eval_quantiles);
      if (val_aql < best_val) {
        best_val = val_aql;
        best_epoch = epoch;
        best = model.clone_values();
      }
    }
    result.val_aql_history.push_back(val_aql);
  }

  if (config.epochs == 0 || val_windows.empty()) {
    result.state = model.clone_values();
    result.best_epoch = config.epochs == 0 ? -1 : config.epochs - 1;
  } else {
    result.state = std::move(best);
    result.best_epoch = best_epoch;
  }
  return result;
}

}  // namespace drx::forecast
