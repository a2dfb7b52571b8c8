#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drx/ops.hpp"
#include "drx/sim.hpp"
#include "drx/tensor.hpp"

namespace drx::forecast {

// Tariff-processing variants. All share the DCNN history branch and the IQN
// quantile head; they differ in how (and whether) the next-day tariff profile
// is processed.
enum class Variant { NoX, Ind, FC, PE, Att, AttNoHOD, AttPE, UB };

const std::vector<Variant>& all_variants();
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelDims {
  int lookback = 168;
  int horizon = 24;
  int d = 10;        // attention width (Q, K, V)
  int d_prime = 20;  // permutation-equivariant query width
  int conv_filters = 16;
  int conv_kernel = 2;
  std::vector<int> dilations = {1, 2, 4};
  int cwfc_units = 24;  // equals horizon
  int local_filters = 10;
  int calendar_embed = 5;
  int tariff_embed = 10;
  std::vector<int> head_units = {40, 10, 1};
  int iqn_basis = 8;

  void validate() const;
  // Small configuration with a 2-hour horizon for gradient suites.
  static ModelDims toy();
};

struct Normalization {
  double mean = 0.0;
  double stddev = 1.0;  // floored at 1e-6
};

struct ForecastWindow {
  int consumer_index = 0;
  std::string consumer_id;
  int target_day = 0;  // absolute day index in the source dataset

  std::vector<double> past_consumption;  // z-normalized, length = lookback
  std::vector<int> past_rate_level;
  std::vector<int> past_hod, past_dow, past_month;

  std::vector<int> future_rate_level;  // length = horizon
  std::vector<int> future_hod, future_dow, future_month;
  std::vector<double> future_shift_indicator;  // empty unless built with one
  std::string future_profile_id;

  std::vector<double> target;  // z-normalized, length = horizon
};

enum class Split { train, val, test };

struct SplitSpec {
  int train_months = 4;
  int val_months = 1;
  int test_months = 1;
  int first_day(Split s) const;
  int day_count(Split s) const;
};

// Train-split per-consumer mean/std of hourly consumption.
std::vector<Normalization> compute_normalization(const sim::SimDataset& ds,
                                                 const SplitSpec& split);

// Windows with lookback w, horizon one day, shift one day, built strictly
// inside the split (the first 7 days of a split serve as lookback only).
std::vector<ForecastWindow> featurize(const sim::SimDataset& ds, Split split,
                                      const SplitSpec& spec,
                                      const std::vector<Normalization>& norm,
                                      int lookback = 168);

// Counterfactual rebuild of a window under a different next-day profile:
// same history, future tariffs/targets/shift indicator regenerated by the
// simulator for the replacement profile.
ForecastWindow with_future_profile(const ForecastWindow& base,
                                   const sim::ConsumerData& consumer,
                                   const sim::TariffProfile& profile,
                                   const Normalization& norm);

struct ModelState {
  Variant variant = Variant::FC;
  ModelDims dims;
  uint64_t seed = 0;
  ParameterStore params;
  std::vector<BatchNormState> bn;

  ModelState clone_values() const;  // deep copy of values + running stats
  void assign_values(const ModelState& other);
};

ModelState assemble_model(Variant variant, const ModelDims& dims, uint64_t seed);

// sigmoid(x*Lambda - 1*maxpool(x)*Gamma): row i depends on row i plus the
// column-wise max over all rows, so permuting rows permutes outputs. Accepts
// x as [H,d] or batched [B,H,d]; Lambda/Gamma are [d,d'].
Tensor pe_query_net(const Tensor& x, const Tensor& lambda, const Tensor& gamma);

// Optional taps used by the equivariance suites.
struct ForwardProbe {
  Tensor tariff_context;  // [B, H, ctx] before fusion (undefined for NoX)
  Tensor pe_query;        // [B, H, d] (AttPE/UB only)
};

// Batched forward pass at one quantile per sample; returns z-scale
// predictions [B, horizon].
Tensor model_forward(ModelState& model,
                     std::span<const ForecastWindow* const> batch,
                     std::span<const double> quantile_per_sample, bool train,
                     ForwardProbe* probe = nullptr);

// Denormalized kWh forecasts, shape [horizon][quantiles.size()].
std::vector<std::vector<double>> predict(ModelState& model,
                                         const ForecastWindow& window,
                                         std::span<const double> quantiles,
                                         const Normalization& norm);

// Mean pinball over all elements and quantiles; every q must lie in (0,1).
double quantile_loss(std::span<const double> targets,
                     std::span<const double> predictions,
                     std::span<const double> quantiles);

struct TrainingConfig {
  int batch_size = 16;
  int epochs = 200;
  double lr = 1e-4;
  double l2_lambda = 1e-3;
  std::vector<double> eval_quantiles = {0.1, 0.5, 0.9};
  uint64_t seed = 0;

  void validate() const;
};

struct TrainedModel {
  ModelState state;  // parameters at the best-validation epoch
  std::vector<std::string> consumer_ids;
  std::vector<Normalization> norm;  // aligned with consumer_ids
  std::vector<double> train_loss_history;
  std::vector<double> val_aql_history;
  int best_epoch = -1;  // -1 when trained for zero epochs
};

// AQL on the z-normalized scale at the config's evaluation quantiles.
double evaluate_aql(ModelState& model, std::span<const ForecastWindow> windows,
                    std::span<const double> quantiles);

TrainedModel train(ModelState initial,
                   const std::vector<ForecastWindow>& train_windows,
                   const std::vector<ForecastWindow>& val_windows,
                   const TrainingConfig& config);

}  // namespace drx::forecast
