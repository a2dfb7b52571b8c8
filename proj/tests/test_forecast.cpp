#include <cmath>
#include <numeric>

#include "doctest.h"
#include "drx/forecast.hpp"
#include "drx/rng.hpp"
#include "drx/sim.hpp"

using namespace drx;
using namespace drx::forecast;

namespace {

sim::SimDataset small_dataset(uint64_t seed, int n_consumers = 2, int months = 6) {
  sim::ConsumerRanges ranges;
  std::vector<sim::ConsumerSpec> consumers;
  std::vector<std::array<double, 24>> avgs;
  for (int i = 0; i < n_consumers; ++i) {
    auto s = sim::sample_consumer(ranges, subseed(seed, "consumer/" + std::to_string(i)));
    s.id = "c" + std::to_string(i);
    consumers.push_back(s);
    avgs.push_back(sim::consumer_avg_profile(s));
  }
  auto t_in = sim::curate_profiles_in(avgs, 5, subseed(seed, "tin"));
  return sim::simulate(consumers, t_in, months, subseed(seed, "sim"));
}

ForecastWindow toy_window(Rng& rng, const ModelDims& dims, bool with_indicator) {
  ForecastWindow w;
  w.consumer_index = 0;
  w.consumer_id = "c0";
  w.target_day = 0;
  for (int i = 0; i < dims.lookback; ++i) {
    w.past_consumption.push_back(rng.uniform(-1.5, 1.5));
    w.past_rate_level.push_back(static_cast<int>(rng.uniform_int(0, 2)));
    w.past_hod.push_back(static_cast<int>(rng.uniform_int(0, 23)));
    w.past_dow.push_back(static_cast<int>(rng.uniform_int(0, 6)));
    w.past_month.push_back(static_cast<int>(rng.uniform_int(0, 11)));
  }
  for (int h = 0; h < dims.horizon; ++h) {
    w.future_rate_level.push_back(static_cast<int>(rng.uniform_int(0, 2)));
    w.future_hod.push_back(h % 24);
    w.future_dow.push_back(static_cast<int>(rng.uniform_int(0, 6)));
    w.future_month.push_back(static_cast<int>(rng.uniform_int(0, 11)));
    w.target.push_back(rng.uniform(-1.5, 1.5));
  }
  if (with_indicator) {
    w.future_shift_indicator.assign(static_cast<size_t>(dims.horizon), 0.0);
    w.future_shift_indicator[static_cast<size_t>(rng.uniform_int(0, dims.horizon - 1))] = 1.0;
  }
  return w;
}

ForecastWindow default_window(Rng& rng, bool with_indicator = true) {
  ModelDims dims;
  return toy_window(rng, dims, with_indicator);
}

std::vector<double> predict_median_z(ModelState& model, const ForecastWindow& w) {
  Normalization unit;  // mean 0, std 1: z-scale output
  unit.stddev = 1.0;
  auto out = predict(model, w, std::vector<double>{0.5}, unit);
  std::vector<double> flat;
  for (const auto& row : out) flat.push_back(row[0]);
  return flat;
}

}  // namespace

TEST_CASE("featurize window counts and split boundaries") {
  auto ds = small_dataset(31);
  SplitSpec split;
  auto norm = compute_normalization(ds, split);
  REQUIRE(norm.size() == 2);

  auto train_w = featurize(ds, Split::train, split, norm);
  auto val_w = featurize(ds, Split::val, split, norm);
  auto test_w = featurize(ds, Split::test, split, norm);
  // per consumer: split_days - 7 windows (30-day months, shift 24h)
  CHECK(train_w.size() == 2 * (120 - 7));
  CHECK(val_w.size() == 2 * 23);
  CHECK(test_w.size() == 2 * 23);

  // no cross-split leakage: val windows start at the val split's 8th day
  for (const auto& w : val_w) {
    CHECK(w.target_day >= 120 + 7);
    CHECK(w.target_day < 150);
  }
  for (const auto& w : train_w) CHECK(w.target_day >= 7);

  // windows carry day-aligned calendars
  for (const auto& w : test_w) {
    CHECK(w.future_hod[0] == 0);
    CHECK(w.future_hod[23] == 23);
    CHECK(static_cast<int>(w.past_consumption.size()) == 168);
  }

  SplitSpec tiny;
  tiny.train_months = 4;
  tiny.val_months = 0;
  tiny.test_months = 2;
  CHECK_THROWS(featurize(ds, Split::val, tiny, norm));
}

TEST_CASE("z-normalization uses train stats with a floored std") {
  sim::ConsumerSpec flat;
  flat.id = "flat";
  flat.sub_consumers = 3;
  flat.working_days_per_week = 0;  // never works: constant idle consumption
  flat.work_start_hour = 9;
  flat.break_start_hour = 13;
  flat.work_duration_hours = 8;
  flat.shiftable_kw = 600;
  flat.per_sub_load_kw = 50;
  flat.idle_load_kw = 10;
  flat.noise_sigma = 0.0;

  auto profiles = sim::sample_profiles_out(3, 9, {});
  auto ds = sim::simulate({flat}, profiles, 6, 4);
  SplitSpec split;
  auto norm = compute_normalization(ds, split);
  CHECK(norm[0].mean == 10.0);
  CHECK(norm[0].stddev == 1e-6);

  auto w = featurize(ds, Split::train, split, norm);
  for (double v : w.front().past_consumption) CHECK(v == 0.0);
  for (double v : w.front().target) CHECK(v == 0.0);
}

TEST_CASE("pe_query_net hand example, identical rows, exact equivariance") {
  {
    Tensor x = Tensor::from_values({2, 1}, {1, 2});
    Tensor lambda = Tensor::from_values({1, 1}, {1});
    Tensor gamma = Tensor::from_values({1, 1}, {1});
    Tensor y = pe_query_net(x, lambda, gamma);
    CHECK(y.values()[0] == doctest::Approx(0.2689414).epsilon(1e-6));
    CHECK(y.values()[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  Rng rng(17);
  {
    // identical rows r: every output row equals sigmoid(r*L - r*G)
    Tensor x = Tensor::zeros({5, 4});
    std::vector<double> r(4);
    for (auto& v : r) v = rng.uniform(-1, 1);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) x.values()[i * 4 + j] = r[j];
    Tensor lambda = Tensor::zeros({4, 6}), gamma = Tensor::zeros({4, 6});
    for (auto& v : lambda.values()) v = rng.uniform(-1, 1);
    for (auto& v : gamma.values()) v = rng.uniform(-1, 1);
    Tensor y = pe_query_net(x, lambda, gamma);
    for (int i = 1; i < 5; ++i)
      for (int j = 0; j < 6; ++j)
        CHECK(y.values()[i * 6 + j] == doctest::Approx(y.values()[j]).epsilon(1e-15));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const int H = 7, d = 5, dp = 6;
    Tensor x = Tensor::zeros({H, d});
    for (auto& v : x.values()) v = rng.uniform(-2, 2);
    Tensor lambda = Tensor::zeros({d, dp}), gamma = Tensor::zeros({d, dp});
    for (auto& v : lambda.values()) v = rng.uniform(-1, 1);
    for (auto& v : gamma.values()) v = rng.uniform(-1, 1);
    Tensor y = pe_query_net(x, lambda, gamma);

    std::vector<int> perm(H);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = H - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    Tensor px = Tensor::zeros({H, d});
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < d; ++j) px.values()[i * d + j] = x.values()[perm[i] * d + j];
    Tensor py = pe_query_net(px, lambda, gamma);
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < dp; ++j)
        CHECK(std::fabs(py.values()[i * dp + j] - y.values()[perm[i] * dp + j]) <= 1e-9);
  }
}

TEST_CASE("assemble_model: deterministic parameter layout per variant") {
  ModelDims dims;
  for (Variant v : all_variants()) {
    auto a = assemble_model(v, dims, 7);
    auto b = assemble_model(v, dims, 7);
    CHECK(a.params.total_values() == b.params.total_values());
    auto ia = a.params.begin();
    for (auto& [name, t] : b.params) {
      CHECK(ia->first == name);
      CHECK(ia->second.values() == t.values());
      ++ia;
    }
  }
  CHECK(assemble_model(Variant::NoX, dims, 1).params.total_values() <
        assemble_model(Variant::FC, dims, 1).params.total_values());
}

TEST_CASE("NoX ignores future tariffs; Ind is per-hour local") {
  Rng rng(23);
  ModelDims dims;
  auto w = default_window(rng);

  auto nox = assemble_model(Variant::NoX, dims, 3);
  auto base = predict_median_z(nox, w);
  ForecastWindow w2 = w;
  for (auto& r : w2.future_rate_level) r = (r + 1) % 3;
  auto perturbed = predict_median_z(nox, w2);
  CHECK(base == perturbed);

  auto ind = assemble_model(Variant::Ind, dims, 3);
  auto ind_base = predict_median_z(ind, w);
  ForecastWindow w3 = w;
  w3.future_rate_level[5] = (w3.future_rate_level[5] + 1) % 3;
  auto ind_pert = predict_median_z(ind, w3);
  for (int h = 0; h < 24; ++h) {
    if (h == 5) continue;
    CHECK(ind_base[h] == ind_pert[h]);
  }
}

TEST_CASE("attention variants: shapes, flat-profile degeneracy, equivariance") {
  Rng rng(29);
  ModelDims dims;
  auto w = default_window(rng);

  for (Variant v : {Variant::Att, Variant::AttNoHOD, Variant::AttPE, Variant::UB}) {
    auto m = assemble_model(v, dims, 11);
    NoGradGuard ng;
    ForwardProbe probe;
    const ForecastWindow* ptr = &w;
    std::vector<double> qs = {0.5};
    model_forward(m, std::span<const ForecastWindow* const>(&ptr, 1), qs, false, &probe);
    REQUIRE(probe.tariff_context.defined());
    CHECK(probe.tariff_context.shape() == std::vector<int>{1, 24, dims.d});
  }

  // flat profile: identical K/V/Q rows make every context row identical
  {
    auto m = assemble_model(Variant::AttNoHOD, dims, 13);
    ForecastWindow flat = w;
    for (auto& r : flat.future_rate_level) r = 1;
    NoGradGuard ng;
    ForwardProbe probe;
    const ForecastWindow* ptr = &flat;
    std::vector<double> qs = {0.5};
    model_forward(m, std::span<const ForecastWindow* const>(&ptr, 1), qs, false, &probe);
    const auto& ctx = probe.tariff_context.values();
    for (int h = 1; h < 24; ++h)
      for (int j = 0; j < dims.d; ++j)
        CHECK(ctx[h * dims.d + j] == doctest::Approx(ctx[j]).epsilon(1e-12));
  }

  // AttNoHOD: permuting the future rates permutes the context rows
  auto permute_check = [&](Variant v, bool check_context, bool check_q) {
    auto m = assemble_model(v, dims, 17);
    NoGradGuard ng;
    for (int trial = 0; trial < 50; ++trial) {
      ForecastWindow a = default_window(rng);
      std::vector<int> perm(24);
      std::iota(perm.begin(), perm.end(), 0);
      for (int i = 23; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
      ForecastWindow b = a;
      for (int h = 0; h < 24; ++h)
        b.future_rate_level[h] = a.future_rate_level[perm[h]];

      ForwardProbe pa, pb;
      const ForecastWindow* pta = &a;
      const ForecastWindow* ptb = &b;
      std::vector<double> qs = {0.5};
      model_forward(m, std::span<const ForecastWindow* const>(&pta, 1), qs, false, &pa);
      model_forward(m, std::span<const ForecastWindow* const>(&ptb, 1), qs, false, &pb);
      if (check_context) {
        for (int h = 0; h < 24; ++h)
          for (int j = 0; j < dims.d; ++j)
            CHECK(std::fabs(pb.tariff_context.values()[h * dims.d + j] -
                            pa.tariff_context.values()[perm[h] * dims.d + j]) <= 1e-9);
      }
      if (check_q) {
        REQUIRE(pa.pe_query.defined());
        for (int h = 0; h < 24; ++h)
          for (int j = 0; j < dims.d; ++j)
            CHECK(std::fabs(pb.pe_query.values()[h * dims.d + j] -
                            pa.pe_query.values()[perm[h] * dims.d + j]) <= 1e-9);
      }
    }
  };
  permute_check(Variant::AttNoHOD, true, false);
  // AttPE: the Q matrix is equivariant even though hour features feed K and V
  permute_check(Variant::AttPE, false, true);
}

TEST_CASE("FC is not permutation-equivariant (counterexample exists)") {
  Rng rng(37);
  ModelDims dims;
  auto m = assemble_model(Variant::FC, dims, 19);
  bool found = false;
  for (int trial = 0; trial < 20 && !found; ++trial) {
    ForecastWindow a = default_window(rng);
    // ensure the profile is non-constant
    a.future_rate_level[3] = 0;
    a.future_rate_level[17] = 2;
    std::vector<int> perm(24);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 23; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    ForecastWindow b = a;
    for (int h = 0; h < 24; ++h) b.future_rate_level[h] = a.future_rate_level[perm[h]];

    auto ya = predict_median_z(m, a);
    auto yb = predict_median_z(m, b);
    double max_dev = 0.0;
    for (int h = 0; h < 24; ++h)
      max_dev = std::max(max_dev, std::fabs(yb[h] - ya[perm[h]]));
    if (max_dev > 1e-6) found = true;
  }
  CHECK(found);
}

TEST_CASE("quantile loss: unit values and MAE identity") {
  std::vector<double> y = {1.0};
  std::vector<double> yhat = {0.0};
  CHECK(quantile_loss(y, y, std::vector<double>{0.5}) == 0.0);
  CHECK(quantile_loss(y, yhat, std::vector<double>{0.9}) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(quantile_loss(y, yhat, std::vector<double>{0.1}) == doctest::Approx(0.1).epsilon(1e-15));

  Rng rng(41);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> a(40), b(40);
    for (auto& v : a) v = rng.uniform(-5, 5);
    for (auto& v : b) v = rng.uniform(-5, 5);
    double mae = 0.0;
    for (size_t i = 0; i < a.size(); ++i) mae += std::fabs(a[i] - b[i]);
    mae /= static_cast<double>(a.size());
    CHECK(std::fabs(quantile_loss(a, b, std::vector<double>{0.5}) - 0.5 * mae) <= 1e-12);
  }

  CHECK_THROWS(quantile_loss(y, yhat, std::vector<double>{1.0}));
  CHECK_THROWS(quantile_loss(y, yhat, std::vector<double>{0.0}));
}

TEST_CASE("full-model gradients match finite differences on the toy config") {
  ModelDims dims = ModelDims::toy();
  Rng rng(43);
  for (Variant v : all_variants()) {
    auto model = assemble_model(v, dims, 51);
    std::vector<ForecastWindow> wins = {toy_window(rng, dims, true),
                                        toy_window(rng, dims, true)};
    const std::vector<double> qs = {0.3, 0.8};
    auto direct_loss = [&]() {
      std::vector<const ForecastWindow*> batch = {&wins[0], &wins[1]};
      Tensor pred = model_forward(model, batch, qs, true);
      Tensor target = Tensor::zeros({2, dims.horizon});
      Tensor qmat = Tensor::zeros({2, dims.horizon});
      Tensor qm1 = Tensor::zeros({2, dims.horizon});
      for (int s = 0; s < 2; ++s) {
        for (int h = 0; h < dims.horizon; ++h) {
          target.values()[s * dims.horizon + h] = wins[s].target[h];
          qmat.values()[s * dims.horizon + h] = qs[s];
          qm1.values()[s * dims.horizon + h] = qs[s] - 1.0;
        }
      }
      Tensor err = sub(target, pred);
      Tensor pin = mean_all(maximum(mul(qmat, err), mul(qm1, err)));
      Tensor l2 = Tensor::scalar(0.0);
      for (size_t i = 0; i < dims.dilations.size(); ++i) {
        Tensor w = model.params.at("dcnn.conv" + std::to_string(i) + ".w");
        l2 = add(l2, sum_all(mul(w, w)));
      }
      return add(pin, scale(l2, 1e-3));
    };
    auto rep = gradient_check(model.params, direct_loss);
    INFO("variant " << to_string(v) << " worst " << rep.worst_param);
    CHECK(rep.max_rel_err <= 1e-4);
    CHECK(rep.checked > 100);
  }
}

TEST_CASE("training: determinism, zero epochs, loss decreases") {
  ModelDims dims = ModelDims::toy();
  Rng rng(61);
  std::vector<ForecastWindow> train_w, val_w;
  for (int i = 0; i < 24; ++i) train_w.push_back(toy_window(rng, dims, true));
  for (int i = 0; i < 6; ++i) val_w.push_back(toy_window(rng, dims, true));

  TrainingConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 0;
  cfg.seed = 5;

  auto m0 = assemble_model(Variant::AttPE, dims, 71);
  const auto init_vals = m0.params.at("head.l0.w").values();
  auto r0 = train(m0.clone_values(), train_w, val_w, cfg);
  CHECK(r0.state.params.at("head.l0.w").values() == init_vals);
  CHECK(r0.best_epoch == -1);
  CHECK(r0.train_loss_history.empty());

  cfg.epochs = 12;
  cfg.lr = 3e-3;
  auto r1 = train(m0.clone_values(), train_w, val_w, cfg);
  auto r2 = train(m0.clone_values(), train_w, val_w, cfg);
  CHECK(r1.train_loss_history == r2.train_loss_history);
  CHECK(r1.val_aql_history == r2.val_aql_history);
  CHECK(static_cast<int>(r1.train_loss_history.size()) == cfg.epochs);
  CHECK(r1.train_loss_history.back() < r1.train_loss_history.front());
  CHECK(r1.best_epoch >= 0);

  // the returned state is the best-validation snapshot
  double reval = evaluate_aql(r1.state, val_w, cfg.eval_quantiles);
  CHECK(reval == r1.val_aql_history[static_cast<size_t>(r1.best_epoch)]);

  // UB training fails fast when windows lack shift indicators
  auto no_ind = train_w;
  for (auto& w : no_ind) w.future_shift_indicator.clear();
  auto ub = assemble_model(Variant::UB, dims, 72);
  CHECK_THROWS(train(std::move(ub), no_ind, val_w, cfg));
}

TEST_CASE("predict: shape, zeroed head, AQL sanity") {
  ModelDims dims;
  Rng rng(81);
  auto w = default_window(rng);
  auto m = assemble_model(Variant::AttPE, dims, 91);

  Normalization nm;
  nm.mean = 42.0;
  nm.stddev = 3.0;
  std::vector<double> qs = {0.1, 0.5, 0.9};
  auto out = predict(m, w, qs, nm);
  REQUIRE(out.size() == 24);
  REQUIRE(out[0].size() == 3);

  // zero the output layer: predictions collapse to the consumer mean
  for (auto& v : m.params.at("head.l2.w").values()) v = 0.0;
  for (auto& v : m.params.at("head.l2.b").values()) v = 0.0;
  auto zeroed = predict(m, w, qs, nm);
  for (const auto& row : zeroed) {
    for (double v : row) CHECK(v == 42.0);
  }

  std::vector<ForecastWindow> wins = {w, default_window(rng)};
  auto m2 = assemble_model(Variant::FC, dims, 92);
  const double aql = evaluate_aql(m2, wins, qs);
  CHECK(aql >= 0.0);
}
