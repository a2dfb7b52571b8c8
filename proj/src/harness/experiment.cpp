#include <atomic>
#include <limits>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "json.hpp"

#include "drx/harness.hpp"
#include "drx/rng.hpp"

namespace drx::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Merge one timing entry into the cell's meta.json.
void record_timing(const fs::path& dir, const std::string& key, double seconds) {
  fs::create_directories(dir);
  const fs::path path = dir / "meta.json";
  json j = json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    j = json::parse(in);
  }
  j[key] = seconds;
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(1) << "\n";
}

alloc::WholesaleOption wholesale_by_tag(const std::string& tag) {
  if (tag == "Option1") return alloc::WholesaleOption::option1();
  if (tag == "Option2") return alloc::WholesaleOption::option2();
  throw std::invalid_argument("unknown wholesale option: " + tag);
}

}  // namespace

BuiltData build_data(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size) {
  cfg.validate();
  BuiltData b;
  sim::ConsumerRanges ranges;
  std::vector<std::array<double, sim::kHoursPerDay>> avgs;
  for (int i = 0; i < cfg.n_consumers; ++i) {
    auto spec = sim::sample_consumer(
        ranges, subseed(run_seed, "consumer/" + std::to_string(i)));
    char id[8];
    std::snprintf(id, sizeof(id), "c%02d", i);
    spec.id = id;
    avgs.push_back(sim::consumer_avg_profile(spec));
    b.consumers.push_back(std::move(spec));
  }
  b.t_in = sim::curate_profiles_in(avgs, tin_size,
                                   subseed(run_seed, "tin/" + std::to_string(tin_size)));
  if (cfg.t_out_size > 0) {
    // T_out stays disjoint from every T_in size of this run so OOD profiles
    // are unseen regardless of the sweep cell.
    std::vector<sim::TariffProfile> exclude;
    for (int k : cfg.t_in_sizes) {
      auto tin_k = sim::curate_profiles_in(avgs, k,
                                           subseed(run_seed, "tin/" + std::to_string(k)));
      exclude.insert(exclude.end(), tin_k.begin(), tin_k.end());
    }
    b.t_out = sim::sample_profiles_out(cfg.t_out_size, subseed(run_seed, "tout"), exclude);
  }
  b.dataset = sim::simulate(b.consumers, b.t_in, cfg.months, subseed(run_seed, "sim"));
  b.split.train_months = cfg.split_months[0];
  b.split.val_months = cfg.split_months[1];
  b.split.test_months = cfg.split_months[2];
  b.norm = forecast::compute_normalization(b.dataset, b.split);
  return b;
}

fs::path cell_dir(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size) {
  return fs::path(cfg.out_dir) / ("seed" + std::to_string(run_seed)) /
         ("tin" + std::to_string(tin_size));
}

fs::path variant_dir(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size,
                     forecast::Variant v) {
  return cell_dir(cfg, run_seed, tin_size) / forecast::to_string(v);
}

void cmd_simulate(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size) {
  const fs::path dir = cell_dir(cfg, run_seed, tin_size);
  const fs::path dataset_csv = dir / "dataset.csv";
  const fs::path tout_csv = dir.parent_path() / "profiles_out.csv";
  if (fs::exists(dataset_csv) && (cfg.t_out_size == 0 || fs::exists(tout_csv))) return;

  BuiltData b = build_data(cfg, run_seed, tin_size);
  write_profiles_csv(dir / "profiles_in.csv", b.t_in);
  if (cfg.t_out_size > 0) {
    write_profiles_csv(tout_csv, b.t_out);
  } else {
    std::cerr << "warning: t_out_size is 0, OOD evaluation disabled\n";
  }
  write_dataset_csv(dataset_csv, b.dataset);
  write_bias_csv(dir / "bias_report.csv", b.dataset);
}

void cmd_train(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size,
               forecast::Variant v) {
  const fs::path vdir = variant_dir(cfg, run_seed, tin_size, v);
  if (fs::exists(vdir / "checkpoint.json")) return;
  const fs::path dataset_csv = cell_dir(cfg, run_seed, tin_size) / "dataset.csv";
  if (!fs::exists(dataset_csv))
    throw std::runtime_error("cmd_train: missing dataset, expected " +
                             dataset_csv.string() + " (run simulate first)");

  const double t0 = now_seconds();
  BuiltData b = build_data(cfg, run_seed, tin_size);
  auto train_w = forecast::featurize(b.dataset, forecast::Split::train, b.split,
                                     b.norm, cfg.lookback);
  auto val_w = forecast::featurize(b.dataset, forecast::Split::val, b.split,
                                   b.norm, cfg.lookback);

  forecast::ModelDims dims;
  dims.lookback = cfg.lookback;
  auto model = forecast::assemble_model(v, dims, subseed(run_seed, "init/" + forecast::to_string(v)));

  forecast::TrainingConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.lr = cfg.lr;
  tc.l2_lambda = cfg.l2_lambda;
  tc.seed = subseed(run_seed, "train/" + forecast::to_string(v));

  auto trained = forecast::train(std::move(model), train_w, val_w, tc);
  for (const auto& c : b.consumers) trained.consumer_ids.push_back(c.id);
  trained.norm = b.norm;

  Csv hist;
  hist.header = {"epoch", "train_loss", "val_aql"};
  for (size_t e = 0; e < trained.train_loss_history.size(); ++e) {
    hist.rows.push_back({std::to_string(e), fmt_double(trained.train_loss_history[e]),
                         fmt_double(trained.val_aql_history[e])});
  }
  write_csv(vdir / "loss_history.csv", hist);
  save_checkpoint(vdir / "checkpoint.json", trained);
  record_timing(vdir, "train_seconds", now_seconds() - t0);
}

AqlResult cmd_evaluate(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size,
                       forecast::Variant v) {
  const fs::path vdir = variant_dir(cfg, run_seed, tin_size, v);
  const fs::path out_csv = vdir / "aql.csv";
  const fs::path ckpt = vdir / "checkpoint.json";
  if (!fs::exists(ckpt))
    throw std::runtime_error("cmd_evaluate: missing checkpoint " + ckpt.string());

  if (fs::exists(out_csv)) {
    AqlResult cached;
    for (const auto& row : read_csv(out_csv).rows) {
      const double aql = std::strtod(row.at(4).c_str(), nullptr);
      if (row.at(2) == "IID") cached.iid = aql;
      else cached.ood = aql;
    }
    return cached;
  }

  const double t0 = now_seconds();
  auto trained = load_checkpoint(ckpt);
  BuiltData b = build_data(cfg, run_seed, tin_size);
  auto test_w = forecast::featurize(b.dataset, forecast::Split::test, b.split,
                                    b.norm, cfg.lookback);
  const std::vector<double> quantiles = {0.1, 0.5, 0.9};

  AqlResult r;
  r.iid = forecast::evaluate_aql(trained.state, test_w, quantiles);

  // OOD: same test days, future profile replaced by each unseen profile and
  // the target regenerated by the simulator.
  if (!b.t_out.empty()) {
    double acc = 0.0;
    for (const auto& profile : b.t_out) {
      std::vector<forecast::ForecastWindow> ood_w;
      ood_w.reserve(test_w.size());
      for (const auto& w : test_w) {
        ood_w.push_back(forecast::with_future_profile(
            w, b.dataset.consumers[static_cast<size_t>(w.consumer_index)], profile,
            b.norm[static_cast<size_t>(w.consumer_index)]));
      }
      acc += forecast::evaluate_aql(trained.state, ood_w, quantiles);
    }
    r.ood = acc / static_cast<double>(b.t_out.size());
  } else {
    r.ood = std::numeric_limits<double>::quiet_NaN();
  }

  Csv t;
  t.header = {"t_in_size", "variant", "scenario", "seed", "aql"};
  t.rows.push_back({std::to_string(tin_size), forecast::to_string(v), "IID",
                    std::to_string(run_seed), fmt_double(r.iid)});
  t.rows.push_back({std::to_string(tin_size), forecast::to_string(v), "OOD",
                    std::to_string(run_seed), fmt_double(r.ood)});
  write_csv(out_csv, t);
  record_timing(vdir, "evaluate_seconds", now_seconds() - t0);
  return r;
}

namespace {

Csv gains_header() {
  Csv t;
  t.header = {"consumer_id", "method",           "scenario",
              "wholesale_option", "chosen_profile_id", "estimated_gain",
              "realized_gain"};
  return t;
}

}  // namespace

void cmd_allocate(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size,
                  forecast::Variant v) {
  const fs::path vdir = variant_dir(cfg, run_seed, tin_size, v);
  const fs::path out_csv = vdir / "gains.csv";
  if (fs::exists(out_csv)) return;
  const fs::path ckpt = vdir / "checkpoint.json";
  if (!fs::exists(ckpt))
    throw std::runtime_error("cmd_allocate: missing checkpoint " + ckpt.string());

  const double t0 = now_seconds();
  auto trained = load_checkpoint(ckpt);
  BuiltData b = build_data(cfg, run_seed, tin_size);
  auto test_w = forecast::featurize(b.dataset, forecast::Split::test, b.split,
                                    b.norm, cfg.lookback);

  std::vector<sim::TariffProfile> t_all = b.t_in;
  t_all.insert(t_all.end(), b.t_out.begin(), b.t_out.end());

  std::vector<alloc::WholesaleOption> options;
  for (const auto& tag : cfg.wholesale_options) options.push_back(wholesale_by_tag(tag));

  Csv t = gains_header();
  const std::vector<double> median_q = {0.5};
  for (const auto& w : test_w) {
    const auto& consumer = b.dataset.consumers[static_cast<size_t>(w.consumer_index)];
    const auto& nm = b.norm[static_cast<size_t>(w.consumer_index)];
    const auto& day = consumer.days[static_cast<size_t>(w.target_day)];

    // Median forecasts are option-independent; compute once per candidate.
    std::map<std::string, std::vector<double>> medians;
    for (const auto& cand : t_all) {
      auto cw = forecast::with_future_profile(w, consumer, cand, nm);
      auto pred = forecast::predict(trained.state, cw, median_q, nm);
      std::vector<double> med(sim::kHoursPerDay);
      for (int h = 0; h < sim::kHoursPerDay; ++h) med[static_cast<size_t>(h)] = pred[static_cast<size_t>(h)][0];
      medians[cand.id] = std::move(med);
    }
    auto forecast_fn = [&](const sim::TariffProfile& p) { return medians.at(p.id); };

    for (const auto& option : options) {
      auto decision = alloc::choose_profile(forecast_fn, t_all, option);
      const sim::TariffProfile* chosen = nullptr;
      for (const auto& cand : t_all) {
        if (cand.id == decision.chosen_profile_id) chosen = &cand;
      }
      const double realized = alloc::realized_gain(consumer.spec, day, *chosen, option);
      t.rows.push_back({consumer.spec.id, forecast::to_string(v), "OOD", option.tag,
                        decision.chosen_profile_id, fmt_double(decision.estimated_gain),
                        fmt_double(realized)});
    }
  }
  write_csv(out_csv, t);
  record_timing(vdir, "allocate_seconds", now_seconds() - t0);
}

void cmd_allocate_oracle(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size) {
  const fs::path dir = cell_dir(cfg, run_seed, tin_size);
  const fs::path out_csv = dir / "oracle_gains.csv";
  if (fs::exists(out_csv)) return;

  BuiltData b = build_data(cfg, run_seed, tin_size);
  auto test_w = forecast::featurize(b.dataset, forecast::Split::test, b.split,
                                    b.norm, cfg.lookback);
  std::vector<sim::TariffProfile> t_all = b.t_in;
  t_all.insert(t_all.end(), b.t_out.begin(), b.t_out.end());

  Csv t = gains_header();
  for (const auto& tag : cfg.wholesale_options) {
    const auto option = wholesale_by_tag(tag);
    for (const auto& w : test_w) {
      const auto& consumer = b.dataset.consumers[static_cast<size_t>(w.consumer_index)];
      const auto& day = consumer.days[static_cast<size_t>(w.target_day)];
      const auto& best = alloc::oracle_choose(consumer.spec, day, t_all, option);
      const double g = alloc::realized_gain(consumer.spec, day, best, option);
      t.rows.push_back({consumer.spec.id, "Oracle", "OOD", option.tag, best.id,
                        fmt_double(g), fmt_double(g)});
    }
  }
  write_csv(out_csv, t);
}

namespace {

struct GainTotals {
  // option tag -> method -> total realized gain
  std::map<std::string, std::map<std::string, double>> totals;
};

GainTotals read_gain_totals(const ExperimentConfig& cfg, uint64_t run_seed,
                            int tin_size) {
  GainTotals g;
  auto absorb = [&](const fs::path& path) {
    if (!fs::exists(path)) return;
    for (const auto& row : read_csv(path).rows) {
      g.totals[row.at(3)][row.at(1)] += std::strtod(row.at(6).c_str(), nullptr);
    }
  };
  for (forecast::Variant v : cfg.variants)
    absorb(variant_dir(cfg, run_seed, tin_size, v) / "gains.csv");
  absorb(cell_dir(cfg, run_seed, tin_size) / "oracle_gains.csv");
  return g;
}

}  // namespace

int cmd_report(const ExperimentConfig& cfg) {
  cfg.validate();
  Csv results;
  results.header = {"t_in_size", "variant", "scenario", "seed", "aql",
                    "gain_option1", "gain_option2", "pct_vs_fc_option1",
                    "pct_vs_fc_option2"};
  // (variant, scenario, tin) -> aql per seed, for the plot tables
  std::map<std::string, std::map<int, std::vector<double>>> aql_acc;
  std::map<std::string, std::map<int, std::vector<double>>> gain_acc;
  int missing = 0;

  for (uint64_t run_seed : cfg.run_seeds()) {
    for (int tin : cfg.t_in_sizes) {
      GainTotals gains = read_gain_totals(cfg, run_seed, tin);
      const bool have_fc =
          gains.totals.count("Option1") && gains.totals["Option1"].count("FC");
      for (forecast::Variant v : cfg.variants) {
        const fs::path aql_csv = variant_dir(cfg, run_seed, tin, v) / "aql.csv";
        if (!fs::exists(aql_csv)) {
          ++missing;
          continue;
        }
        for (const auto& row : read_csv(aql_csv).rows) {
          const std::string& scenario = row.at(2);
          const double aql = std::strtod(row.at(4).c_str(), nullptr);
          aql_acc[forecast::to_string(v) + "," + scenario][tin].push_back(aql);

          std::string g1, g2, p1, p2;
          if (scenario == "OOD") {
            const std::string method = forecast::to_string(v);
            for (const auto& [tag, per_method] : gains.totals) {
              if (!per_method.count(method)) continue;
              const double total = per_method.at(method);
              std::string pct;
              if (have_fc && gains.totals[tag].count("FC")) {
                auto p = alloc::pct_gain_vs_fc(total, gains.totals[tag]["FC"]);
                if (p) pct = fmt_double(*p);
              }
              if (tag == "Option1") {
                g1 = fmt_double(total);
                p1 = pct;
              } else if (tag == "Option2") {
                g2 = fmt_double(total);
                p2 = pct;
              }
              gain_acc[method + "," + tag][tin].push_back(total);
            }
          }
          results.rows.push_back({std::to_string(tin), forecast::to_string(v), scenario,
                                  std::to_string(run_seed), fmt_double(aql), g1, g2, p1,
                                  p2});
        }
      }
    }
  }

  const fs::path out(cfg.out_dir);
  write_csv(out / "results.csv", results);

  Csv aql_plot;
  aql_plot.header = {"t_in_size", "variant", "scenario", "mean_aql", "n_seeds"};
  for (const auto& [key, per_tin] : aql_acc) {
    const auto comma = key.find(',');
    for (const auto& [tin, vals] : per_tin) {
      double m = 0.0;
      for (double v : vals) m += v;
      m /= static_cast<double>(vals.size());
      aql_plot.rows.push_back({std::to_string(tin), key.substr(0, comma),
                               key.substr(comma + 1), fmt_double(m),
                               std::to_string(vals.size())});
    }
  }
  write_csv(out / "aql_vs_tin.csv", aql_plot);

  Csv gain_plot;
  gain_plot.header = {"t_in_size", "method", "wholesale_option", "mean_total_gain",
                      "mean_pct_vs_fc", "n_seeds"};
  for (const auto& [key, per_tin] : gain_acc) {
    const auto comma = key.find(',');
    const std::string method = key.substr(0, comma);
    const std::string tag = key.substr(comma + 1);
    for (const auto& [tin, vals] : per_tin) {
      double m = 0.0;
      for (double v : vals) m += v;
      m /= static_cast<double>(vals.size());
      // mean %gain vs the mean FC total over the same seeds
      const auto& fc_key = "FC," + tag;
      std::string pct;
      if (gain_acc.count(fc_key) && gain_acc.at(fc_key).count(tin)) {
        const auto& fc_vals = gain_acc.at(fc_key).at(tin);
        double fc_mean = 0.0;
        for (double v : fc_vals) fc_mean += v;
        fc_mean /= static_cast<double>(fc_vals.size());
        auto p = alloc::pct_gain_vs_fc(m, fc_mean);
        if (p) pct = fmt_double(*p);
      }
      gain_plot.rows.push_back({std::to_string(tin), method, tag, fmt_double(m), pct,
                                std::to_string(vals.size())});
    }
  }
  write_csv(out / "gain_vs_tin.csv", gain_plot);

  // Fig-5b style trend summary: is mean OOD AQL non-increasing in |T_in|?
  Csv trend;
  trend.header = {"variant", "ood_aql_inversions"};
  for (forecast::Variant v : cfg.variants) {
    const auto key = forecast::to_string(v) + ",OOD";
    if (!aql_acc.count(key)) continue;
    std::vector<double> means;
    for (const auto& [tin, vals] : aql_acc[key]) {
      double m = 0.0;
      for (double x : vals) m += x;
      means.push_back(m / static_cast<double>(vals.size()));
    }
    int inversions = 0;
    for (size_t i = 1; i < means.size(); ++i) {
      if (means[i] > means[i - 1]) ++inversions;
    }
    trend.rows.push_back({forecast::to_string(v), std::to_string(inversions)});
  }
  write_csv(out / "trend_check.csv", trend);
  return missing;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const double sweep_t0 = now_seconds();

  struct Job {
    uint64_t run_seed;
    int tin;
    int variant_index;  // -1: oracle allocation
  };
  std::vector<Job> jobs;
  for (uint64_t s : cfg.run_seeds()) {
    for (int tin : cfg.t_in_sizes) {
      // Dataset generation is cheap and shared; do it up front, serially.
      cmd_simulate(cfg, s, tin);
      for (size_t vi = 0; vi < cfg.variants.size(); ++vi)
        jobs.push_back({s, tin, static_cast<int>(vi)});
      jobs.push_back({s, tin, -1});
    }
  }

  size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DRX_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) workers = static_cast<size_t>(n);
  }
  workers = std::min(workers, jobs.size());

  std::atomic<size_t> next{0};
  std::atomic<int> failures{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      try {
        if (job.variant_index < 0) {
          cmd_allocate_oracle(cfg, job.run_seed, job.tin);
        } else {
          const auto v = cfg.variants[static_cast<size_t>(job.variant_index)];
          cmd_train(cfg, job.run_seed, job.tin, v);
          cmd_evaluate(cfg, job.run_seed, job.tin, v);
          cmd_allocate(cfg, job.run_seed, job.tin, v);
        }
      } catch (const std::exception& e) {
        failures.fetch_add(1);
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "sweep cell failed (seed=" << job.run_seed << " tin=" << job.tin
                  << " job=" << job.variant_index << "): " << e.what() << "\n";
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  cmd_report(cfg);

  // Wall-clock accounting survives interrupted/resumed sweeps.
  const fs::path meta = fs::path(cfg.out_dir) / "sweep_meta.json";
  json j = json::object();
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    j = json::parse(in);
  }
  const double prev = j.value("wall_seconds_total", 0.0);
  j["wall_seconds_total"] = prev + (now_seconds() - sweep_t0);
  j["workers"] = workers;
  std::ofstream out(meta, std::ios::trunc);
  out << j.dump(1) << "\n";
  return failures.load();
}

}  // namespace drx::harness
