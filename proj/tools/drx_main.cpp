// drx: demand-response tariff experimentation CLI.
//
//   drx simulate --tin-size 10            generate datasets + bias report
//   drx train --tin-size 10 --variant FC  train one model
//   drx evaluate --tin-size 10            IID/OOD forecast quality
//   drx allocate --tin-size 10            profile allocation gains
//   drx sweep                             full grid, resumable
//   drx report                            aggregate completed cells
#include <cstdint>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "drx/harness.hpp"

using drx::harness::ExperimentConfig;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> tin_size;
  std::string variant;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--seed", f.seed, "root experiment seed");
  cmd->add_option("--tin-size", f.tin_size, "historical profile count |T_in|");
  cmd->add_option("--variant", f.variant, "model variant tag");
  cmd->add_option("--out", f.out_dir, "output directory");
}

ExperimentConfig make_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = ExperimentConfig::from_json_file(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.tin_size) cfg.t_in_sizes = {*f.tin_size};
  if (!f.variant.empty()) cfg.variants = {drx::forecast::variant_from_string(f.variant)};
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"demand-response tariff allocation experiments"};
  app.require_subcommand(1);

  CommonFlags f;
  auto* c_sim = app.add_subcommand("simulate", "generate datasets and profiles");
  auto* c_train = app.add_subcommand("train", "train forecasting models");
  auto* c_eval = app.add_subcommand("evaluate", "compute IID/OOD AQL");
  auto* c_alloc = app.add_subcommand("allocate", "allocation gain benchmark");
  auto* c_sweep = app.add_subcommand("sweep", "full resumable grid");
  auto* c_report = app.add_subcommand("report", "aggregate results");
  for (auto* c : {c_sim, c_train, c_eval, c_alloc, c_sweep, c_report}) add_common(c, f);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = make_config(f);
    int failures = 0;
    if (c_sim->parsed()) {
      for (uint64_t s : cfg.run_seeds()) {
        for (int tin : cfg.t_in_sizes) drx::harness::cmd_simulate(cfg, s, tin);
      }
    } else if (c_train->parsed() || c_eval->parsed() || c_alloc->parsed()) {
      for (uint64_t s : cfg.run_seeds()) {
        for (int tin : cfg.t_in_sizes) {
          for (auto v : cfg.variants) {
            try {
              if (c_train->parsed()) {
                drx::harness::cmd_train(cfg, s, tin, v);
              } else if (c_eval->parsed()) {
                auto r = drx::harness::cmd_evaluate(cfg, s, tin, v);
                std::cout << "seed=" << s << " tin=" << tin << " "
                          << drx::forecast::to_string(v) << " IID=" << r.iid
                          << " OOD=" << r.ood << "\n";
              } else {
                drx::harness::cmd_allocate(cfg, s, tin, v);
              }
            } catch (const std::exception& e) {
              std::cerr << "skipped: " << e.what() << "\n";
              ++failures;
            }
          }
          if (c_alloc->parsed()) drx::harness::cmd_allocate_oracle(cfg, s, tin);
        }
      }
    } else if (c_sweep->parsed()) {
      failures = drx::harness::cmd_sweep(cfg);
    } else if (c_report->parsed()) {
      failures = drx::harness::cmd_report(cfg);
    }
    if (failures > 0) {
      std::cerr << failures << " cell(s) failed or missing\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
