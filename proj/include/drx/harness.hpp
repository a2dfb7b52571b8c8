#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drx/alloc.hpp"
#include "drx/forecast.hpp"
#include "drx/sim.hpp"

namespace drx::harness {

struct ExperimentConfig {
  uint64_t seed = 1;
  int n_consumers = 12;
  int months = 6;
  std::array<int, 3> split_months = {4, 1, 1};
  std::vector<int> t_in_sizes = {2, 5, 8, 10, 12, 15, 20, 25, 30, 35};
  int t_out_size = 40;
  std::vector<forecast::Variant> variants = forecast::all_variants();
  std::vector<std::string> wholesale_options = {"Option1", "Option2"};
  std::string out_dir = "out";
  int seeds_per_cell = 3;
  int lookback = 168;

  int epochs = 200;
  int batch_size = 16;
  double lr = 1e-4;
  double l2_lambda = 1e-3;

  void validate() const;
  // Run seeds for sweep cells: seed, seed+1, ...
  std::vector<uint64_t> run_seeds() const;

  static ExperimentConfig from_json_file(const std::string& path);
  std::string to_json() const;
};

// 17 significant digits: round-trips fp64 exactly through strtod.
std::string fmt_double(double v);

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
void write_csv(const std::filesystem::path& path, const Csv& table);
Csv read_csv(const std::filesystem::path& path);

void write_profiles_csv(const std::filesystem::path& path,
                        const std::vector<sim::TariffProfile>& profiles);
std::vector<sim::TariffProfile> read_profiles_csv(const std::filesystem::path& path);

void write_dataset_csv(const std::filesystem::path& path, const sim::SimDataset& ds);
void write_bias_csv(const std::filesystem::path& path, const sim::SimDataset& ds);

// Checkpoint: variant, dims, seed, parameters, batchnorm stats, per-consumer
// normalization, loss history. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path,
                     const forecast::TrainedModel& model);
forecast::TrainedModel load_checkpoint(const std::filesystem::path& path);

// Deterministically rebuilt experiment inputs for one (run_seed, tin_size).
struct BuiltData {
  std::vector<sim::ConsumerSpec> consumers;
  std::vector<sim::TariffProfile> t_in;
  std::vector<sim::TariffProfile> t_out;
  sim::SimDataset dataset;
  forecast::SplitSpec split;
  std::vector<forecast::Normalization> norm;
};
BuiltData build_data(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size);

std::filesystem::path cell_dir(const ExperimentConfig& cfg, uint64_t run_seed,
                               int tin_size);
std::filesystem::path variant_dir(const ExperimentConfig& cfg, uint64_t run_seed,
                                  int tin_size, forecast::Variant v);

// Stage commands. Each is idempotent: completed outputs are left untouched.
void cmd_simulate(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size);
void cmd_train(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size,
               forecast::Variant v);

struct AqlResult {
  double iid = 0.0;
  double ood = 0.0;
};
AqlResult cmd_evaluate(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size,
                       forecast::Variant v);

void cmd_allocate(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size,
                  forecast::Variant v);
// Oracle allocation rows for one cell (method column "Oracle").
void cmd_allocate_oracle(const ExperimentConfig& cfg, uint64_t run_seed, int tin_size);

// Full grid over run_seeds x t_in_sizes x variants with a bounded worker
// pool (DRX_WORKERS); completed cells are skipped. Returns the number of
// failed cells. Emits the master table and plot CSVs at the end.
int cmd_sweep(const ExperimentConfig& cfg);

// Aggregates completed cells into results.csv, aql_vs_tin.csv, gain_vs_tin.csv.
int cmd_report(const ExperimentConfig& cfg);

}  // namespace drx::harness
