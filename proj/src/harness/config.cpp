#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "drx/harness.hpp"

namespace drx::harness {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (split_months[0] + split_months[1] + split_months[2] != months)
    throw std::invalid_argument("config: split months must sum to total months");
  if (t_in_sizes.empty()) throw std::invalid_argument("config: t_in_sizes empty");
  for (int k : t_in_sizes) {
    if (k < 1) throw std::invalid_argument("config: t_in_sizes entries must be >= 1");
  }
  if (t_out_size < 0) throw std::invalid_argument("config: t_out_size >= 0");
  if (n_consumers < 1) throw std::invalid_argument("config: n_consumers >= 1");
  if (seeds_per_cell < 1) throw std::invalid_argument("config: seeds_per_cell >= 1");
  if (variants.empty()) throw std::invalid_argument("config: no variants");
  if (lookback < 24 || lookback % 24 != 0)
    throw std::invalid_argument("config: lookback must be a positive multiple of 24");
  for (const auto& w : wholesale_options) {
    if (w != "Option1" && w != "Option2")
      throw std::invalid_argument("config: unknown wholesale option " + w);
  }
}

std::vector<uint64_t> ExperimentConfig::run_seeds() const {
  std::vector<uint64_t> out;
  for (int i = 0; i < seeds_per_cell; ++i) out.push_back(seed + static_cast<uint64_t>(i));
  return out;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  json j = json::parse(in);
  ExperimentConfig c;
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("n_consumers")) c.n_consumers = j["n_consumers"].get<int>();
  if (j.contains("months")) c.months = j["months"].get<int>();
  if (j.contains("split_months")) {
    auto v = j["split_months"].get<std::vector<int>>();
    if (v.size() != 3) throw std::invalid_argument("config: split_months needs 3 entries");
    c.split_months = {v[0], v[1], v[2]};
  }
  if (j.contains("t_in_sizes")) c.t_in_sizes = j["t_in_sizes"].get<std::vector<int>>();
  if (j.contains("t_out_size")) c.t_out_size = j["t_out_size"].get<int>();
  if (j.contains("variants")) {
    c.variants.clear();
    for (const auto& s : j["variants"])
      c.variants.push_back(forecast::variant_from_string(s.get<std::string>()));
  }
  if (j.contains("wholesale_options"))
    c.wholesale_options = j["wholesale_options"].get<std::vector<std::string>>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("seeds_per_cell")) c.seeds_per_cell = j["seeds_per_cell"].get<int>();
  if (j.contains("lookback")) c.lookback = j["lookback"].get<int>();
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("lr")) c.lr = j["lr"].get<double>();
  if (j.contains("l2_lambda")) c.l2_lambda = j["l2_lambda"].get<double>();
  c.validate();
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["n_consumers"] = n_consumers;
  j["months"] = months;
  j["split_months"] = split_months;
  j["t_in_sizes"] = t_in_sizes;
  j["t_out_size"] = t_out_size;
  std::vector<std::string> vs;
  for (auto v : variants) vs.push_back(forecast::to_string(v));
  j["variants"] = vs;
  j["wholesale_options"] = wholesale_options;
  j["out_dir"] = out_dir;
  j["seeds_per_cell"] = seeds_per_cell;
  j["lookback"] = lookback;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["l2_lambda"] = l2_lambda;
  return j.dump(2);
}

}  // namespace drx::harness
