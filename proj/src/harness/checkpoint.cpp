#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "drx/harness.hpp"

namespace drx::harness {

using nlohmann::json;

namespace {

json dims_to_json(const forecast::ModelDims& d) {
  json j;
  j["lookback"] = d.lookback;
  j["horizon"] = d.horizon;
  j["d"] = d.d;
  j["d_prime"] = d.d_prime;
  j["conv_filters"] = d.conv_filters;
  j["conv_kernel"] = d.conv_kernel;
  j["dilations"] = d.dilations;
  j["cwfc_units"] = d.cwfc_units;
  j["local_filters"] = d.local_filters;
  j["calendar_embed"] = d.calendar_embed;
  j["tariff_embed"] = d.tariff_embed;
  j["head_units"] = d.head_units;
  j["iqn_basis"] = d.iqn_basis;
  return j;
}

forecast::ModelDims dims_from_json(const json& j) {
  forecast::ModelDims d;
  d.lookback = j.at("lookback").get<int>();
  d.horizon = j.at("horizon").get<int>();
  d.d = j.at("d").get<int>();
  d.d_prime = j.at("d_prime").get<int>();
  d.conv_filters = j.at("conv_filters").get<int>();
  d.conv_kernel = j.at("conv_kernel").get<int>();
  d.dilations = j.at("dilations").get<std::vector<int>>();
  d.cwfc_units = j.at("cwfc_units").get<int>();
  d.local_filters = j.at("local_filters").get<int>();
  d.calendar_embed = j.at("calendar_embed").get<int>();
  d.tariff_embed = j.at("tariff_embed").get<int>();
  d.head_units = j.at("head_units").get<std::vector<int>>();
  d.iqn_basis = j.at("iqn_basis").get<int>();
  return d;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const forecast::TrainedModel& model) {
  json j;
  j["variant"] = forecast::to_string(model.state.variant);
  j["dims"] = dims_to_json(model.state.dims);
  j["seed"] = model.state.seed;

  json params = json::object();
  for (const auto& [name, t] : model.state.params) {
    params[name] = {{"shape", t.shape()}, {"values", t.values()}};
  }
  j["parameters"] = params;

  json bns = json::array();
  for (const auto& bn : model.state.bn) {
    bns.push_back({{"running_mean", bn.running_mean},
                   {"running_var", bn.running_var},
                   {"momentum", bn.momentum},
                   {"eps", bn.eps}});
  }
  j["batchnorm_stats"] = bns;

  json norm = json::object();
  for (size_t i = 0; i < model.consumer_ids.size(); ++i) {
    norm[model.consumer_ids[i]] = {{"mean", model.norm[i].mean},
                                   {"std", model.norm[i].stddev}};
  }
  j["normalization"] = norm;
  j["consumer_order"] = model.consumer_ids;
  j["loss_history"] = model.train_loss_history;
  j["val_aql_history"] = model.val_aql_history;
  j["best_epoch"] = model.best_epoch;

  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump(1) << "\n";
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

forecast::TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  json j = json::parse(in);

  forecast::TrainedModel model;
  const auto variant = forecast::variant_from_string(j.at("variant").get<std::string>());
  const auto dims = dims_from_json(j.at("dims"));
  const auto seed = j.at("seed").get<uint64_t>();
  // Rebuild the parameter layout, then overwrite every stored tensor.
  model.state = forecast::assemble_model(variant, dims, seed);
  for (auto& [name, t] : model.state.params) {
    const auto& pj = j.at("parameters").at(name);
    const auto shape = pj.at("shape").get<std::vector<int>>();
    if (shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    t.values() = pj.at("values").get<std::vector<double>>();
  }

  const auto& bns = j.at("batchnorm_stats");
  if (bns.size() != model.state.bn.size())
    throw std::runtime_error("checkpoint: batchnorm layer count mismatch");
  for (size_t i = 0; i < model.state.bn.size(); ++i) {
    model.state.bn[i].running_mean = bns[i].at("running_mean").get<std::vector<double>>();
    model.state.bn[i].running_var = bns[i].at("running_var").get<std::vector<double>>();
    model.state.bn[i].momentum = bns[i].at("momentum").get<double>();
    model.state.bn[i].eps = bns[i].at("eps").get<double>();
  }

  model.consumer_ids = j.at("consumer_order").get<std::vector<std::string>>();
  for (const auto& cid : model.consumer_ids) {
    const auto& nj = j.at("normalization").at(cid);
    forecast::Normalization nm;
    nm.mean = nj.at("mean").get<double>();
    nm.stddev = nj.at("std").get<double>();
    model.norm.push_back(nm);
  }
  model.train_loss_history = j.at("loss_history").get<std::vector<double>>();
  model.val_aql_history = j.at("val_aql_history").get<std::vector<double>>();
  model.best_epoch = j.at("best_epoch").get<int>();
  return model;
}

}  // namespace drx::harness
