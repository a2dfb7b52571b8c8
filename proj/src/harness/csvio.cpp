#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "drx/harness.hpp"

namespace drx::harness {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const Csv& table) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << table.header[i];
  out << "\n";
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Csv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Csv table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(s);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!s.empty() && s.back() == ',') out.push_back("");
    return out;
  };
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path.string());
  table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    table.rows.push_back(split(line));
  }
  return table;
}

void write_profiles_csv(const std::filesystem::path& path,
                        const std::vector<sim::TariffProfile>& profiles) {
  Csv t;
  t.header = {"profile_id"};
  for (int h = 0; h < sim::kHoursPerDay; ++h) t.header.push_back("r" + std::to_string(h));
  for (const auto& p : profiles) {
    std::vector<std::string> row = {p.id};
    for (double r : p.rates) row.push_back(fmt_double(r));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::vector<sim::TariffProfile> read_profiles_csv(const std::filesystem::path& path) {
  Csv t = read_csv(path);
  if (t.header.size() != 1 + sim::kHoursPerDay)
    throw std::runtime_error("profiles csv: unexpected column count in " + path.string());
  std::vector<sim::TariffProfile> out;
  for (const auto& row : t.rows) {
    sim::TariffProfile p;
    p.id = row.at(0);
    for (int h = 0; h < sim::kHoursPerDay; ++h)
      p.rates[static_cast<size_t>(h)] = std::strtod(row.at(static_cast<size_t>(h) + 1).c_str(), nullptr);
    sim::validate_profile(p);
    out.push_back(std::move(p));
  }
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const sim::SimDataset& ds) {
  Csv t;
  t.header = {"consumer_id", "hour_index", "consumption_kwh", "tariff_rate",
              "profile_id", "hour_of_day", "day_of_week", "month"};
  for (size_t ci = 0; ci < ds.consumers.size(); ++ci) {
    const auto& cd = ds.consumers[ci];
    for (int hi = 0; hi < ds.n_hours(); ++hi) {
      t.rows.push_back({cd.spec.id, std::to_string(hi),
                        fmt_double(ds.consumption(static_cast<int>(ci), hi)),
                        fmt_double(ds.tariff_rate(static_cast<int>(ci), hi)),
                        ds.profile_id(static_cast<int>(ci), hi),
                        std::to_string(sim::SimDataset::hour_of_day(hi)),
                        std::to_string(sim::SimDataset::day_of_week(hi)),
                        std::to_string(sim::SimDataset::month_of(hi))});
    }
  }
  write_csv(path, t);
}

void write_bias_csv(const std::filesystem::path& path, const sim::SimDataset& ds) {
  const auto table = sim::bias_report(ds);
  Csv t;
  t.header = {"hour", "low", "medium", "high"};
  for (int h = 0; h < sim::kHoursPerDay; ++h) {
    t.rows.push_back({std::to_string(h), fmt_double(table[static_cast<size_t>(h)][0]),
                      fmt_double(table[static_cast<size_t>(h)][1]),
                      fmt_double(table[static_cast<size_t>(h)][2])});
  }
  write_csv(path, t);
}

}  // namespace drx::harness
