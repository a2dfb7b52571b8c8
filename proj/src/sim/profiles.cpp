#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "drx/rng.hpp"
#include "drx/sim.hpp"

namespace drx::sim {

int rate_level(double rate) {
  for (int i = 0; i < 3; ++i) {
    if (rate == kRateLevels[static_cast<size_t>(i)]) return i;
  }
  throw std::invalid_argument("rate_level: rate not in {0.2, 0.5, 0.8}");
}

void validate_profile(const TariffProfile& p) {
  for (double r : p.rates) rate_level(r);
}

namespace {

std::string slot_id(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

}  // namespace

std::vector<TariffProfile> curate_profiles_in(
    const std::vector<std::array<double, kHoursPerDay>>& consumer_avg_profiles,
    int k, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("curate_profiles_in: k >= 1 required");
  if (consumer_avg_profiles.empty())
    throw std::invalid_argument("curate_profiles_in: no consumer averages");

  Rng rng(seed);
  const int n = static_cast<int>(consumer_avg_profiles.size());
  std::vector<TariffProfile> out;
  std::set<std::array<double, kHoursPerDay>> seen;

  for (int slot = 0; slot < k; ++slot) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      // Cycle over consumers with a small seeded offset; retries roam freely.
      const int jitter = attempt == 0
                             ? static_cast<int>(rng.uniform_int(0, 2))
                             : static_cast<int>(rng.uniform_int(0, n > 1 ? n - 1 : 0));
      const auto& avg = consumer_avg_profiles[static_cast<size_t>((slot + jitter) % n)];

      // Rank hours by average consumption; top quartile priced high, bottom
      // quartile low, medium in between. Ties break toward the earlier hour.
      std::array<int, kHoursPerDay> order;
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (avg[static_cast<size_t>(a)] != avg[static_cast<size_t>(b)])
          return avg[static_cast<size_t>(a)] > avg[static_cast<size_t>(b)];
        return a < b;
      });
      const int quartile = kHoursPerDay / 4;

      TariffProfile p;
      p.rates.fill(kRateMedium);
      for (int i = 0; i < quartile; ++i) p.rates[static_cast<size_t>(order[i])] = kRateHigh;
      for (int i = kHoursPerDay - quartile; i < kHoursPerDay; ++i)
        p.rates[static_cast<size_t>(order[i])] = kRateLow;

      // Two one-level nudges at distinct hours keep slots distinct.
      const int h1 = static_cast<int>(rng.uniform_int(0, kHoursPerDay - 1));
      int h2 = static_cast<int>(rng.uniform_int(0, kHoursPerDay - 2));
      if (h2 >= h1) ++h2;
      for (int h : {h1, h2}) {
        const int level = rate_level(p.rates[static_cast<size_t>(h)]);
        int next;
        if (level == 0) next = 1;
        else if (level == 2) next = 1;
        else next = rng.uniform_int(0, 1) == 0 ? 0 : 2;
        p.rates[static_cast<size_t>(h)] = kRateLevels[static_cast<size_t>(next)];
      }

      if (seen.insert(p.rates).second) {
        p.id = slot_id("in", slot);
        out.push_back(std::move(p));
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("curate_profiles_in: could not produce " +
                               std::to_string(k) + " distinct profiles");
  }
  return out;
}

std::vector<TariffProfile> sample_profiles_out(
    int m, uint64_t seed, const std::vector<TariffProfile>& exclude) {
  if (m < 0) throw std::invalid_argument("sample_profiles_out: m >= 0 required");
  Rng rng(seed);
  std::set<std::array<double, kHoursPerDay>> seen;
  for (const auto& p : exclude) seen.insert(p.rates);

  std::vector<TariffProfile> out;
  out.reserve(static_cast<size_t>(m));
  while (static_cast<int>(out.size()) < m) {
    TariffProfile p;
    for (double& r : p.rates)
      r = kRateLevels[static_cast<size_t>(rng.uniform_int(0, 2))];
    if (!seen.insert(p.rates).second) continue;
    p.id = slot_id("out", static_cast<int>(out.size()));
    out.push_back(std::move(p));
  }
  return out;
}

const TariffProfile& policy_allocate(std::span<const double> recent_avg_load,
                                     const std::vector<TariffProfile>& candidates) {
  if (candidates.empty())
    throw std::invalid_argument("policy_allocate: no candidate profiles");
  if (recent_avg_load.size() != kHoursPerDay)
    throw std::invalid_argument("policy_allocate: expected 24 average-load entries");

  const TariffProfile* best = nullptr;
  double best_score = 0.0;
  for (const auto& p : candidates) {
    double score = 0.0;
    for (int h = 0; h < kHoursPerDay; ++h)
      score += p.rates[static_cast<size_t>(h)] * recent_avg_load[static_cast<size_t>(h)];
    if (!best || score > best_score ||
        (score == best_score && p.id < best->id)) {
      best = &p;
      best_score = score;
    }
  }
  return *best;
}

std::array<std::array<double, 3>, kHoursPerDay> bias_report(const SimDataset& ds) {
  std::array<std::array<double, 3>, kHoursPerDay> table{};
  size_t days = 0;
  for (const auto& c : ds.consumers) {
    for (const auto& d : c.days) {
      const auto& rates = ds.profile(d.profile_id).rates;
      for (int h = 0; h < kHoursPerDay; ++h)
        table[static_cast<size_t>(h)][static_cast<size_t>(rate_level(
            rates[static_cast<size_t>(h)]))] += 1.0;
      ++days;
    }
  }
  if (days == 0) throw std::invalid_argument("bias_report: empty dataset");
  for (auto& row : table) {
    for (double& v : row) v /= static_cast<double>(days);
  }
  return table;
}

}  // namespace drx::sim
