#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drx/sim.hpp"

namespace drx::alloc {

// Daily wholesale price profile. Option1 uses {0.2, 0.8}, Option2 adds 0.5
// shoulders; custom arrangements are allowed as long as the value set holds.
struct WholesaleOption {
  std::string tag;
  std::array<double, sim::kHoursPerDay> p{};

  static WholesaleOption option1();
  static WholesaleOption option2();
  void validate() const;
};

// Estimated broker profit of allocating `profile` given the median consumption
// forecast (kWh per hour): sum of (rate - p) * forecast.
double estimate_gain(std::span<const double> forecast_median,
                     const sim::TariffProfile& profile,
                     const WholesaleOption& wholesale);

// Median consumption forecast for a candidate profile, denormalized kWh.
using ForecastFn = std::function<std::vector<double>(const sim::TariffProfile&)>;

struct AllocationDecision {
  std::string chosen_profile_id;
  double estimated_gain = 0.0;
  std::map<std::string, double> candidate_gains;  // estimated, per profile id
};

// Greedy argmax of estimated gain over the candidates, lowest id on ties.
AllocationDecision choose_profile(const ForecastFn& forecast,
                                  const std::vector<sim::TariffProfile>& candidates,
                                  const WholesaleOption& wholesale);

// Ground-truth profit for one consumer-day: the simulator answers the
// counterfactual consumption under `profile` before the gain is computed.
double realized_gain(const sim::ConsumerSpec& spec, const sim::DayRecord& day,
                     const sim::TariffProfile& profile,
                     const WholesaleOption& wholesale);

// Exhaustive oracle: the candidate with the best realized gain.
const sim::TariffProfile& oracle_choose(
    const sim::ConsumerSpec& spec, const sim::DayRecord& day,
    const std::vector<sim::TariffProfile>& candidates,
    const WholesaleOption& wholesale);

// 100 * (G_method - G_FC) / |G_FC|; empty when the FC total is zero.
std::optional<double> pct_gain_vs_fc(double method_total_gain, double fc_total_gain);

}  // namespace drx::alloc
