#include <cmath>
#include <stdexcept>

#include "drx/alloc.hpp"

namespace drx::alloc {

WholesaleOption WholesaleOption::option1() {
  WholesaleOption w;
  w.tag = "Option1";
  for (int h = 0; h < sim::kHoursPerDay; ++h)
    w.p[static_cast<size_t>(h)] = (h >= 9 && h <= 17) ? 0.8 : 0.2;
  return w;
}

WholesaleOption WholesaleOption::option2() {
  WholesaleOption w;
  w.tag = "Option2";
  for (int h = 0; h < sim::kHoursPerDay; ++h) {
    double v = 0.2;
    if (h >= 9 && h <= 17) v = 0.8;
    else if (h == 7 || h == 8 || h == 18 || h == 19) v = 0.5;
    w.p[static_cast<size_t>(h)] = v;
  }
  return w;
}

void WholesaleOption::validate() const {
  for (double v : p) {
    const bool two = v == 0.2 || v == 0.8;
    const bool three = two || v == 0.5;
    if (tag == "Option1" ? !two : !three)
      throw std::invalid_argument("WholesaleOption: price outside the value set");
  }
}

double estimate_gain(std::span<const double> forecast_median,
                     const sim::TariffProfile& profile,
                     const WholesaleOption& wholesale) {
  if (forecast_median.size() != sim::kHoursPerDay)
    throw std::invalid_argument("estimate_gain: expected 24 forecast entries");
  double g = 0.0;
  for (int h = 0; h < sim::kHoursPerDay; ++h) {
    const size_t i = static_cast<size_t>(h);
    g += (profile.rates[i] - wholesale.p[i]) * forecast_median[i];
  }
  return g;
}

AllocationDecision choose_profile(const ForecastFn& forecast,
                                  const std::vector<sim::TariffProfile>& candidates,
                                  const WholesaleOption& wholesale) {
  if (candidates.empty())
    throw std::invalid_argument("choose_profile: no candidate profiles");
  AllocationDecision d;
  bool first = true;
  for (const auto& c : candidates) {
    const std::vector<double> median = forecast(c);
    const double g = estimate_gain(median, c, wholesale);
    d.candidate_gains[c.id] = g;
    if (first || g > d.estimated_gain ||
        (g == d.estimated_gain && c.id < d.chosen_profile_id)) {
      d.chosen_profile_id = c.id;
      d.estimated_gain = g;
      first = false;
    }
  }
  return d;
}

double realized_gain(const sim::ConsumerSpec& spec, const sim::DayRecord& day,
                     const sim::TariffProfile& profile,
                     const WholesaleOption& wholesale) {
  const auto response = sim::counterfactual_day(spec, day, profile);
  double g = 0.0;
  for (int h = 0; h < sim::kHoursPerDay; ++h) {
    const size_t i = static_cast<size_t>(h);
    g += (profile.rates[i] - wholesale.p[i]) * response.total_load[i];
  }
  return g;
}

const sim::TariffProfile& oracle_choose(
    const sim::ConsumerSpec& spec, const sim::DayRecord& day,
    const std::vector<sim::TariffProfile>& candidates,
    const WholesaleOption& wholesale) {
  if (candidates.empty())
    throw std::invalid_argument("oracle_choose: no candidate profiles");
  const sim::TariffProfile* best = nullptr;
  double best_gain = 0.0;
  for (const auto& c : candidates) {
    const double g = realized_gain(spec, day, c, wholesale);
    if (!best || g > best_gain || (g == best_gain && c.id < best->id)) {
      best = &c;
      best_gain = g;
    }
  }
  return *best;
}

std::optional<double> pct_gain_vs_fc(double method_total_gain, double fc_total_gain) {
  if (fc_total_gain == 0.0) return std::nullopt;
  return 100.0 * (method_total_gain - fc_total_gain) / std::fabs(fc_total_gain);
}

}  // namespace drx::alloc
