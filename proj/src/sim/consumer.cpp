#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drx/rng.hpp"
#include "drx/sim.hpp"

namespace drx::sim {

namespace {

// Metering grid: 2^-20 kWh. Keeps every hourly value an exact dyadic
// rational so daily energy sums are order-independent in fp64.
double quantize_kwh(double v) { return std::round(v * 1048576.0) / 1048576.0; }

template <typename T>
T pick(Rng& rng, const std::vector<T>& options, const char* what) {
  if (options.empty())
    throw std::invalid_argument(std::string("sample_consumer: empty range for ") + what);
  return options[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(options.size()) - 1))];
}

}  // namespace

ConsumerSpec sample_consumer(const ConsumerRanges& ranges, uint64_t seed) {
  Rng rng(seed);
  ConsumerSpec s;
  s.sub_consumers = pick(rng, ranges.sub_consumers, "sub_consumers");
  s.working_days_per_week = pick(rng, ranges.working_days, "working_days");
  s.work_start_hour = pick(rng, ranges.work_start_base, "work_start") +
                      static_cast<int>(rng.uniform_int(-ranges.work_start_jitter,
                                                       ranges.work_start_jitter));
  s.break_start_hour = pick(rng, ranges.break_start_base, "break_start") +
                       static_cast<int>(rng.uniform_int(-ranges.break_start_jitter,
                                                        ranges.break_start_jitter));
  s.work_duration_hours = ranges.work_duration_base +
                          static_cast<int>(rng.uniform_int(-ranges.work_duration_jitter,
                                                           ranges.work_duration_jitter));
  s.shiftable_kw = pick(rng, ranges.shiftable_kw, "shiftable_kw");
  s.per_sub_load_kw = ranges.per_sub_load_kw;
  s.idle_load_kw = ranges.idle_load_kw;
  s.noise_sigma = ranges.noise_sigma;
  if (s.work_start_hour + s.work_duration_hours > kHoursPerDay)
    throw std::runtime_error("sample_consumer: work window exceeds the day");
  return s;
}

std::array<double, kHoursPerDay> base_load_day(const ConsumerSpec& spec, int day,
                                               uint64_t consumer_seed) {
  Rng rng(subseed(consumer_seed, "day/" + std::to_string(day)));
  std::array<double, kHoursPerDay> load{};
  const bool working = spec.is_working_day(day);
  const int end = spec.work_start_hour + spec.work_duration_hours;
  for (int h = 0; h < kHoursPerDay; ++h) {
    const bool at_work =
        working && h >= spec.work_start_hour && h < end && h != spec.break_start_hour;
    double v = spec.idle_load_kw;
    if (at_work) {
      const double eps =
          spec.noise_sigma > 0.0 ? rng.normal_clipped(0.0, spec.noise_sigma, 3.0) : 0.0;
      v += spec.sub_consumers * spec.per_sub_load_kw * (1.0 + eps);
    }
    load[h] = quantize_kwh(v);
  }
  return load;
}

std::array<double, kHoursPerDay> consumer_avg_profile(const ConsumerSpec& spec) {
  std::array<double, kHoursPerDay> avg{};
  for (int day = 0; day < kDaysPerWeek; ++day) {
    const bool working = spec.is_working_day(day);
    const int end = spec.work_start_hour + spec.work_duration_hours;
    for (int h = 0; h < kHoursPerDay; ++h) {
      double v = spec.idle_load_kw;
      if (working && h >= spec.work_start_hour && h < end && h != spec.break_start_hour)
        v += spec.sub_consumers * spec.per_sub_load_kw;
      if (working && h == spec.preferred_hour()) v += spec.shiftable_kw;
      avg[h] += v;
    }
  }
  for (double& v : avg) v /= kDaysPerWeek;
  return avg;
}

GenericResponse respond_to_tariff(std::span<const double> base_load,
                                  double shiftable_kw, int preferred_hour,
                                  std::span<const double> rates) {
  if (base_load.size() != rates.size() || rates.empty())
    throw std::invalid_argument("respond_to_tariff: base_load/rates length mismatch");
  if (preferred_hour < 0 || static_cast<size_t>(preferred_hour) >= rates.size())
    throw std::invalid_argument("respond_to_tariff: preferred_hour out of range");

  size_t cheapest = 0;
  for (size_t h = 1; h < rates.size(); ++h) {
    if (rates[h] < rates[cheapest]) cheapest = h;  // earliest hour wins ties
  }

  GenericResponse r;
  r.total_load.assign(base_load.begin(), base_load.end());
  size_t landing = static_cast<size_t>(preferred_hour);
  if (rates[cheapest] < rates[static_cast<size_t>(preferred_hour)]) {
    landing = cheapest;
    r.shift_target = static_cast<int>(cheapest);
  }
  r.total_load[landing] += shiftable_kw;
  return r;
}

}  // namespace drx::sim
