#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drx::sim {

inline constexpr int kHoursPerDay = 24;
inline constexpr int kDaysPerWeek = 7;
inline constexpr int kDaysPerMonth = 30;

inline constexpr double kRateLow = 0.2;
inline constexpr double kRateMedium = 0.5;
inline constexpr double kRateHigh = 0.8;
inline constexpr std::array<double, 3> kRateLevels = {kRateLow, kRateMedium, kRateHigh};

// 0/1/2 for low/medium/high; throws on any other value.
int rate_level(double rate);

struct TariffProfile {
  std::string id;
  std::array<double, kHoursPerDay> rates;
};

// Validates every entry is one of the three levels.
void validate_profile(const TariffProfile& p);

// Sampling ranges for consumer properties; defaults mirror the dataset
// description used throughout.
struct ConsumerRanges {
  std::vector<int> sub_consumers = {3, 5};
  std::vector<int> working_days = {3, 4};
  std::vector<int> work_start_base = {8, 9, 10};
  int work_start_jitter = 1;
  std::vector<int> break_start_base = {13, 14};
  int break_start_jitter = 1;
  int work_duration_base = 8;
  int work_duration_jitter = 1;
  std::vector<double> shiftable_kw = {600.0, 2400.0};
  double per_sub_load_kw = 50.0;
  double idle_load_kw = 10.0;
  double noise_sigma = 0.05;
};

struct ConsumerSpec {
  std::string id;
  int sub_consumers = 0;
  int working_days_per_week = 0;
  int work_start_hour = 0;
  int break_start_hour = 0;
  int work_duration_hours = 0;
  double shiftable_kw = 0.0;
  double per_sub_load_kw = 0.0;
  double idle_load_kw = 0.0;
  double noise_sigma = 0.0;

  // The shiftable block's preferred hour is the realized work start.
  int preferred_hour() const { return work_start_hour; }
  bool is_working_day(int day) const {
    return day % kDaysPerWeek < working_days_per_week;
  }
};

ConsumerSpec sample_consumer(const ConsumerRanges& ranges, uint64_t seed);

// Type-I load for one day (kWh per hour), quantized to a 2^-20 kWh metering
// grid so that hourly sums are exact in fp64 regardless of ordering.
std::array<double, kHoursPerDay> base_load_day(const ConsumerSpec& spec, int day,
                                               uint64_t consumer_seed);

// Noise-free weekly-average day shape including the shiftable block at its
// preferred hour; the curation input.
std::array<double, kHoursPerDay> consumer_avg_profile(const ConsumerSpec& spec);

struct TariffResponse {
  std::array<double, kHoursPerDay> total_load;
  std::optional<int> shift_target;
};

// Whole-block shift to the earliest cheapest hour when strictly cheaper than
// the preferred hour. Generic in horizon for toy cases; both spans must have
// equal length and preferred_hour must be in range.
struct GenericResponse {
  std::vector<double> total_load;
  std::optional<int> shift_target;
};
GenericResponse respond_to_tariff(std::span<const double> base_load,
                                  double shiftable_kw, int preferred_hour,
                                  std::span<const double> rates);

struct DayRecord {
  int day_index = 0;
  std::array<double, kHoursPerDay> base_load{};
  int preferred_hour = 0;
  std::optional<int> shift_target_hour;
  std::array<double, kHoursPerDay> total_load{};
  std::string profile_id;
};

struct ConsumerData {
  ConsumerSpec spec;
  uint64_t seed = 0;  // stream used for this consumer's noise
  std::vector<DayRecord> days;
};

struct SimDataset {
  std::vector<ConsumerData> consumers;
  std::vector<TariffProfile> profiles_in;
  int months = 0;

  int n_days() const { return months * kDaysPerMonth; }
  int n_hours() const { return n_days() * kHoursPerDay; }
  const TariffProfile& profile(const std::string& id) const;

  double consumption(int consumer, int hour_index) const;
  double tariff_rate(int consumer, int hour_index) const;
  const std::string& profile_id(int consumer, int hour_index) const;
  static int hour_of_day(int hour_index) { return hour_index % kHoursPerDay; }
  static int day_of_week(int hour_index) {
    return (hour_index / kHoursPerDay) % kDaysPerWeek;
  }
  static int month_of(int hour_index) {
    return (hour_index / kHoursPerDay) / kDaysPerMonth;
  }

 private:
  mutable std::map<std::string, size_t> profile_index_;
};

// Peak-priced profile curation from consumer average shapes: high rate on the
// top-quartile hours, low on the bottom quartile, medium elsewhere, then two
// seeded one-level perturbations; retries until k distinct profiles exist.
std::vector<TariffProfile> curate_profiles_in(
    const std::vector<std::array<double, kHoursPerDay>>& consumer_avg_profiles,
    int k, uint64_t seed);

// Uniform i.i.d. profiles, distinct and disjoint from `exclude`.
std::vector<TariffProfile> sample_profiles_out(
    int m, uint64_t seed, const std::vector<TariffProfile>& exclude);

// Revenue-greedy allocation heuristic: argmax of sum_h rate[h]*avg_load[h],
// lowest profile id on ties.
const TariffProfile& policy_allocate(std::span<const double> recent_avg_load,
                                     const std::vector<TariffProfile>& candidates);

SimDataset simulate(const std::vector<ConsumerSpec>& consumers,
                    const std::vector<TariffProfile>& t_in, int months,
                    uint64_t seed);

// Re-answers one day under a different profile (same stored Type-I load).
TariffResponse counterfactual_day(const ConsumerSpec& spec, const DayRecord& day,
                                  const TariffProfile& profile);

// hour x rate-level empirical frequency over all allocated days; rows sum to 1.
std::array<std::array<double, 3>, kHoursPerDay> bias_report(const SimDataset& ds);

}  // namespace drx::sim
