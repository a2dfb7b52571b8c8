#include <stdexcept>

#include "drx/rng.hpp"
#include "drx/sim.hpp"

namespace drx::sim {

const TariffProfile& SimDataset::profile(const std::string& id) const {
  if (profile_index_.empty()) {
    for (size_t i = 0; i < profiles_in.size(); ++i)
      profile_index_[profiles_in[i].id] = i;
  }
  auto it = profile_index_.find(id);
  if (it == profile_index_.end())
    throw std::out_of_range("SimDataset: unknown profile id " + id);
  return profiles_in[it->second];
}

double SimDataset::consumption(int consumer, int hour_index) const {
  const auto& day = consumers[static_cast<size_t>(consumer)]
                        .days[static_cast<size_t>(hour_index / kHoursPerDay)];
  return day.total_load[static_cast<size_t>(hour_index % kHoursPerDay)];
}

double SimDataset::tariff_rate(int consumer, int hour_index) const {
  const auto& day = consumers[static_cast<size_t>(consumer)]
                        .days[static_cast<size_t>(hour_index / kHoursPerDay)];
  return profile(day.profile_id).rates[static_cast<size_t>(hour_index % kHoursPerDay)];
}

const std::string& SimDataset::profile_id(int consumer, int hour_index) const {
  return consumers[static_cast<size_t>(consumer)]
      .days[static_cast<size_t>(hour_index / kHoursPerDay)]
      .profile_id;
}

SimDataset simulate(const std::vector<ConsumerSpec>& consumers,
                    const std::vector<TariffProfile>& t_in, int months,
                    uint64_t seed) {
  if (months < 1) throw std::invalid_argument("simulate: months >= 1 required");
  if (t_in.empty()) throw std::invalid_argument("simulate: empty profile set");
  for (const auto& p : t_in) validate_profile(p);

  SimDataset ds;
  ds.profiles_in = t_in;
  ds.months = months;
  const int days = months * kDaysPerMonth;

  for (size_t ci = 0; ci < consumers.size(); ++ci) {
    ConsumerData cd;
    cd.spec = consumers[ci];
    cd.seed = subseed(seed, "consumer/" + std::to_string(ci));
    cd.days.reserve(static_cast<size_t>(days));

    for (int day = 0; day < days; ++day) {
      // Next-day profile is chosen from data up to the previous day's end:
      // trailing 7-day mean of total load, zeros before any history exists.
      std::array<double, kHoursPerDay> recent{};
      const int lo = std::max(0, day - kDaysPerWeek);
      if (day > lo) {
        for (int d = lo; d < day; ++d) {
          for (int h = 0; h < kHoursPerDay; ++h)
            recent[static_cast<size_t>(h)] +=
                cd.days[static_cast<size_t>(d)].total_load[static_cast<size_t>(h)];
        }
        for (double& v : recent) v /= static_cast<double>(day - lo);
      }
      const TariffProfile& chosen = policy_allocate(recent, t_in);

      DayRecord rec;
      rec.day_index = day;
      rec.profile_id = chosen.id;
      rec.base_load = base_load_day(cd.spec, day, cd.seed);
      rec.preferred_hour = cd.spec.preferred_hour();
      if (cd.spec.is_working_day(day)) {
        const auto resp =
            respond_to_tariff(rec.base_load, cd.spec.shiftable_kw,
                              rec.preferred_hour, chosen.rates);
        for (int h = 0; h < kHoursPerDay; ++h)
          rec.total_load[static_cast<size_t>(h)] = resp.total_load[static_cast<size_t>(h)];
        rec.shift_target_hour = resp.shift_target;
      } else {
        rec.total_load = rec.base_load;
      }
      cd.days.push_back(std::move(rec));
    }
    ds.consumers.push_back(std::move(cd));
  }
  return ds;
}

TariffResponse counterfactual_day(const ConsumerSpec& spec, const DayRecord& day,
                                  const TariffProfile& profile) {
  TariffResponse out;
  if (!spec.is_working_day(day.day_index)) {
    out.total_load = day.base_load;
    return out;
  }
  const auto resp = respond_to_tariff(day.base_load, spec.shiftable_kw,
                                      day.preferred_hour, profile.rates);
  for (int h = 0; h < kHoursPerDay; ++h)
    out.total_load[static_cast<size_t>(h)] = resp.total_load[static_cast<size_t>(h)];
  out.shift_target = resp.shift_target;
  return out;
}

}  // namespace drx::sim
