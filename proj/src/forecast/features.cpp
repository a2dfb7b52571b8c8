#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drx/forecast.hpp"

namespace drx::forecast {

namespace {
constexpr double kStdFloor = 1e-6;
}

int SplitSpec::first_day(Split s) const {
  switch (s) {
    case Split::train: return 0;
    case Split::val: return train_months * sim::kDaysPerMonth;
    case Split::test: return (train_months + val_months) * sim::kDaysPerMonth;
  }
  throw std::logic_error("SplitSpec: bad split");
}

int SplitSpec::day_count(Split s) const {
  switch (s) {
    case Split::train: return train_months * sim::kDaysPerMonth;
    case Split::val: return val_months * sim::kDaysPerMonth;
    case Split::test: return test_months * sim::kDaysPerMonth;
  }
  throw std::logic_error("SplitSpec: bad split");
}

std::vector<Normalization> compute_normalization(const sim::SimDataset& ds,
                                                 const SplitSpec& split) {
  const int d0 = split.first_day(Split::train);
  const int days = split.day_count(Split::train);
  if (days < 1) throw std::invalid_argument("compute_normalization: empty train split");

  std::vector<Normalization> out;
  out.reserve(ds.consumers.size());
  for (const auto& c : ds.consumers) {
    double sum = 0.0;
    const size_t n = static_cast<size_t>(days) * sim::kHoursPerDay;
    for (int d = d0; d < d0 + days; ++d) {
      for (double v : c.days[static_cast<size_t>(d)].total_load) sum += v;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (int d = d0; d < d0 + days; ++d) {
      for (double v : c.days[static_cast<size_t>(d)].total_load) {
        const double e = v - mean;
        ss += e * e;
      }
    }
    Normalization nm;
    nm.mean = mean;
    nm.stddev = std::max(std::sqrt(ss / static_cast<double>(n)), kStdFloor);
    out.push_back(nm);
  }
  return out;
}

namespace {

// Landing hour of the shiftable block: the realized shift target on shifted
// days, the preferred hour on unshifted working days, nothing otherwise.
std::vector<double> shift_indicator_for(const sim::ConsumerSpec& spec,
                                        const sim::DayRecord& day,
                                        std::optional<int> shift_target) {
  std::vector<double> ind(sim::kHoursPerDay, 0.0);
  if (spec.is_working_day(day.day_index))
    ind[static_cast<size_t>(shift_target.value_or(day.preferred_hour))] = 1.0;
  return ind;
}

}  // namespace

std::vector<ForecastWindow> featurize(const sim::SimDataset& ds, Split split,
                                      const SplitSpec& spec,
                                      const std::vector<Normalization>& norm,
                                      int lookback) {
  if (lookback < 1) throw std::invalid_argument("featurize: lookback >= 1");
  if (lookback % sim::kHoursPerDay != 0)
    throw std::invalid_argument("featurize: lookback must cover whole days");
  if (norm.size() != ds.consumers.size())
    throw std::invalid_argument("featurize: normalization/consumer count mismatch");

  const int d0 = spec.first_day(split);
  const int days = spec.day_count(split);
  const int lookback_days = lookback / sim::kHoursPerDay;
  if (days * sim::kHoursPerDay < lookback + sim::kHoursPerDay)
    throw std::invalid_argument("featurize: split shorter than lookback + horizon");

  std::vector<ForecastWindow> out;
  for (size_t ci = 0; ci < ds.consumers.size(); ++ci) {
    const auto& cd = ds.consumers[ci];
    const Normalization& nm = norm[ci];
    for (int target = d0 + lookback_days; target < d0 + days; ++target) {
      ForecastWindow w;
      w.consumer_index = static_cast<int>(ci);
      w.consumer_id = cd.spec.id;
      w.target_day = target;

      const int h0 = (target - lookback_days) * sim::kHoursPerDay;
      w.past_consumption.resize(static_cast<size_t>(lookback));
      w.past_rate_level.resize(static_cast<size_t>(lookback));
      w.past_hod.resize(static_cast<size_t>(lookback));
      w.past_dow.resize(static_cast<size_t>(lookback));
      w.past_month.resize(static_cast<size_t>(lookback));
      for (int i = 0; i < lookback; ++i) {
        const int hi = h0 + i;
        w.past_consumption[static_cast<size_t>(i)] =
            (ds.consumption(static_cast<int>(ci), hi) - nm.mean) / nm.stddev;
        w.past_rate_level[static_cast<size_t>(i)] =
            sim::rate_level(ds.tariff_rate(static_cast<int>(ci), hi));
        w.past_hod[static_cast<size_t>(i)] = sim::SimDataset::hour_of_day(hi);
        w.past_dow[static_cast<size_t>(i)] = sim::SimDataset::day_of_week(hi);
        w.past_month[static_cast<size_t>(i)] = sim::SimDataset::month_of(hi);
      }

      const auto& day = cd.days[static_cast<size_t>(target)];
      const auto& rates = ds.profile(day.profile_id).rates;
      w.future_profile_id = day.profile_id;
      w.future_rate_level.resize(sim::kHoursPerDay);
      w.future_hod.resize(sim::kHoursPerDay);
      w.future_dow.resize(sim::kHoursPerDay);
      w.future_month.resize(sim::kHoursPerDay);
      w.target.resize(sim::kHoursPerDay);
      for (int h = 0; h < sim::kHoursPerDay; ++h) {
        const int hi = target * sim::kHoursPerDay + h;
        w.future_rate_level[static_cast<size_t>(h)] =
            sim::rate_level(rates[static_cast<size_t>(h)]);
        w.future_hod[static_cast<size_t>(h)] = sim::SimDataset::hour_of_day(hi);
        w.future_dow[static_cast<size_t>(h)] = sim::SimDataset::day_of_week(hi);
        w.future_month[static_cast<size_t>(h)] = sim::SimDataset::month_of(hi);
        w.target[static_cast<size_t>(h)] =
            (day.total_load[static_cast<size_t>(h)] - nm.mean) / nm.stddev;
      }
      w.future_shift_indicator =
          shift_indicator_for(cd.spec, day, day.shift_target_hour);
      out.push_back(std::move(w));
    }
  }
  return out;
}

ForecastWindow with_future_profile(const ForecastWindow& base,
                                   const sim::ConsumerData& consumer,
                                   const sim::TariffProfile& profile,
                                   const Normalization& norm) {
  const auto& day = consumer.days.at(static_cast<size_t>(base.target_day));
  const auto cf = sim::counterfactual_day(consumer.spec, day, profile);

  ForecastWindow w = base;
  w.future_profile_id = profile.id;
  for (int h = 0; h < sim::kHoursPerDay; ++h) {
    w.future_rate_level[static_cast<size_t>(h)] =
        sim::rate_level(profile.rates[static_cast<size_t>(h)]);
    w.target[static_cast<size_t>(h)] =
        (cf.total_load[static_cast<size_t>(h)] - norm.mean) / norm.stddev;
  }
  w.future_shift_indicator = shift_indicator_for(consumer.spec, day, cf.shift_target);
  return w;
}

}  // namespace drx::forecast
