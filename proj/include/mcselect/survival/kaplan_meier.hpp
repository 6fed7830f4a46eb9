#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mcselect {

struct KaplanMeierCurve {
  std::vector<double> event_times;  // distinct times with at least one event
  std::vector<double> survival;     // S(t) immediately after each event time

  // Right-continuous step function; S(t) = 1 before the first event time.
  double at(double t) const {
    double s = 1.0;
    for (std::size_t i = 0; i < event_times.size() && event_times[i] <= t; ++i) s = survival[i];
    return s;
  }
};

// Product-limit estimator over right-censored data:
//   S(t) = prod_{t_(i) <= t} (1 - d_i / n_i)
// with d_i the events at t_(i) and n_i the count still at risk.
inline KaplanMeierCurve kaplan_meier(std::span<const double> times,
                                     std::span<const std::uint8_t> events) {
  if (times.empty()) throw std::invalid_argument("kaplan_meier needs at least one observation");
  if (times.size() != events.size())
    throw std::invalid_argument("times/events length mismatch");

  std::vector<std::size_t> order(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  KaplanMeierCurve curve;
  double s = 1.0;
  std::size_t i = 0;
  const std::size_t n = times.size();
  while (i < n) {
    const double t = times[order[i]];
    const std::size_t at_risk = n - i;
    std::size_t d = 0;
    std::size_t j = i;
    while (j < n && times[order[j]] == t) {
      d += events[order[j]];
      ++j;
    }
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      curve.event_times.push_back(t);
      curve.survival.push_back(s);
    }
    i = j;
  }
  return curve;
}

inline std::vector<double> kaplan_meier_at(std::span<const double> times,
                                           std::span<const std::uint8_t> events,
                                           std::span<const double> eval_times) {
  const KaplanMeierCurve curve = kaplan_meier(times, events);
  std::vector<double> out;
  out.reserve(eval_times.size());
  for (double t : eval_times) out.push_back(curve.at(t));
  return out;
}

}  // namespace mcselect
