#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcselect/trace.hpp"

namespace mcselect {

// Coordinate-wise mean of a trace of binary inclusion vectors.
inline std::vector<double> inclusion_probabilities(
    std::span<const std::vector<std::uint8_t>> states) {
  if (states.empty()) throw std::invalid_argument("inclusion probabilities of an empty trace");
  const std::size_t p = states.front().size();
  std::vector<double> sums(p, 0.0);
  for (const auto& gamma : states) {
    if (gamma.size() != p) throw std::invalid_argument("trace states have mixed lengths");
    for (std::size_t j = 0; j < p; ++j) sums[j] += gamma[j];
  }
  for (auto& s : sums) s /= static_cast<double>(states.size());
  return sums;
}

inline std::vector<double> inclusion_probabilities(const Trace<std::vector<std::uint8_t>>& t) {
  return inclusion_probabilities(std::span<const std::vector<std::uint8_t>>(t.states));
}

struct McseResult {
  double value = 0.0;
  std::size_t window = 0;  // truncation lag W; summation runs over |h| < W
};

// Monte Carlo standard error of the trace mean,
//   sqrt( (1/N) sum_{|h|<W} (1 - |h|/N) A(h) ),
// with A(h) the biased (1/N) mean-subtracted lag-h autocovariance. W is the
// smallest even lag with A(W) + A(W+1) <= 0 (initial positive sequence), so
// the windowed sum cannot go negative except by taper rounding, which is
// clamped.
inline McseResult mcse_with_window(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 100) throw std::invalid_argument("mcse needs at least 100 samples");
  const double nd = static_cast<double>(n);

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= nd;

  auto autocov = [&](std::size_t h) {
    double s = 0.0;
    for (std::size_t i = 0; i + h < n; ++i) s += (x[i] - mean) * (x[i + h] - mean);
    return s / nd;
  };

  const double a0 = autocov(0);
  if (a0 <= 0.0) return {0.0, 0};  // constant trace

  double sum = a0;
  std::size_t w = 0;
  for (std::size_t m = 0;; ++m) {
    const std::size_t h0 = 2 * m;
    const std::size_t h1 = h0 + 1;
    if (h1 >= n) {
      w = h0 < n ? h0 : n - 1;
      break;
    }
    const double pair = autocov(h0) + autocov(h1);
    if (pair <= 0.0) {
      w = h0;
      break;
    }
    if (m == 0) {
      sum += 2.0 * (1.0 - 1.0 / nd) * autocov(1);
    } else {
      sum += 2.0 * (1.0 - static_cast<double>(h0) / nd) * autocov(h0);
      sum += 2.0 * (1.0 - static_cast<double>(h1) / nd) * autocov(h1);
    }
  }
  if (w == 0) return {0.0, 0};
  return {std::sqrt(std::max(0.0, sum / nd)), w};
}

inline double mcse(std::span<const double> x) { return mcse_with_window(x).value; }

// Equal-width histogram over [lo, hi) with explicit under/overflow counts, so
// that every trace value is accounted for.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;
  std::int64_t underflow = 0;
  std::int64_t overflow = 0;

  std::int64_t total() const {
    std::int64_t t = underflow + overflow;
    for (auto c : counts) t += c;
    return t;
  }

  // Fraction of all recorded values falling in [a, b), bin-resolution.
  double mass_between(double a, double b) const {
    const auto n_bins = static_cast<std::int64_t>(counts.size());
    const double width = (hi - lo) / static_cast<double>(n_bins);
    std::int64_t in_range = 0;
    for (std::int64_t i = 0; i < n_bins; ++i) {
      const double bin_lo = lo + width * static_cast<double>(i);
      const double bin_hi = bin_lo + width;
      if (bin_lo >= a && bin_hi <= b) in_range += counts[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(in_range) / static_cast<double>(total());
  }
};

inline Histogram histogram(std::span<const double> x, double lo, double hi, int n_bins) {
  if (n_bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  if (!(lo < hi)) throw std::invalid_argument("histogram range must satisfy lo < hi");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(n_bins), 0);
  for (double v : x) {
    if (v < lo) {
      ++h.underflow;
    } else if (v >= hi) {
      ++h.overflow;
    } else {
      auto idx = static_cast<std::int64_t>(std::floor((v - lo) * n_bins / (hi - lo)));
      idx = std::min<std::int64_t>(idx, n_bins - 1);
      ++h.counts[static_cast<std::size_t>(idx)];
    }
  }
  return h;
}

// Per-run summary with fixed export field names.
struct RunReport {
  std::vector<double> inclusion_probabilities;
  std::vector<double> mcse;
  std::vector<std::size_t> mcse_window;
  std::vector<double> acceptance_rates;
  double swap_rate = 0.0;
  std::optional<Histogram> histogram;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;
  std::int64_t singular_models_rejected = 0;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["inclusion_probabilities"] = r.inclusion_probabilities;
  j["mcse"] = r.mcse;
  j["mcse_window"] = r.mcse_window;
  j["acceptance_rates"] = r.acceptance_rates;
  j["swap_rate"] = r.swap_rate;
  if (r.histogram) {
    j["histogram"] = {{"lo", r.histogram->lo},
                      {"hi", r.histogram->hi},
                      {"counts", r.histogram->counts},
                      {"underflow", r.histogram->underflow},
                      {"overflow", r.histogram->overflow}};
  }
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["iterations"] = r.iterations;
  j["singular_models_rejected"] = r.singular_models_rejected;
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.inclusion_probabilities = j.at("inclusion_probabilities").get<std::vector<double>>();
  r.mcse = j.at("mcse").get<std::vector<double>>();
  r.mcse_window = j.at("mcse_window").get<std::vector<std::size_t>>();
  r.acceptance_rates = j.at("acceptance_rates").get<std::vector<double>>();
  r.swap_rate = j.at("swap_rate").get<double>();
  if (j.contains("histogram")) {
    Histogram h;
    h.lo = j["histogram"].at("lo").get<double>();
    h.hi = j["histogram"].at("hi").get<double>();
    h.counts = j["histogram"].at("counts").get<std::vector<std::int64_t>>();
    h.underflow = j["histogram"].value("underflow", 0);
    h.overflow = j["histogram"].value("overflow", 0);
    r.histogram = std::move(h);
  }
  r.config_hash = j.value("config_hash", "");
  r.seed = j.value("seed", std::uint64_t{0});
  r.iterations = j.value("iterations", std::int64_t{0});
  r.singular_models_rejected = j.value("singular_models_rejected", std::int64_t{0});
  return r;
}

inline void write_report_json(const std::string& path, const RunReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << report_to_json(r).dump(2) << "\n";
}

inline RunReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return report_from_json(j);
}

// Trace exports: CSV, one row per iteration.

inline void write_trace_csv(const std::string& path, const Trace<double>& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "iteration,value\n";
  for (std::size_t i = 0; i < t.states.size(); ++i)
    out << (i + 1) << "," << detail::format_double(t.states[i]) << "\n";
}

inline Trace<double> read_scalar_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file " + path);
  Trace<double> t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("malformed trace row: " + line);
    t.states.push_back(std::stod(line.substr(comma + 1)));
  }
  return t;
}

inline void write_trace_csv(const std::string& path,
                            const Trace<std::vector<std::uint8_t>>& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::size_t p = t.states.empty() ? 0 : t.states.front().size();
  out << "iteration";
  for (std::size_t j = 1; j <= p; ++j) out << ",g" << j;
  out << "\n";
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    out << (i + 1);
    for (auto b : t.states[i]) out << "," << static_cast<int>(b);
    out << "\n";
  }
}

inline Trace<std::vector<std::uint8_t>> read_binary_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file " + path);
  Trace<std::vector<std::uint8_t>> t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::uint8_t> gamma;
    std::stringstream ss(line);
    std::string field;
    bool first = true;
    while (std::getline(ss, field, ',')) {
      if (first) {
        first = false;
        continue;
      }
      gamma.push_back(static_cast<std::uint8_t>(std::stoi(field)));
    }
    t.states.push_back(std::move(gamma));
  }
  return t;
}

inline void write_histogram_csv(const std::string& path, const Histogram& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "bin_lo,bin_hi,count\n";
  const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
  out << "-inf," << detail::format_double(h.lo) << "," << h.underflow << "\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << detail::format_double(h.lo + width * static_cast<double>(i)) << ","
        << detail::format_double(h.lo + width * static_cast<double>(i + 1)) << ","
        << h.counts[i] << "\n";
  }
  out << detail::format_double(h.hi) << ",inf," << h.overflow << "\n";
}

inline Histogram read_histogram_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty histogram file " + path);
  Histogram h;
  std::vector<std::array<std::string, 3>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<std::string, 3> row;
    std::getline(ss, row[0], ',');
    std::getline(ss, row[1], ',');
    std::getline(ss, row[2], ',');
    rows.push_back(std::move(row));
  }
  if (rows.size() < 3) throw std::runtime_error("histogram file too short: " + path);
  h.underflow = std::stoll(rows.front()[2]);
  h.overflow = std::stoll(rows.back()[2]);
  h.lo = std::stod(rows[1][0]);
  h.hi = std::stod(rows[rows.size() - 2][1]);
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) h.counts.push_back(std::stoll(rows[i][2]));
  return h;
}

}  // namespace mcselect
