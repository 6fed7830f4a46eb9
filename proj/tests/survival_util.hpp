#pragma once

// Synthetic survival datasets for the tree tests.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcselect/survival/data.hpp"
#include "oracles.hpp"

namespace testutil {

inline mcselect::SurvivalDataset make_survival_ds(
    std::vector<double> times, std::vector<std::uint8_t> events,
    std::vector<std::vector<double>> columns = {},
    std::vector<mcselect::CovariateKind> kinds = {},
    std::vector<std::vector<std::string>> categories = {}) {
  mcselect::SurvivalDataset ds;
  ds.time = std::move(times);
  ds.event = std::move(events);
  ds.columns = std::move(columns);
  for (std::size_t j = 0; j < ds.columns.size(); ++j) {
    mcselect::CovariateSchema s;
    s.name = "x" + std::to_string(j + 1);
    s.kind = j < kinds.size() ? kinds[j] : mcselect::CovariateKind::continuous;
    if (j < categories.size()) s.categories = categories[j];
    ds.schema.push_back(std::move(s));
  }
  ds.finalize();
  return ds;
}

// Weibull times with a genuine tree structure over two continuous covariates
// and one categorical covariate, plus uniform right censoring.
inline mcselect::SurvivalDataset simulated_survival(std::size_t n, std::uint64_t seed,
                                                    double censor_fraction = 0.2) {
  oracle::SimpleRng rng(seed);
  std::vector<double> times(n);
  std::vector<std::uint8_t> events(n, 1);
  std::vector<double> x1(n), x2(n), site(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = rng.uniform01() * 10.0;
    x2[i] = rng.uniform01() * 2.0 - 1.0;
    site[i] = static_cast<double>(rng.next() % 3);
    double alpha = 1.2, beta = 0.5;
    if (x1[i] > 5.0) beta = 2.0;
    if (x2[i] > 0.0 && site[i] == 2.0) alpha = 0.8;
    const double t = oracle::weibull_draw(rng, alpha, beta);
    times[i] = t;
    if (rng.uniform01() < censor_fraction) {
      times[i] = t * rng.uniform01();
      events[i] = 0;
    }
    if (times[i] <= 0.0) times[i] = 1e-6;
  }
  return make_survival_ds(
      std::move(times), std::move(events), {std::move(x1), std::move(x2), std::move(site)},
      {mcselect::CovariateKind::continuous, mcselect::CovariateKind::ordinal,
       mcselect::CovariateKind::categorical},
      {{}, {}, {"a", "b", "c"}});
}

}  // namespace testutil
