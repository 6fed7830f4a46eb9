#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mcselect/mcmc.hpp"
#include "mcselect/rng.hpp"

namespace mcselect {

// Scalar Gaussian mixture evaluated in log space via log-sum-exp, so tail
// evaluations far from every component stay finite.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> means, std::vector<double> stddevs,
                  std::vector<double> weights)
      : means_(std::move(means)), stddevs_(std::move(stddevs)), weights_(std::move(weights)) {
    if (means_.empty() || means_.size() != stddevs_.size() || means_.size() != weights_.size())
      throw std::invalid_argument("mixture parameter vectors must have equal nonzero length");
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < means_.size(); ++k) {
      if (!(stddevs_[k] > 0.0) || !std::isfinite(stddevs_[k]))
        throw std::invalid_argument("mixture stddevs must be positive and finite");
      if (!(weights_[k] > 0.0)) throw std::invalid_argument("mixture weights must be positive");
      if (!std::isfinite(means_[k])) throw std::invalid_argument("mixture means must be finite");
      weight_sum += weights_[k];
    }
    if (std::abs(weight_sum - 1.0) > 1e-12)
      throw std::invalid_argument("mixture weights must sum to 1");
    log_weight_terms_.resize(means_.size());
    for (std::size_t k = 0; k < means_.size(); ++k)
      log_weight_terms_[k] =
          std::log(weights_[k]) - std::log(stddevs_[k]) - 0.5 * std::log(2.0 * kPi);
  }

  double log_density(double x) const {
    double max_term = kNegInf;
    thread_local std::vector<double> terms;
    terms.assign(means_.size(), 0.0);
    for (std::size_t k = 0; k < means_.size(); ++k) {
      const double z = (x - means_[k]) / stddevs_[k];
      terms[k] = log_weight_terms_[k] - 0.5 * z * z;
      if (terms[k] > max_term) max_term = terms[k];
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - max_term);
    return max_term + std::log(sum);
  }

  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& stddevs() const { return stddevs_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t components() const { return means_.size(); }

  nlohmann::json to_json() const {
    return {{"means", means_}, {"stddevs", stddevs_}, {"weights", weights_}};
  }

  static GaussianMixture from_json(const nlohmann::json& j) {
    return GaussianMixture(j.at("means").get<std::vector<double>>(),
                           j.at("stddevs").get<std::vector<double>>(),
                           j.at("weights").get<std::vector<double>>());
  }

  // Five-component benchmark with four visibly distinct modes; the two
  // components around 3 are close enough to merge into a single mode.
  static GaussianMixture four_mode_benchmark() {
    return GaussianMixture({-8.85, -2.65, 2.63, 3.85, 4.35}, {0.18, 0.51, 0.50, 0.42, 0.24},
                           {0.22, 0.22, 0.23, 0.15, 0.18});
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::vector<double> means_;
  std::vector<double> stddevs_;
  std::vector<double> weights_;
  std::vector<double> log_weight_terms_;
};

// Mixture with components drawn uniformly at random: means over mean_range,
// stddevs over sd_range, and unnormalized weights over weight_range before
// normalization.
inline GaussianMixture random_mixture(int n_components, std::pair<double, double> mean_range,
                                      std::pair<double, double> sd_range,
                                      std::pair<double, double> weight_range,
                                      std::uint64_t seed) {
  if (n_components < 1) throw std::invalid_argument("mixture needs at least one component");
  if (!(mean_range.first <= mean_range.second) || !(sd_range.first <= sd_range.second) ||
      !(weight_range.first <= weight_range.second) || !(sd_range.first > 0.0) ||
      !(weight_range.first > 0.0))
    throw std::invalid_argument("invalid mixture generation ranges");
  RngStream rng(seed, 0);
  std::vector<double> means(static_cast<std::size_t>(n_components));
  std::vector<double> sds(static_cast<std::size_t>(n_components));
  std::vector<double> weights(static_cast<std::size_t>(n_components));
  for (auto& m : means) m = rng.uniform(mean_range.first, mean_range.second);
  for (auto& s : sds) s = rng.uniform(sd_range.first, sd_range.second);
  double total = 0.0;
  for (auto& w : weights) {
    w = rng.uniform(weight_range.first, weight_range.second);
    total += w;
  }
  for (auto& w : weights) w /= total;
  // Guard the sum-to-one invariant against accumulated rounding.
  double check = 0.0;
  for (double w : weights) check += w;
  weights.back() += 1.0 - check;
  return GaussianMixture(std::move(means), std::move(sds), std::move(weights));
}

// Symmetric random walk: uniform on (current - delta, current + delta).
// A draw landing exactly on the current value is redrawn, so the proposal
// never returns the current state.
struct UniformWalkProposal {
  double delta;

  explicit UniformWalkProposal(double half_width) : delta(half_width) {
    if (!(delta > 0.0) || !std::isfinite(delta))
      throw std::invalid_argument("walk half-width must be positive and finite");
  }

  ProposalDraw<double> propose(const double& current, RngStream& rng) const {
    double candidate;
    do {
      candidate = current + rng.uniform(-delta, delta);
    } while (candidate == current);
    return {candidate, 0.0};
  }

  bool is_symmetric() const { return true; }

  double log_density(const double& from, const double& to) const {
    return std::abs(to - from) < delta ? -std::log(2.0 * delta) : kNegInf;
  }
};

// Evaluation windows around each visually distinct mode: the hull of
// mean +/- 4 sd over the components forming the mode. Windows may overlap.
inline std::vector<std::pair<double, double>> mode_regions(
    const GaussianMixture& mix, const std::vector<std::vector<int>>& mode_groups) {
  std::vector<std::pair<double, double>> regions;
  regions.reserve(mode_groups.size());
  for (const auto& group : mode_groups) {
    double lo = -kNegInf;
    double hi = kNegInf;
    for (int k : group) {
      const auto idx = static_cast<std::size_t>(k);
      lo = std::min(lo, mix.means()[idx] - 4.0 * mix.stddevs()[idx]);
      hi = std::max(hi, mix.means()[idx] + 4.0 * mix.stddevs()[idx]);
    }
    regions.emplace_back(lo, hi);
  }
  return regions;
}

// Mode grouping for the four_mode_benchmark mixture: components 3 and 4
// (0-based 2 and 3) form one mode.
inline std::vector<std::vector<int>> four_mode_benchmark_groups() {
  return {{0}, {1}, {2, 3}, {4}};
}

}  // namespace mcselect
