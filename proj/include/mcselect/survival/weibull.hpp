#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mcselect/mcmc.hpp"
#include "mcselect/survival/tree.hpp"

namespace mcselect {

// Per-leaf sufficient statistics for the Weibull leaf model with the scale
// parameter integrated out analytically under the Jeffreys prior
// 1/(alpha beta). d = uncensored count, weighted_log_sum = sum of log t over
// uncensored members.
struct LeafStats {
  double d = 0.0;
  double weighted_log_sum = 0.0;  // L = sum_j delta_j log t_j over the leaf
  double max_log_time = kNegInf;  // over all members, censored included

  static LeafStats from(const SurvivalDataset& ds, std::span<const std::int32_t> members) {
    LeafStats s;
    for (std::int32_t obs : members) {
      const auto i = static_cast<std::size_t>(obs);
      if (ds.event[i]) {
        s.d += 1.0;
        s.weighted_log_sum += ds.log_time[i];
      }
      s.max_log_time = std::max(s.max_log_time, ds.log_time[i]);
    }
    return s;
  }
};

// The leaf posterior in alpha is integrable iff at least two uncensored
// observations fall in the leaf and L < d * max log t strictly; equality
// happens exactly when every uncensored time sits at the leaf maximum (all
// observations equal is the special case), and then the integral diverges.
inline bool leaf_proper(const LeafStats& s) {
  return s.d >= 2.0 && s.weighted_log_sum < s.d * s.max_log_time;
}

inline bool leaf_proper(const SurvivalDataset& ds, std::span<const std::int32_t> members) {
  return leaf_proper(LeafStats::from(ds, members));
}

namespace detail {

// Moments of log t under the t^alpha-weighted distribution over the leaf:
// log_sum = log sum_j t_j^alpha, m1/m2 the weighted first and second moments
// of log t. Computed via log-sum-exp, so large alpha cannot overflow.
struct WeightedLogMoments {
  double log_sum;
  double m1;
  double m2;
};

inline WeightedLogMoments weighted_log_moments(const SurvivalDataset& ds,
                                               std::span<const std::int32_t> members,
                                               double alpha) {
  double max_term = kNegInf;
  for (std::int32_t obs : members)
    max_term = std::max(max_term, alpha * ds.log_time[static_cast<std::size_t>(obs)]);
  double sum = 0.0, sum_lt = 0.0, sum_lt2 = 0.0;
  for (std::int32_t obs : members) {
    const double lt = ds.log_time[static_cast<std::size_t>(obs)];
    const double w = std::exp(alpha * lt - max_term);
    sum += w;
    sum_lt += w * lt;
    sum_lt2 += w * lt * lt;
  }
  return {max_term + std::log(sum), sum_lt / sum, sum_lt2 / sum};
}

}  // namespace detail

// Log integrated leaf posterior as a function of eta = log alpha, including
// the change-of-variables Jacobian, so exp of it integrates to the same mass
// as the (alpha, beta) joint with the Jeffreys prior:
//   l(eta) = log Gamma(d) + eta d + (e^eta - 1) L - d log sum_j t_j^(e^eta).
inline double leaf_log_integrand(const SurvivalDataset& ds,
                                 std::span<const std::int32_t> members, double eta) {
  const LeafStats s = LeafStats::from(ds, members);
  if (!(s.d >= 1.0)) return kNegInf;
  const double alpha = std::exp(eta);
  const auto mom = detail::weighted_log_moments(ds, members, alpha);
  return std::lgamma(s.d) + eta * s.d + (alpha - 1.0) * s.weighted_log_sum - s.d * mom.log_sum;
}

// First derivative of l in eta: d + alpha (L - d m1(alpha)).
inline double leaf_log_integrand_d1(const SurvivalDataset& ds,
                                    std::span<const std::int32_t> members, double eta) {
  const LeafStats s = LeafStats::from(ds, members);
  const double alpha = std::exp(eta);
  const auto mom = detail::weighted_log_moments(ds, members, alpha);
  return s.d + alpha * (s.weighted_log_sum - s.d * mom.m1);
}

// Second derivative of l in eta:
//   alpha (L - d m1) - d alpha^2 (m2 - m1^2),
// i.e. the slope term plus -d alpha^2 times the weighted variance of log t.
// At the mode the first piece equals -d, so the curvature is strictly
// negative whenever the leaf is proper.
inline double leaf_log_integrand_d2(const SurvivalDataset& ds,
                                    std::span<const std::int32_t> members, double eta) {
  const LeafStats s = LeafStats::from(ds, members);
  const double alpha = std::exp(eta);
  const auto mom = detail::weighted_log_moments(ds, members, alpha);
  const double variance = mom.m2 - mom.m1 * mom.m1;
  return alpha * (s.weighted_log_sum - s.d * mom.m1) - s.d * alpha * alpha * variance;
}

struct LeafEvidence {
  double eta_hat = 0.0;
  double l_at_hat = 0.0;
  double l2_at_hat = 0.0;
  double log_evidence = 0.0;  // 0.5 log(2 pi) + l(eta_hat) - 0.5 log(-l2(eta_hat))
};

// Posterior mode of eta and the Laplace log evidence of the leaf. The mode
// is found by Newton steps safeguarded with bisection inside a sign-change
// bracket of l'; the gradient at the returned mode is below 1e-9 in absolute
// value. Returns nullopt for improper leaves and on non-convergence.
inline std::optional<LeafEvidence> leaf_laplace_evidence(
    const SurvivalDataset& ds, std::span<const std::int32_t> members) {
  const LeafStats stats = LeafStats::from(ds, members);
  if (!leaf_proper(stats)) return std::nullopt;

  auto d1 = [&](double eta) { return leaf_log_integrand_d1(ds, members, eta); };

  double lo = -40.0;
  if (!(d1(lo) > 0.0)) return std::nullopt;
  double hi = 2.0;
  while (d1(hi) > 0.0) {
    hi += 4.0;
    if (hi > 44.0) return std::nullopt;  // slope never turns: numerically improper
  }

  double eta = 0.5 * (lo + hi);
  double grad = d1(eta);
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    if (std::abs(grad) < 1e-9) {
      converged = true;
      break;
    }
    if (grad > 0.0)
      lo = eta;
    else
      hi = eta;
    const double curv = leaf_log_integrand_d2(ds, members, eta);
    double next = curv < 0.0 ? eta - grad / curv : lo - 1.0;  // reject non-concave steps
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    eta = next;
    grad = d1(eta);
    if (hi - lo < 1e-14) break;
  }
  if (!converged && std::abs(grad) >= 1e-8) return std::nullopt;

  LeafEvidence ev;
  ev.eta_hat = eta;
  ev.l_at_hat = leaf_log_integrand(ds, members, eta);
  ev.l2_at_hat = leaf_log_integrand_d2(ds, members, eta);
  if (!(ev.l2_at_hat < 0.0)) return std::nullopt;
  ev.log_evidence = 0.5 * std::log(2.0 * 3.14159265358979323846) + ev.l_at_hat -
                    0.5 * std::log(-ev.l2_at_hat);
  return ev;
}

// Laplace approximation of the log marginal posterior of the tree structure:
// sum over leaves of 0.5 log(2 pi) + l(eta_hat) - 0.5 log(-l2(eta_hat)),
// i.e. b log(2 pi)/2 plus the per-leaf terms. -inf when any leaf is improper.
// The tree prior is uniform over valid trees, so no structure term appears.
inline double tree_log_marginal(const SurvivalDataset& ds, const TreedState& state) {
  double total = 0.0;
  for (int id : state.tree.leaf_ids()) {
    const auto ev = leaf_laplace_evidence(ds, state.leaf_members[static_cast<std::size_t>(id)]);
    if (!ev) return kNegInf;
    total += ev->log_evidence;
  }
  return total;
}

namespace detail {

struct MemberKeyHash {
  std::size_t operator()(const std::vector<std::int32_t>& v) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int32_t x : v) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(x));
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

// Target over treed states. Per-leaf evidence is memoized on the leaf's
// member list (exact key, not a hash digest), which makes repeated visits to
// the same partitions cheap on small datasets.
class SurvivalTreePosterior {
 public:
  SurvivalTreePosterior(const SurvivalDataset& ds, int b_max)
      : ds_(&ds), b_max_(b_max) {
    if (b_max_ < 1) throw std::invalid_argument("leaf cap must be >= 1");
  }

  double log_density(const TreedState& state) const {
    if (state.tree.n_leaves() > b_max_) {
      rejected_.fetch_add(1, std::memory_order_relaxed);
      return kNegInf;
    }
    double total = 0.0;
    for (int id : state.tree.leaf_ids()) {
      const auto& members = state.leaf_members[static_cast<std::size_t>(id)];
      const auto ev = cached_leaf_evidence(members);
      if (!ev) {
        rejected_.fetch_add(1, std::memory_order_relaxed);
        return kNegInf;
      }
      total += ev->log_evidence;
    }
    return total;
  }

  std::optional<LeafEvidence> cached_leaf_evidence(
      const std::vector<std::int32_t>& members) const {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      const auto it = cache_.find(members);
      if (it != cache_.end()) return it->second;
    }
    const auto ev = leaf_laplace_evidence(*ds_, members);
    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_.size() > kMaxCacheEntries) cache_.clear();
    cache_.emplace(members, ev);
    return ev;
  }

  std::int64_t rejected_evaluations() const {
    return rejected_.load(std::memory_order_relaxed);
  }
  const SurvivalDataset& dataset() const { return *ds_; }
  int b_max() const { return b_max_; }

 private:
  static constexpr std::size_t kMaxCacheEntries = 1u << 20;
  const SurvivalDataset* ds_;
  int b_max_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::vector<std::int32_t>, std::optional<LeafEvidence>,
                             detail::MemberKeyHash>
      cache_;
  mutable std::atomic<std::int64_t> rejected_{0};
};

}  // namespace mcselect
