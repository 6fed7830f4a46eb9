#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>

#include "mcselect/rng.hpp"

namespace mcselect {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Unnormalized log density (or log mass) over a state space. Samplers only
// ever form ratios, so any additive constant is irrelevant. Zero-mass states
// are signalled by -inf.
template <class T, class S>
concept TargetDistribution = requires(const T& t, const S& s) {
  { t.log_density(s) } -> std::convertible_to<double>;
};

// A proposal draw carries the candidate together with the Hastings
// correction log q(current | candidate) - log q(candidate | current),
// which is zero for symmetric proposals.
template <class S>
struct ProposalDraw {
  S value;
  double log_hastings = 0.0;
};

template <class P, class S>
concept ProposalDistribution = requires(const P& p, const S& s, RngStream& rng) {
  { p.propose(s, rng) } -> std::same_as<ProposalDraw<S>>;
};

// Proposals whose density can be evaluated pointwise; log_density(from, to)
// is log q(to | from).
template <class P, class S>
concept PointwiseProposal = ProposalDistribution<P, S> && requires(const P& p, const S& a, const S& b) {
  { p.is_symmetric() } -> std::convertible_to<bool>;
  { p.log_density(a, b) } -> std::convertible_to<double>;
};

// Current chain value with its cached unnormalized log density. The cache
// always holds the untempered value; tempering enters through the ratio.
template <class S>
struct ChainState {
  S value;
  double log_density = kNegInf;
};

template <class S, class T>
  requires TargetDistribution<T, S>
ChainState<S> make_chain_state(const T& target, S value) {
  const double lf = target.log_density(value);
  if (!std::isfinite(lf))
    throw std::domain_error("chain initialized at a state of zero target mass");
  return ChainState<S>{std::move(value), lf};
}

// Log of the ratio inside the 1 ^ (.) acceptance probability:
//   log f(candidate) + log q(current | candidate)
// - log f(current)   - log q(candidate | current).
// The q terms are skipped for symmetric proposals, where they cancel exactly.
// The caller accepts iff log(U) < min(0, value) with U ~ uniform(0,1).
template <class S, class T, class P>
  requires TargetDistribution<T, S> && PointwiseProposal<P, S>
double mh_accept_log_ratio(const T& target, const P& proposal, const ChainState<S>& current,
                           const S& candidate) {
  if (!std::isfinite(current.log_density))
    throw std::domain_error("current state has non-finite log density (invalid chain initialization)");
  double log_ratio = target.log_density(candidate) - current.log_density;
  if (!proposal.is_symmetric())
    log_ratio += proposal.log_density(candidate, current.value) -
                 proposal.log_density(current.value, candidate);
  return log_ratio;
}

// One Metropolis-Hastings transition against f^(1/T), T supplied as 1/T.
// The acceptance uniform is drawn after the candidate, on every path, so the
// stream position after a step does not depend on the outcome. Ties
// (log U == log ratio) reject.
template <class S, class T, class P>
  requires TargetDistribution<T, S> && ProposalDistribution<P, S>
bool mh_step(const T& target, const P& proposal, ChainState<S>& chain, RngStream& rng,
             double inv_temperature = 1.0) {
  if (!std::isfinite(chain.log_density))
    throw std::domain_error("current state has non-finite log density (invalid chain initialization)");
  ProposalDraw<S> draw = proposal.propose(chain.value, rng);
  const double candidate_log_density = target.log_density(draw.value);
  const double log_ratio =
      inv_temperature * (candidate_log_density - chain.log_density) + draw.log_hastings;
  const double u = rng.next_double();
  const bool accepted = std::log(u) < std::min(0.0, log_ratio);
  if (accepted) {
    chain.value = std::move(draw.value);
    chain.log_density = candidate_log_density;
  }
  return accepted;
}

struct KernelStats {
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;

  double acceptance_rate() const {
    return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

// A transition kernel advances one chain in place. Kernels are stateless and
// shared; per-call randomness comes from the chain's own stream, so chains
// can be advanced concurrently without coordination.
template <class K, class T, class S>
concept TransitionKernel = requires(const K& k, const T& t, ChainState<S>& c, RngStream& r,
                                    KernelStats& st, double inv_temp) {
  k.step(t, c, r, st, inv_temp);
};

// Plain single-proposal Metropolis-Hastings kernel.
template <class P>
struct MetropolisKernel {
  P proposal;

  template <class T, class S>
  void step(const T& target, ChainState<S>& chain, RngStream& rng, KernelStats& stats,
            double inv_temperature) const {
    ++stats.proposed;
    if (mh_step(target, proposal, chain, rng, inv_temperature)) ++stats.accepted;
  }
};

// f(theta)^(1/T) up to its (never computed) normalizing constant.
template <class T>
struct HeatedTarget {
  const T* base;
  double temperature;

  template <class S>
  double log_density(const S& s) const {
    return base->log_density(s) / temperature;
  }
};

}  // namespace mcselect
