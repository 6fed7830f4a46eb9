#pragma once

// Finite-state targets and tabulated proposals shared by the sampler tests.

#include <cmath>
#include <vector>

#include "mcselect/mcmc.hpp"
#include "mcselect/rng.hpp"
#include "oracles.hpp"

namespace testutil {

struct DiscreteTarget {
  std::vector<double> mass;  // unnormalized, zero allowed

  double log_density(const int& s) const {
    const double m = mass[static_cast<std::size_t>(s)];
    return m > 0.0 ? std::log(m) : oracle::kNegInf;
  }
};

// Proposal tabulated as a row-stochastic matrix with zero diagonal.
struct DiscreteProposal {
  oracle::Mat q;
  bool symmetric = false;

  mcselect::ProposalDraw<int> propose(const int& current, mcselect::RngStream& rng) const {
    const double u = rng.next_double();
    double acc = 0.0;
    const auto row = static_cast<std::size_t>(current);
    int candidate = -1;
    for (std::size_t j = 0; j < q.n; ++j) {
      acc += q(row, j);
      if (u < acc) {
        candidate = static_cast<int>(j);
        break;
      }
    }
    if (candidate < 0) {  // guard tiny rounding defect in the row sum
      for (std::size_t j = q.n; j-- > 0;)
        if (q(row, j) > 0.0) {
          candidate = static_cast<int>(j);
          break;
        }
    }
    double log_hastings = 0.0;
    if (!symmetric)
      log_hastings = std::log(q(static_cast<std::size_t>(candidate), row)) -
                     std::log(q(row, static_cast<std::size_t>(candidate)));
    return {candidate, log_hastings};
  }

  bool is_symmetric() const { return symmetric; }

  double log_density(const int& from, const int& to) const {
    const double p = q(static_cast<std::size_t>(from), static_cast<std::size_t>(to));
    return p > 0.0 ? std::log(p) : oracle::kNegInf;
  }
};

// Random strictly positive target over n states.
inline DiscreteTarget random_target(std::size_t n, oracle::SimpleRng& rng) {
  DiscreteTarget t;
  t.mass.resize(n);
  for (auto& m : t.mass) m = 0.05 + rng.uniform01() * 3.0;
  return t;
}

// Random proposal with zero diagonal and full off-diagonal support. The
// symmetric variant is a circulant built from random distance weights, which
// keeps the matrix symmetric and row-stochastic at the same time.
inline DiscreteProposal random_proposal(std::size_t n, oracle::SimpleRng& rng, bool symmetric) {
  DiscreteProposal p{oracle::Mat(n), symmetric};
  if (symmetric) {
    std::vector<double> w(n, 0.0);
    for (std::size_t d = 1; d < n; ++d) w[d] = 0.05 + rng.uniform01();
    for (std::size_t d = 1; d <= n / 2; ++d) w[n - d] = w[d];  // distance is mod-n symmetric
    double row = 0.0;
    for (std::size_t d = 1; d < n; ++d) row += w[d];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) p.q(i, j) = w[(j + n - i) % n] / row;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) {
          p.q(i, j) = 0.05 + rng.uniform01();
          row += p.q(i, j);
        }
      for (std::size_t j = 0; j < n; ++j) p.q(i, j) /= row;
    }
  }
  return p;
}

}  // namespace testutil
