#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "discrete.hpp"
#include "mcselect/mcmc.hpp"
#include "mcselect/samplers.hpp"
#include "mcselect/targets/gaussian_mixture.hpp"
#include "oracles.hpp"

using namespace mcselect;

namespace {

// Independent scalar evaluation of a Gaussian mixture density, summed
// directly in linear space.
double naive_mixture_log_density(const std::vector<double>& means,
                                 const std::vector<double>& sds,
                                 const std::vector<double>& weights, double x) {
  double sum = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double z = (x - means[k]) / sds[k];
    sum += weights[k] / (sds[k] * std::sqrt(2.0 * 3.14159265358979323846)) *
           std::exp(-0.5 * z * z);
  }
  return std::log(sum);
}

struct ConstantTarget {
  double log_density(const double&) const { return 1.5; }
};

}  // namespace

TEST_CASE("acceptance log ratio is zero when densities match under a symmetric proposal") {
  testutil::DiscreteTarget target{{2.0, 2.0}};
  oracle::SimpleRng seed_rng(1);
  auto proposal = testutil::random_proposal(2, seed_rng, true);
  const ChainState<int> current{0, target.log_density(0)};
  REQUIRE(mh_accept_log_ratio(target, proposal, current, 1) == Approx(0.0).margin(1e-15));
}

TEST_CASE("acceptance log ratio follows the density ratio") {
  testutil::DiscreteTarget target{{2.0, 1.0}};
  oracle::SimpleRng seed_rng(2);
  auto proposal = testutil::random_proposal(2, seed_rng, true);
  const ChainState<int> current{0, target.log_density(0)};
  REQUIRE(mh_accept_log_ratio(target, proposal, current, 1) ==
          Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("asymmetric proposals contribute their Hastings correction") {
  testutil::DiscreteTarget target{{1.0, 3.0, 0.5}};
  oracle::SimpleRng seed_rng(3);
  auto proposal = testutil::random_proposal(3, seed_rng, false);
  const ChainState<int> current{0, target.log_density(0)};
  const double expected = target.log_density(1) - target.log_density(0) +
                          proposal.log_density(1, 0) - proposal.log_density(0, 1);
  REQUIRE(mh_accept_log_ratio(target, proposal, current, 1) == Approx(expected).epsilon(1e-12));
}

TEST_CASE("mixture ratio agrees with an independent direct evaluation") {
  const std::vector<double> means{-8.85, -2.65, 2.63, 3.85, 4.35};
  const std::vector<double> sds{0.18, 0.51, 0.50, 0.42, 0.24};
  const std::vector<double> weights{0.22, 0.22, 0.23, 0.15, 0.18};
  const GaussianMixture mix(means, sds, weights);
  const UniformWalkProposal walk(1.0);
  const ChainState<double> current{-8.85, mix.log_density(-8.85)};
  const double expected =
      naive_mixture_log_density(means, sds, weights, -8.35) -
      naive_mixture_log_density(means, sds, weights, -8.85);
  REQUIRE(mh_accept_log_ratio(mix, walk, current, -8.35) == Approx(expected).epsilon(1e-10));
}

TEST_CASE("non-finite current state is a hard error") {
  testutil::DiscreteTarget target{{0.0, 1.0}};
  oracle::SimpleRng seed_rng(4);
  auto proposal = testutil::random_proposal(2, seed_rng, true);
  const ChainState<int> bad{0, kNegInf};
  REQUIRE_THROWS_AS(mh_accept_log_ratio(target, proposal, bad, 1), std::domain_error);
  REQUIRE_THROWS_AS(make_chain_state(target, 0), std::domain_error);
}

TEST_CASE("a log ratio of zero always accepts") {
  ConstantTarget target;
  const UniformWalkProposal walk(0.5);
  RngStream rng(99, 1);
  ChainState<double> chain = make_chain_state(target, 0.0);
  for (int i = 0; i < 50; ++i) {
    const double before = chain.value;
    REQUIRE(mh_step(target, walk, chain, rng));
    REQUIRE(chain.value != before);
  }
}

TEST_CASE("zero-mass candidates are rejected and leave the state unchanged") {
  testutil::DiscreteTarget target{{1.0, 0.0}};
  oracle::Mat q(2);
  q(0, 1) = 1.0;
  q(1, 0) = 1.0;
  testutil::DiscreteProposal proposal{std::move(q), true};
  RngStream rng(7, 1);
  ChainState<int> chain = make_chain_state(target, 0);
  for (int i = 0; i < 20; ++i) {
    REQUIRE_FALSE(mh_step(target, proposal, chain, rng));
    REQUIRE(chain.value == 0);
    REQUIRE(chain.log_density == Approx(0.0));
  }
}

TEST_CASE("empirical transition frequencies match the analytic kernel") {
  testutil::DiscreteTarget target{{1.0, 2.5, 0.7}};
  oracle::SimpleRng seed_rng(5);
  auto proposal = testutil::random_proposal(3, seed_rng, false);
  const oracle::Mat kernel = oracle::assemble_mh_kernel(target.mass, proposal.q);

  RngStream rng(123, 1);
  ChainState<int> chain = make_chain_state(target, 0);
  const int n = 1000000;
  oracle::Mat counts(3);
  std::vector<int> visits(3, 0);
  for (int i = 0; i < n; ++i) {
    const int from = chain.value;
    mh_step(target, proposal, chain, rng);
    counts(static_cast<std::size_t>(from), static_cast<std::size_t>(chain.value)) += 1.0;
    ++visits[static_cast<std::size_t>(from)];
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double p = kernel(i, j);
      const double n_i = static_cast<double>(visits[i]);
      const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / n_i);
      REQUIRE(std::abs(counts(i, j) / n_i - p) < 3.0 * se + 1e-9);
    }
}

TEST_CASE("assembled MH kernels satisfy detailed balance on every small target") {
  oracle::SimpleRng seed_rng(2024);
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int rep = 0; rep < 25; ++rep) {
      auto target = testutil::random_target(n, seed_rng);
      const bool symmetric = rep % 2 == 0;
      auto proposal = testutil::random_proposal(n, seed_rng, symmetric);
      if (rep % 5 == 4) target.mass[rep % n] = 0.0;  // include zero-mass states

      // Kernel assembled from the implementation's acceptance arithmetic.
      oracle::Mat kernel(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (target.mass[i] <= 0.0) continue;
        double out = 0.0;
        const ChainState<int> cur{static_cast<int>(i), target.log_density(static_cast<int>(i))};
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i || proposal.q(i, j) == 0.0) continue;
          const double log_ratio =
              mh_accept_log_ratio(target, proposal, cur, static_cast<int>(j));
          kernel(i, j) = proposal.q(i, j) * std::exp(std::min(0.0, log_ratio));
          out += kernel(i, j);
        }
        kernel(i, i) = 1.0 - out;
      }
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          REQUIRE(std::abs(target.mass[a] * kernel(a, b) - target.mass[b] * kernel(b, a)) <
                  1e-12);
    }
  }
}

TEST_CASE("adding a constant to the log density leaves the trace bitwise unchanged") {
  struct Shifted {
    const GaussianMixture* base;
    double shift;
    double log_density(const double& x) const { return base->log_density(x) + shift; }
  };
  const auto mix = GaussianMixture::four_mode_benchmark();
  const MetropolisKernel<UniformWalkProposal> kernel{UniformWalkProposal(1.0)};
  const auto plain = run_mh(mix, kernel, 0.0, 100000, 2718);

  const Shifted up{&mix, 1000.0};
  const MetropolisKernel<UniformWalkProposal> kernel2{UniformWalkProposal(1.0)};
  const auto shifted = run_mh(up, kernel2, 0.0, 100000, 2718);
  REQUIRE(plain.trace.states == shifted.trace.states);

  const Shifted down{&mix, -345.5};
  const auto shifted_down = run_mh(down, kernel, 0.0, 100000, 2718);
  REQUIRE(plain.trace.states == shifted_down.trace.states);
}

TEST_CASE("runs are deterministic in (config, seed) and change with the seed") {
  const auto mix = GaussianMixture::four_mode_benchmark();
  const MetropolisKernel<UniformWalkProposal> kernel{UniformWalkProposal(1.0)};
  const auto a = run_mh(mix, kernel, 0.0, 20000, 55);
  const auto b = run_mh(mix, kernel, 0.0, 20000, 55);
  const auto c = run_mh(mix, kernel, 0.0, 20000, 56);
  REQUIRE(a.trace.states == b.trace.states);
  REQUIRE(a.trace.states != c.trace.states);
}

TEST_CASE("cached log density matches a recomputation along the trace") {
  const auto mix = GaussianMixture::four_mode_benchmark();
  const MetropolisKernel<UniformWalkProposal> kernel{UniformWalkProposal(1.0)};
  RngStream rng(31, 1);
  ChainState<double> chain = make_chain_state(mix, 0.25);
  for (int i = 0; i < 5000; ++i) {
    mh_step(mix, kernel.proposal, chain, rng);
    REQUIRE(chain.log_density == Approx(mix.log_density(chain.value)).epsilon(1e-15));
  }
}
