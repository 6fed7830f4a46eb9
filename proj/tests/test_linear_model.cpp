#include <catch2/catch.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

#include "mcselect/diagnostics.hpp"
#include "mcselect/samplers.hpp"
#include "mcselect/targets/linear_model.hpp"
#include "oracles.hpp"

using namespace mcselect;

namespace {

// Independent evaluation of the marginal posterior through a pivoted
// Gaussian-elimination solve instead of the Cholesky route.
double reference_log_posterior(const RegressionData& data, const GammaVector& gamma) {
  std::vector<std::size_t> sel;
  for (std::size_t j = 0; j < gamma.size(); ++j)
    if (gamma[j]) sel.push_back(j);
  double yty = 0.0;
  for (double v : data.y) yty += v * v;
  const double n = static_cast<double>(data.n());
  if (sel.empty()) return -(n / 2.0) * std::log(yty);

  oracle::Mat a(sel.size());
  std::vector<double> g(sel.size(), 0.0);
  for (std::size_t r = 0; r < sel.size(); ++r) {
    for (std::size_t c = 0; c < sel.size(); ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < data.n(); ++i) s += data.x(i, sel[r]) * data.x(i, sel[c]);
      a(r, c) = s;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) s += data.x(i, sel[r]) * data.y[i];
    g[r] = s;
  }
  const auto sol = oracle::solve_dense(a, g);
  double quad = 0.0;
  for (std::size_t r = 0; r < sel.size(); ++r) quad += g[r] * sol[r];
  return -(static_cast<double>(sel.size()) / 2.0) * std::log(1.0 + n) -
         (n / 2.0) * std::log(yty - n / (n + 1.0) * quad);
}

}  // namespace

TEST_CASE("hand-computed single-covariate posterior") {
  Matrix x(5, 1);
  for (std::size_t i = 0; i < 5; ++i) x(i, 0) = 1.0;
  const RegressionData data({1, 2, 3, 4, 5}, std::move(x));
  // Y'Y = 55, X'X = 5, X'Y = 15, projection = 45:
  // -(1/2) log 6 - (5/2) log(55 - (5/6) 45) = -(1/2) log 6 - (5/2) log 17.5
  const double expected = -0.5 * std::log(6.0) - 2.5 * std::log(17.5);
  REQUIRE(log_marginal_posterior(data, {1}) == Approx(expected).epsilon(1e-12));
}

TEST_CASE("empty model value") {
  Matrix x(2, 1);
  x(0, 0) = 1.0;
  x(1, 0) = -1.0;
  const RegressionData data({2.0, 0.0}, std::move(x));  // Y'Y = 4, n = 2
  REQUIRE(log_marginal_posterior(data, {0}) == Approx(-std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("numerically singular submatrices get zero mass and are counted") {
  Matrix x(6, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    x(i, 0) = static_cast<double>(i) + 1.0;
    x(i, 1) = 2.0 * (static_cast<double>(i) + 1.0);  // exact duplicate direction
  }
  const RegressionData data({1, 0, 1, 0, 1, 0}, std::move(x));
  const ModelSelectionPosterior posterior(data);
  REQUIRE(posterior.log_density({1, 1}) == kNegInf);
  REQUIRE(posterior.singular_rejections() == 1);
  REQUIRE(std::isfinite(posterior.log_density({1, 0})));
  REQUIRE(std::isfinite(posterior.log_density({0, 1})));
}

TEST_CASE("posterior is invariant under permutation of the selected columns") {
  const auto gen = generate_selection_dataset(false, 99, 6, 40);
  const ModelSelectionPosterior posterior(gen.data);
  const GammaVector gamma{1, 0, 1, 1, 0, 1};
  const double base = posterior.log_density(gamma);

  // Shuffle the selected columns in the design; the projection is basis
  // independent so the value must not move.
  Matrix shuffled = gen.data.x;
  const std::vector<std::size_t> sel{0, 2, 3, 5};
  const std::vector<std::size_t> perm{3, 5, 0, 2};
  for (std::size_t i = 0; i < gen.data.n(); ++i)
    for (std::size_t k = 0; k < sel.size(); ++k) shuffled(i, sel[k]) = gen.data.x(i, perm[k]);
  const RegressionData permuted(gen.data.y, std::move(shuffled));
  REQUIRE(log_marginal_posterior(permuted, gamma) == Approx(base).margin(1e-10));
}

TEST_CASE("cholesky evaluation agrees with a pivoted direct solve") {
  const auto gen = generate_selection_dataset(false, 1234, 10, 60);
  const ModelSelectionPosterior posterior(gen.data);
  oracle::SimpleRng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    GammaVector gamma(10);
    for (auto& b : gamma) b = rng.uniform01() < 0.5;
    const double mine = posterior.log_density(gamma);
    const double ref = reference_log_posterior(gen.data, gamma);
    REQUIRE(mine == Approx(ref).epsilon(1e-8));
  }
}

TEST_CASE("generated datasets carry the documented coefficients and noise") {
  const auto gen = generate_selection_dataset(false, 31415);
  REQUIRE(gen.true_beta.size() == 15);
  REQUIRE(gen.true_beta[4] == Approx(2.0 * 5 / 15.0));   // 0.6667
  REQUIRE(gen.true_beta[5] == Approx(0.8));
  REQUIRE(gen.true_beta[14] == Approx(2.0));
  REQUIRE(gen.true_gamma == GammaVector(15, 1));
  REQUIRE(gen.data.n() == 180);
  REQUIRE(gen.data.p() == 15);
}

TEST_CASE("collinear design has pairwise column correlation near 4/5") {
  const auto gen = generate_selection_dataset(true, 2718);
  const auto& x = gen.data.x;
  double mean_corr = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < 15; ++a)
    for (std::size_t b = a + 1; b < 15; ++b) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) {
        ma += x(i, a);
        mb += x(i, b);
      }
      ma /= static_cast<double>(x.rows);
      mb /= static_cast<double>(x.rows);
      double sab = 0.0, saa = 0.0, sbb = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) {
        sab += (x(i, a) - ma) * (x(i, b) - mb);
        saa += (x(i, a) - ma) * (x(i, a) - ma);
        sbb += (x(i, b) - mb) * (x(i, b) - mb);
      }
      mean_corr += sab / std::sqrt(saa * sbb);
      ++pairs;
    }
  mean_corr /= pairs;
  REQUIRE(std::abs(mean_corr - 0.8) < 0.1);
}

TEST_CASE("exact enumeration normalizes and handles p = 1") {
  Matrix x(5, 1);
  for (std::size_t i = 0; i < 5; ++i) x(i, 0) = static_cast<double>(i) - 2.0;
  const RegressionData data({0.5, 0.1, -0.2, 0.3, 0.9}, std::move(x));
  const auto exact = enumerate_exact_posterior(data);
  REQUIRE(exact.probability.size() == 2);
  const double ratio = std::exp(exact.log_posterior[1] - exact.log_posterior[0]);
  REQUIRE(exact.probability[1] / exact.probability[0] == Approx(ratio).epsilon(1e-10));
  double total = 0.0;
  for (double p : exact.probability) total += p;
  REQUIRE(total == Approx(1.0).margin(1e-12));
  REQUIRE(exact.inclusion[0] == Approx(exact.probability[1]).margin(1e-12));
}

TEST_CASE("the generating model ranks near the top of the exact posterior") {
  const auto gen = generate_selection_dataset(false, 777, 8, 180);
  const auto exact = enumerate_exact_posterior(gen.data);
  const std::size_t full_model = (1u << 8) - 1;  // the data use every covariate
  std::size_t rank = 0;
  for (double p : exact.probability) rank += p > exact.probability[full_model];
  REQUIRE(rank < 26);  // top 10% of the 256 models
  // The strongest coefficients are virtually certain to be included.
  REQUIRE(exact.inclusion[7] > 0.95);
  REQUIRE(exact.inclusion[6] > 0.9);
}

TEST_CASE("enumeration guard rejects large p") {
  const auto gen = generate_selection_dataset(false, 5, 12, 40);
  REQUIRE_THROWS_AS(enumerate_exact_posterior(gen.data, 10), std::invalid_argument);
}

TEST_CASE("single flip proposal is a symmetric involution") {
  SingleFlipProposal flip;
  RngStream rng(8, 1);

  // With one coordinate the only proposal flips the single bit.
  GammaVector one{0};
  for (int i = 0; i < 5; ++i) {
    const auto draw = flip.propose(one, rng);
    REQUIRE(draw.value == GammaVector{static_cast<std::uint8_t>(one[0] ^ 1u)});
    one = draw.value;
  }

  GammaVector gamma{0, 1, 0};
  for (int i = 0; i < 200; ++i) {
    const auto draw = flip.propose(gamma, rng);
    std::size_t diff = 0;
    for (std::size_t j = 0; j < 3; ++j) diff += draw.value[j] != gamma[j];
    REQUIRE(diff == 1);
    REQUIRE(flip.log_density(gamma, draw.value) ==
            Approx(flip.log_density(draw.value, gamma)).margin(1e-15));
    gamma = draw.value;
  }
}

TEST_CASE("sweep kernel proposes every coordinate once per sweep") {
  struct UniformModelTarget {
    double log_density(const GammaVector&) const { return 0.0; }
  };
  UniformModelTarget target;
  GammaSweepKernel kernel;
  RngStream rng(90, 1);
  KernelStats stats;
  ChainState<GammaVector> chain{{0, 0, 0}, 0.0};

  const int sweeps = 100000;
  std::vector<int> flips(3, 0);
  for (int s = 0; s < sweeps; ++s) {
    GammaVector before = chain.value;
    kernel.step(target, chain, rng, stats, 1.0);
    // On a flat target every proposal is accepted, so each coordinate flips
    // exactly once per sweep and the per-coordinate counts are exactly equal.
    for (std::size_t j = 0; j < 3; ++j) flips[j] += chain.value[j] != before[j];
  }
  REQUIRE(stats.proposed == sweeps * 3);
  REQUIRE(stats.accepted == sweeps * 3);
  for (int f : flips) REQUIRE(f == sweeps);
}

TEST_CASE("sweep scan order is uniform over coordinates") {
  // Target forbidding (1,1): from (0,0) the coordinate visited first keeps
  // its flip, the second is rejected, so the sweep's end state reveals the
  // scan order. Both outcomes must be equally frequent.
  struct NandTarget {
    double log_density(const GammaVector& g) const {
      return g[0] && g[1] ? kNegInf : 0.0;
    }
  };
  NandTarget target;
  GammaSweepKernel kernel;
  RngStream rng(91, 1);
  const int sweeps = 100000;
  int first_is_zero = 0;
  for (int s = 0; s < sweeps; ++s) {
    ChainState<GammaVector> chain{{0, 0}, 0.0};
    KernelStats stats;
    kernel.step(target, chain, rng, stats, 1.0);
    REQUIRE(chain.value[0] + chain.value[1] == 1);
    first_is_zero += chain.value[0] == 1;
  }
  const double se = std::sqrt(0.25 * sweeps);
  REQUIRE(std::abs(first_is_zero - sweeps / 2.0) < 3.0 * se);
}

TEST_CASE("p = 8 sampler inclusion probabilities match exhaustive enumeration") {
  const auto gen = generate_selection_dataset(false, 777, 8, 120);
  const ModelSelectionPosterior posterior(gen.data);
  const auto exact = enumerate_exact_posterior(gen.data);

  const GammaSweepKernel kernel;
  const auto result = run_mh(posterior, kernel, GammaVector(8, 0), 20000, 31337);
  const auto est = inclusion_probabilities(result.trace);

  for (std::size_t j = 0; j < 8; ++j) {
    std::vector<double> coord(result.trace.size());
    for (std::size_t i = 0; i < result.trace.size(); ++i)
      coord[i] = result.trace.states[i][j];
    const double se = mcse(coord);
    const double err = std::abs(est[j] - exact.inclusion[j]);
    REQUIRE(err <= 4.0 * se + 1e-4);
  }
}

TEST_CASE("regression csv round trips") {
  const auto gen = generate_selection_dataset(false, 11, 4, 12);
  const std::string path = "linreg_roundtrip.csv";
  write_regression_csv(path, gen.data);
  const auto back = read_regression_csv(path);
  REQUIRE(back.n() == gen.data.n());
  REQUIRE(back.p() == gen.data.p());
  REQUIRE(back.y == gen.data.y);
  REQUIRE(back.x.data == gen.data.x.data);
  std::remove(path.c_str());
}
