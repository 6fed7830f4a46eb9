#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "mcselect/survival/data.hpp"
#include "mcselect/survival/tree.hpp"
#include "mcselect/survival/weibull.hpp"
#include "oracles.hpp"

using namespace mcselect;

namespace {

SurvivalDataset make_ds(std::vector<double> times, std::vector<std::uint8_t> events,
                        std::vector<std::vector<double>> columns = {}) {
  SurvivalDataset ds;
  ds.time = std::move(times);
  ds.event = std::move(events);
  ds.columns = std::move(columns);
  for (std::size_t j = 0; j < ds.columns.size(); ++j) {
    CovariateSchema s;
    s.name = "x" + std::to_string(j + 1);
    s.kind = CovariateKind::continuous;
    ds.schema.push_back(std::move(s));
  }
  ds.finalize();
  return ds;
}

std::vector<std::int32_t> all_members(const SurvivalDataset& ds) {
  std::vector<std::int32_t> m(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) m[i] = static_cast<std::int32_t>(i);
  return m;
}

// Independent 2-D integral of the joint leaf factor with the Jeffreys prior,
//   alpha^(d-1) beta^(d-1) exp((alpha-1) L) exp(-beta S(alpha)),
// integrated over (alpha, beta) in log coordinates with Jacobians.
double log_leaf_integral_2d(const SurvivalDataset& ds, const std::vector<std::int32_t>& members) {
  double d = 0.0, big_l = 0.0;
  for (auto obs : members) {
    const auto i = static_cast<std::size_t>(obs);
    if (ds.event[i]) {
      d += 1.0;
      big_l += std::log(ds.time[i]);
    }
  }
  auto s_of_alpha = [&](double alpha) {
    double s = 0.0;
    for (auto obs : members) s += std::pow(ds.time[static_cast<std::size_t>(obs)], alpha);
    return s;
  };
  auto outer = [&](double eta) {
    const double alpha = std::exp(eta);
    const double s = s_of_alpha(alpha);
    const double phi_hat = std::log(d / s);
    auto inner = [&](double phi) {
      return d * eta + d * phi + (alpha - 1.0) * big_l - std::exp(phi) * s;
    };
    return oracle::log_integrate(inner, phi_hat - 30.0, phi_hat + 12.0, 1e-11);
  };
  return oracle::log_integrate(outer, -10.0, 10.0, 1e-11);
}

}  // namespace

TEST_CASE("leaf log integrand at eta = 0 for the (1, e) leaf") {
  const auto ds = make_ds({1.0, std::exp(1.0)}, {1, 1});
  const auto members = all_members(ds);
  // Jacobian-consistent value: log Gamma(2) + 0 + (1-1)L - 2 log(1 + e).
  const double consistent = -2.0 * std::log(1.0 + std::exp(1.0));
  REQUIRE(leaf_log_integrand(ds, members, 0.0) == Approx(consistent).epsilon(1e-12));
  // The constant-shifted variant (eta-1)d + e^eta L differs by exactly L - d
  // and reproduces the hand value -1 - 2 log(1+e) = -3.6267.
  const double d = 2.0, big_l = 1.0;
  const double shifted = leaf_log_integrand(ds, members, 0.0) - d + big_l;
  REQUIRE(shifted == Approx(-1.0 - 2.0 * std::log(1.0 + std::exp(1.0))).epsilon(1e-10));
  REQUIRE(shifted == Approx(-3.62652).margin(5e-6));
}

TEST_CASE("propriety of leaves") {
  SECTION("all observed times equal is rejected") {
    const auto ds = make_ds({1.0, 1.0, 1.0}, {1, 1, 1});
    REQUIRE_FALSE(leaf_proper(ds, all_members(ds)));
  }
  SECTION("fewer than two uncensored observations is rejected") {
    const auto ds = make_ds({1.0, 2.0, 3.0}, {1, 0, 0});
    REQUIRE_FALSE(leaf_proper(ds, all_members(ds)));
  }
  SECTION("equal uncensored times at the leaf maximum diverge and are rejected") {
    const auto ds = make_ds({1.0, 2.0, 2.0}, {0, 1, 1});
    REQUIRE_FALSE(leaf_proper(ds, all_members(ds)));
    REQUIRE_FALSE(leaf_laplace_evidence(ds, all_members(ds)).has_value());
  }
  SECTION("equal uncensored times below a censored maximum are fine") {
    const auto ds = make_ds({2.0, 2.0, 3.0}, {1, 1, 0});
    REQUIRE(leaf_proper(ds, all_members(ds)));
    REQUIRE(leaf_laplace_evidence(ds, all_members(ds)).has_value());
  }
  SECTION("generic two-point leaf is proper") {
    const auto ds = make_ds({1.0, std::exp(1.0)}, {1, 1});
    REQUIRE(leaf_proper(ds, all_members(ds)));
  }
}

TEST_CASE("mode finding on simulated exponential data") {
  oracle::SimpleRng rng(404);
  std::vector<double> times(200);
  for (auto& t : times) t = oracle::weibull_draw(rng, 1.0, 1.0);
  const auto ds = make_ds(std::move(times), std::vector<std::uint8_t>(200, 1));
  const auto ev = leaf_laplace_evidence(ds, all_members(ds));
  REQUIRE(ev.has_value());
  REQUIRE(std::abs(ev->eta_hat) < 0.15);  // true alpha = 1, so eta ~ 0
  REQUIRE(ev->l2_at_hat < 0.0);

  // Gradient vanishes at the mode: symmetric difference of l itself.
  const auto members = all_members(ds);
  const double h = 1e-4;
  const double grad = (leaf_log_integrand(ds, members, ev->eta_hat + h) -
                       leaf_log_integrand(ds, members, ev->eta_hat - h)) /
                      (2.0 * h);
  REQUIRE(std::abs(grad) < 1e-6);
}

TEST_CASE("analytic curvature matches finite differences of the integrand") {
  oracle::SimpleRng rng(505);
  std::vector<double> times(40);
  std::vector<std::uint8_t> events(40, 1);
  for (std::size_t i = 0; i < 40; ++i) {
    times[i] = oracle::weibull_draw(rng, 1.4, 0.6);
    if (i % 5 == 0) events[i] = 0;
  }
  const auto ds = make_ds(std::move(times), std::move(events));
  const auto members = all_members(ds);
  const double etas[] = {-1.3, -0.4, 0.0, 0.7, 1.5};
  for (double eta : etas) {
    const double h = 1e-4;  // larger step: second differences cancel badly below this
    const double fd2 = (leaf_log_integrand(ds, members, eta + h) -
                        2.0 * leaf_log_integrand(ds, members, eta) +
                        leaf_log_integrand(ds, members, eta - h)) /
                       (h * h);
    const double analytic = leaf_log_integrand_d2(ds, members, eta);
    REQUIRE(fd2 == Approx(analytic).epsilon(1e-4));
    const double fd1 = (leaf_log_integrand(ds, members, eta + h) -
                        leaf_log_integrand(ds, members, eta - h)) /
                       (2.0 * h);
    REQUIRE(fd1 == Approx(leaf_log_integrand_d1(ds, members, eta)).margin(1e-5));
  }
}

TEST_CASE("single-leaf tree marginal instantiates the per-leaf formula") {
  oracle::SimpleRng rng(606);
  std::vector<double> times(30);
  for (auto& t : times) t = oracle::weibull_draw(rng, 0.9, 1.2);
  const auto ds = make_ds(std::move(times), std::vector<std::uint8_t>(30, 1));
  const auto state = TreedState::root_state(ds);
  const auto ev = leaf_laplace_evidence(ds, all_members(ds));
  REQUIRE(ev.has_value());
  const double expected = 0.5 * std::log(2.0 * 3.14159265358979323846) + ev->l_at_hat -
                          0.5 * std::log(-ev->l2_at_hat);
  REQUIRE(tree_log_marginal(ds, state) == Approx(expected).epsilon(1e-12));
}

TEST_CASE("Laplace evidence matches 1-D quadrature of the integrand") {
  oracle::SimpleRng rng(707);
  std::vector<double> times(50);
  std::vector<std::uint8_t> events(50, 1);
  for (std::size_t i = 0; i < 50; ++i) {
    times[i] = oracle::weibull_draw(rng, 1.7, 0.4);
    if (i % 7 == 0) events[i] = 0;
  }
  const auto ds = make_ds(std::move(times), std::move(events));
  const auto members = all_members(ds);
  const auto ev = leaf_laplace_evidence(ds, members);
  REQUIRE(ev.has_value());
  const double quad = oracle::log_integrate(
      [&](double eta) { return leaf_log_integrand(ds, members, eta); }, -10.0, 10.0, 1e-11);
  REQUIRE(std::abs(ev->log_evidence - quad) < 0.05);
}

TEST_CASE("integrand integrates to the 2-D mass of the joint leaf factor") {
  const auto ds = make_ds({1.0, std::exp(1.0), 2.5, 0.7, 1.8}, {1, 1, 1, 0, 1});
  const auto members = all_members(ds);
  const double one_d = oracle::log_integrate(
      [&](double eta) { return leaf_log_integrand(ds, members, eta); }, -10.0, 10.0, 1e-11);
  const double two_d = log_leaf_integral_2d(ds, members);
  // 1% relative agreement of the integrals.
  REQUIRE(std::abs(std::exp(one_d - two_d) - 1.0) < 0.01);

  // The constant-shifted integrand variant misses the 2-D mass by exactly
  // exp(L - d): the adjudication that fixed the consistent form above.
  double d = 0.0, big_l = 0.0;
  for (auto obs : members) {
    if (ds.event[static_cast<std::size_t>(obs)]) {
      d += 1.0;
      big_l += std::log(ds.time[static_cast<std::size_t>(obs)]);
    }
  }
  const double shifted_integral = one_d + (big_l - d);
  REQUIRE(std::abs(shifted_integral - two_d) == Approx(std::abs(big_l - d)).margin(0.01));
  REQUIRE(std::abs(big_l - d) > 0.5);  // the offset is material for this leaf
}

TEST_CASE("splitting exchangeable data usually lowers the marginal") {
  // Pure noise: exchangeable Weibull times, one irrelevant covariate. The
  // extra leaf's complexity penalty should win in nearly every replicate.
  int decreased = 0;
  const int replicates = 100;
  for (int rep = 0; rep < replicates; ++rep) {
    oracle::SimpleRng rng(9000 + static_cast<std::uint64_t>(rep));
    const std::size_t n = 600;  // the complexity penalty scales with leaf size
    std::vector<double> times(n);
    std::vector<double> covariate(n);
    for (std::size_t i = 0; i < n; ++i) {
      times[i] = oracle::weibull_draw(rng, 1.2, 0.8);
      covariate[i] = rng.uniform01();
    }
    const auto ds = make_ds(times, std::vector<std::uint8_t>(n, 1), {covariate});

    const auto root = TreedState::root_state(ds);
    TreedState split;
    split.tree.nodes.resize(3);
    split.tree.nodes[0].left = 1;
    split.tree.nodes[0].right = 2;
    split.tree.nodes[0].rule = SplitRule{0, false, 0.5, 0};
    split.tree.nodes[1].parent = 0;
    split.tree.nodes[2].parent = 0;
    split.leaf_members = TreedState::route_all(ds, split.tree);

    const double lm_root = tree_log_marginal(ds, root);
    const double lm_split = tree_log_marginal(ds, split);
    if (lm_split < lm_root) ++decreased;
  }
  REQUIRE(decreased >= 95);
}
