#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mcselect/mcmc.hpp"
#include "mcselect/rng.hpp"

namespace mcselect {

using GammaVector = std::vector<std::uint8_t>;

// Dense row-major matrix, just large enough for the regression designs here.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct RegressionData {
  std::vector<double> y;
  Matrix x;

  RegressionData(std::vector<double> response, Matrix design)
      : y(std::move(response)), x(std::move(design)) {
    if (x.rows != y.size()) throw std::invalid_argument("response/design row mismatch");
    if (!(x.rows > x.cols) || x.cols < 1)
      throw std::invalid_argument("need n > p >= 1 observations");
    for (double v : x.data)
      if (!std::isfinite(v)) throw std::invalid_argument("design matrix has non-finite entries");
    for (double v : y)
      if (!std::isfinite(v)) throw std::invalid_argument("response has non-finite entries");
  }

  std::size_t n() const { return x.rows; }
  std::size_t p() const { return x.cols; }
};

namespace detail {

// In-place lower Cholesky of a symmetric positive definite matrix stored
// row-major. Returns false when a pivot falls below rel_tol times the largest
// diagonal entry, the cue that the submatrix is numerically singular.
inline bool cholesky_in_place(std::vector<double>& a, std::size_t n, double rel_tol) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a[i * n + i]);
  const double tol = rel_tol * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > tol)) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  return true;
}

}  // namespace detail

// Marginal posterior of the inclusion vector gamma under the g-prior form
//   P(gamma | Y, X) propto (1+n)^(-S/2) (Y'Y - n/(n+1) Y'Xg (Xg'Xg)^-1 Xg'Y)^(-n/2),
// S = number of included covariates, prior over models uniform. Evaluation
// goes through the Cholesky factor of Xg'Xg; a pivot below 1e-10 of the
// largest diagonal marks the model numerically singular and it gets zero
// mass rather than aborting the run.
class ModelSelectionPosterior {
 public:
  explicit ModelSelectionPosterior(const RegressionData& data)
      : n_(data.n()), p_(data.p()), gram_(p_ * p_, 0.0), xty_(p_, 0.0), yty_(0.0) {
    for (double v : data.y) yty_ += v * v;
    for (std::size_t a = 0; a < p_; ++a) {
      for (std::size_t b = a; b < p_; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += data.x(i, a) * data.x(i, b);
        gram_[a * p_ + b] = s;
        gram_[b * p_ + a] = s;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) s += data.x(i, a) * data.y[i];
      xty_[a] = s;
    }
  }

  double log_density(const GammaVector& gamma) const {
    if (gamma.size() != p_) throw std::invalid_argument("gamma length does not match p");
    thread_local std::vector<std::size_t> sel;
    sel.clear();
    for (std::size_t j = 0; j < p_; ++j) {
      if (gamma[j] > 1) throw std::invalid_argument("gamma entries must be 0 or 1");
      if (gamma[j]) sel.push_back(j);
    }
    const auto s = sel.size();
    const double nd = static_cast<double>(n_);
    if (s == 0) return -(nd / 2.0) * std::log(yty_);

    thread_local std::vector<double> sub;
    thread_local std::vector<double> rhs;
    sub.assign(s * s, 0.0);
    rhs.assign(s, 0.0);
    for (std::size_t a = 0; a < s; ++a) {
      for (std::size_t b = 0; b < s; ++b) sub[a * s + b] = gram_[sel[a] * p_ + sel[b]];
      rhs[a] = xty_[sel[a]];
    }
    if (!detail::cholesky_in_place(sub, s, kSingularTol)) {
      singular_rejections_.fetch_add(1, std::memory_order_relaxed);
      return kNegInf;
    }
    // Forward solve L z = Xg'Y; the projection quadratic form is |z|^2.
    double quad = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      double v = rhs[i];
      for (std::size_t k = 0; k < i; ++k) v -= sub[i * s + k] * rhs[k];
      rhs[i] = v / sub[i * s + i];
      quad += rhs[i] * rhs[i];
    }
    // Projection norm bound: 0 <= Y'Xg (Xg'Xg)^-1 Xg'Y <= Y'Y.
    if (!(quad >= -1e-9 * yty_) || !(quad <= yty_ * (1.0 + 1e-9)))
      throw std::logic_error("projection quadratic form escaped [0, Y'Y]");
    const double residual = yty_ - (nd / (nd + 1.0)) * quad;
    return -(static_cast<double>(s) / 2.0) * std::log(1.0 + nd) -
           (nd / 2.0) * std::log(residual);
  }

  std::int64_t singular_rejections() const {
    return singular_rejections_.load(std::memory_order_relaxed);
  }

  std::size_t p() const { return p_; }
  std::size_t n() const { return n_; }

 private:
  static constexpr double kSingularTol = 1e-10;
  std::size_t n_;
  std::size_t p_;
  std::vector<double> gram_;
  std::vector<double> xty_;
  double yty_;
  mutable std::atomic<std::int64_t> singular_rejections_{0};
};

inline double log_marginal_posterior(const RegressionData& data, const GammaVector& gamma) {
  return ModelSelectionPosterior(data).log_density(gamma);
}

// Flips one uniformly chosen coordinate; an involution, hence symmetric.
struct SingleFlipProposal {
  ProposalDraw<GammaVector> propose(const GammaVector& current, RngStream& rng) const {
    GammaVector next = current;
    const auto j = static_cast<std::size_t>(rng.next_below(current.size()));
    next[j] ^= 1u;
    return {std::move(next), 0.0};
  }

  bool is_symmetric() const { return true; }

  double log_density(const GammaVector& from, const GammaVector& to) const {
    std::size_t diff = 0;
    for (std::size_t j = 0; j < from.size(); ++j) diff += from[j] != to[j];
    return diff == 1 ? -std::log(static_cast<double>(from.size())) : kNegInf;
  }
};

// Random-scan single-flip sweep: every coordinate is visited once per sweep
// in a fresh uniform order, each visit one Metropolis accept/reject of the
// flipped vector. One kernel step = one full sweep of p sub-steps.
struct GammaSweepKernel {
  template <class T>
  void step(const T& target, ChainState<GammaVector>& chain, RngStream& rng, KernelStats& stats,
            double inv_temperature) const {
    const std::size_t p = chain.value.size();
    thread_local std::vector<std::size_t> order;
    order.resize(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = p; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_below(i))]);

    for (std::size_t idx = 0; idx < p; ++idx) {
      const std::size_t j = order[idx];
      chain.value[j] ^= 1u;
      const double candidate_log_density = target.log_density(chain.value);
      const double log_ratio = inv_temperature * (candidate_log_density - chain.log_density);
      const double u = rng.next_double();
      ++stats.proposed;
      if (std::log(u) < std::min(0.0, log_ratio)) {
        chain.log_density = candidate_log_density;
        ++stats.accepted;
      } else {
        chain.value[j] ^= 1u;  // undo the flip
      }
    }
  }
};

struct GeneratedDataset {
  RegressionData data;
  GammaVector true_gamma;
  std::vector<double> true_beta;
};

// Synthetic selection benchmark: n = 180, beta_j = 2j/15 for j = 1..p,
// noise N(0, 6.25). The collinear variant builds X_j = Z_j + 2 Z_16 from
// iid standard normal columns Z, giving pairwise column correlation 4/5.
inline GeneratedDataset generate_selection_dataset(bool collinear, std::uint64_t seed,
                                                   std::size_t p = 15, std::size_t n = 180,
                                                   double noise_sd = 2.5) {
  if (p < 1 || n <= p) throw std::invalid_argument("need n > p >= 1");
  RngStream rng(seed, 0);
  Matrix x(n, p);
  if (!collinear) {
    for (auto& v : x.data) v = rng.normal();
  } else {
    Matrix z(n, p + 1);
    for (auto& v : z.data) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) x(i, j) = z(i, j) + 2.0 * z(i, p);
  }
  std::vector<double> beta(p);
  for (std::size_t j = 0; j < p; ++j) beta[j] = 2.0 * static_cast<double>(j + 1) / 15.0;
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < p; ++j) mean += x(i, j) * beta[j];
    y[i] = mean + noise_sd * rng.normal();
  }
  return {RegressionData(std::move(y), std::move(x)), GammaVector(p, 1), std::move(beta)};
}

struct ExactPosterior {
  std::vector<double> log_posterior;  // indexed by the gamma bitmask
  std::vector<double> probability;
  std::vector<double> inclusion;
};

// Exhaustive enumeration of all 2^p models, normalized by log-sum-exp.
// Verification oracle; guarded to p <= 20.
inline ExactPosterior enumerate_exact_posterior(const RegressionData& data,
                                                std::size_t p_max = 20) {
  const std::size_t p = data.p();
  if (p > p_max || p > 20)
    throw std::invalid_argument("exact enumeration is limited to p <= 20 covariates");
  const ModelSelectionPosterior posterior(data);
  const std::size_t n_models = std::size_t{1} << p;
  ExactPosterior out;
  out.log_posterior.resize(n_models);
  GammaVector gamma(p, 0);
  double max_lp = kNegInf;
  for (std::size_t mask = 0; mask < n_models; ++mask) {
    for (std::size_t j = 0; j < p; ++j) gamma[j] = (mask >> j) & 1u;
    out.log_posterior[mask] = posterior.log_density(gamma);
    max_lp = std::max(max_lp, out.log_posterior[mask]);
  }
  double total = 0.0;
  for (double lp : out.log_posterior) total += std::exp(lp - max_lp);
  const double log_norm = max_lp + std::log(total);
  out.probability.resize(n_models);
  out.inclusion.assign(p, 0.0);
  for (std::size_t mask = 0; mask < n_models; ++mask) {
    out.probability[mask] = std::exp(out.log_posterior[mask] - log_norm);
    for (std::size_t j = 0; j < p; ++j)
      if ((mask >> j) & 1u) out.inclusion[j] += out.probability[mask];
  }
  return out;
}

// CSV with header, response in the first column.
inline void write_regression_csv(const std::string& path, const RegressionData& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "y";
  for (std::size_t j = 1; j <= data.p(); ++j) out << ",x" << j;
  out << "\n";
  char buf[40];
  for (std::size_t i = 0; i < data.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", data.y[i]);
    out << buf;
    for (std::size_t j = 0; j < data.p(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.x(i, j));
      out << "," << buf;
    }
    out << "\n";
  }
}

inline RegressionData read_regression_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty regression file " + path);
  std::size_t p = 0;
  for (char c : line) p += c == ',';
  if (p < 1) throw std::runtime_error("regression file needs a response and covariates");
  std::vector<double> y;
  std::vector<double> cells;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      const double v = std::stod(field);
      if (col == 0)
        y.push_back(v);
      else
        cells.push_back(v);
      ++col;
    }
    if (col != p + 1) throw std::runtime_error("row " + std::to_string(rows + 2) +
                                               " has wrong field count in " + path);
    ++rows;
  }
  Matrix x(rows, p);
  x.data = std::move(cells);
  return RegressionData(std::move(y), std::move(x));
}

}  // namespace mcselect
