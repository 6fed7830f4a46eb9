#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcselect/mcmc.hpp"
#include "mcselect/rng.hpp"
#include "mcselect/trace.hpp"

namespace mcselect {

// Temperature levels 1 = T_1 <= T_2 <= ... <= T_M < inf.
struct TemperatureLadder {
  std::vector<double> temperatures;

  explicit TemperatureLadder(std::vector<double> temps) : temperatures(std::move(temps)) {
    if (temperatures.empty()) throw std::invalid_argument("temperature ladder is empty");
    if (temperatures.front() != 1.0)
      throw std::invalid_argument("temperature ladder must start at exactly 1");
    for (std::size_t m = 0; m < temperatures.size(); ++m) {
      if (!std::isfinite(temperatures[m]))
        throw std::invalid_argument("temperature ladder contains a non-finite level");
      if (m > 0 && temperatures[m] < temperatures[m - 1])
        throw std::invalid_argument("temperature ladder must be nondecreasing");
    }
  }

  static TemperatureLadder equally_spaced(double hi, int m) {
    if (m < 1) throw std::invalid_argument("ladder needs at least one level");
    if (hi < 1.0) throw std::invalid_argument("top temperature must be >= 1");
    std::vector<double> temps(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
      temps[static_cast<std::size_t>(i)] = m == 1 ? 1.0 : 1.0 + (hi - 1.0) * i / (m - 1);
    temps.front() = 1.0;
    return TemperatureLadder(std::move(temps));
  }

  static TemperatureLadder flat(int m) {
    return TemperatureLadder(std::vector<double>(static_cast<std::size_t>(m), 1.0));
  }

  int size() const { return static_cast<int>(temperatures.size()); }
};

// How update and swap steps interleave in parallel tempering. In
// "deterministic" mode (Geyer) the two strictly alternate, starting with an
// update. In "independent" mode (Liu) each iteration is a swap with fixed
// probability s in (0,1).
enum class PtSwapMode { deterministic, independent };

struct PtSwapConfig {
  PtSwapMode mode = PtSwapMode::independent;
  double rate = 0.5;  // only used in independent mode

  void validate() const {
    if (mode == PtSwapMode::independent && !(rate > 0.0 && rate < 1.0))
      throw std::invalid_argument("pt swap rate must lie in (0,1)");
  }
};

// Log of the tempered swap acceptance ratio between chains j and k:
//   log f_j(theta_k) + log f_k(theta_j) - log f_j(theta_j) - log f_k(theta_k)
// = (1/T_j - 1/T_k) (log f(theta_k) - log f(theta_j)).
// Normalizing constants of the heated densities cancel.
inline double pt_swap_log_ratio(double log_f_j, double log_f_k, double temp_j, double temp_k) {
  return (1.0 / temp_j - 1.0 / temp_k) * (log_f_k - log_f_j);
}

struct RunOptions {
  bool keep_all_chains = false;
  // Skip accumulating the returned trace (observers still run); for state
  // types too heavy to store per iteration.
  bool collect_trace = true;
  // Re-derives the multiset of chain values around every swap and aborts on
  // mismatch. Only meaningful for plain value swaps.
  bool check_swap_invariant = false;
  // Invoked roughly every 1% of iterations with (iteration, cold chain log
  // density, swap acceptance rate so far).
  std::function<void(std::int64_t, double, double)> progress;
};

// Per-iteration hook receiving the whole ensemble after the iteration.
struct NullObserver {
  template <class S>
  void operator()(std::int64_t, const std::vector<ChainState<S>>&) const {}
};

struct EnsembleStats {
  std::vector<KernelStats> chain;  // one entry per chain, MH proposals only
  std::int64_t swap_attempts = 0;
  std::int64_t swap_accepts = 0;

  double swap_rate() const {
    return swap_attempts > 0
               ? static_cast<double>(swap_accepts) / static_cast<double>(swap_attempts)
               : 0.0;
  }
};

template <class S>
struct RunResult {
  Trace<S> trace;                        // single chain / cold chain / chain 1
  std::vector<Trace<S>> all_traces;      // populated when keep_all_chains is set
  std::vector<ChainState<S>> final_ensemble;
  EnsembleStats stats;
};

namespace detail {

template <class S>
void emit_progress(const RunOptions& options, std::int64_t iter, std::int64_t n_iter,
                   const ChainState<S>& cold, const EnsembleStats& stats) {
  if (!options.progress) return;
  const std::int64_t stride = std::max<std::int64_t>(1, n_iter / 100);
  if (iter % stride == 0 || iter == n_iter)
    options.progress(iter, cold.log_density, stats.swap_rate());
}

// Evaluation errors thrown mid-run carry the iteration they surfaced at.
template <class F>
void guarded_iteration(std::int64_t iter, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    throw std::runtime_error("iteration " + std::to_string(iter) + ": " + e.what());
  }
}

}  // namespace detail

// Single-chain Metropolis-Hastings driver. The trace holds n_iter states,
// the first being the post-step state from init.
template <class S, class T, class K, class Observer = NullObserver>
  requires TargetDistribution<T, S> && TransitionKernel<K, T, S>
RunResult<S> run_mh(const T& target, const K& kernel, S init, std::int64_t n_iter,
                    std::uint64_t seed, const RunOptions& options = {},
                    Observer&& observer = {}) {
  if (n_iter < 1) throw std::invalid_argument("n_iter must be >= 1");
  RunResult<S> result;
  result.stats.chain.resize(1);
  std::vector<ChainState<S>> chains;
  chains.push_back(make_chain_state(target, std::move(init)));
  RngStream stream(seed, 1);
  if (options.collect_trace) result.trace.states.reserve(static_cast<std::size_t>(n_iter));
  result.trace.meta = "mh(seed=" + std::to_string(seed) + ",n=" + std::to_string(n_iter) + ")";
  for (std::int64_t i = 1; i <= n_iter; ++i) {
    detail::guarded_iteration(
        i, [&] { kernel.step(target, chains[0], stream, result.stats.chain[0], 1.0); });
    if (options.collect_trace) result.trace.states.push_back(chains[0].value);
    observer(i, chains);
    detail::emit_progress(options, i, n_iter, chains[0], result.stats);
  }
  result.final_ensemble = std::move(chains);
  return result;
}

// Parallel tempering over M chains with temperatures from the ladder.
// Update iterations advance every chain by one kernel step against its
// heated target; swap iterations draw an ordered pair (j,k), j != k,
// uniformly over the M(M-1) options and accept the value exchange via the
// tempered ratio. With M = 1 the sampler degenerates to plain MH and
// reproduces run_mh exactly, stream for stream.
template <class S, class T, class K, class Observer = NullObserver>
  requires TargetDistribution<T, S> && TransitionKernel<K, T, S>
RunResult<S> run_pt(const T& target, const TemperatureLadder& ladder, const K& kernel,
                    const PtSwapConfig& swap, std::vector<S> init, std::int64_t n_iter,
                    std::uint64_t seed, const RunOptions& options = {},
                    Observer&& observer = {}) {
  const int m_chains = ladder.size();
  if (static_cast<int>(init.size()) != m_chains)
    throw std::invalid_argument("need one initial state per chain");
  if (n_iter < 1) throw std::invalid_argument("n_iter must be >= 1");
  swap.validate();

  RunResult<S> result;
  result.stats.chain.resize(static_cast<std::size_t>(m_chains));
  result.trace.meta = "pt(seed=" + std::to_string(seed) + ",n=" + std::to_string(n_iter) +
                      ",chains=" + std::to_string(m_chains) + ")";

  std::vector<ChainState<S>> chains;
  chains.reserve(init.size());
  for (auto& s : init) chains.push_back(make_chain_state(target, std::move(s)));

  RngStream ensemble_stream(seed, 0);
  std::vector<RngStream> streams;
  streams.reserve(chains.size());
  for (int m = 1; m <= m_chains; ++m) streams.emplace_back(seed, static_cast<std::uint64_t>(m));

  if (options.collect_trace) result.trace.states.reserve(static_cast<std::size_t>(n_iter));
  if (options.keep_all_chains) result.all_traces.resize(chains.size());

  bool last_was_update = false;  // deterministic mode starts with an update
  for (std::int64_t i = 1; i <= n_iter; ++i) {
    bool swap_iter = false;
    if (m_chains > 1) {
      if (swap.mode == PtSwapMode::deterministic)
        swap_iter = last_was_update;
      else
        swap_iter = ensemble_stream.next_double() < swap.rate;
    }

    detail::guarded_iteration(i, [&] {
      if (!swap_iter) {
        for (int w = 0; w < m_chains; ++w)
          kernel.step(target, chains[static_cast<std::size_t>(w)],
                      streams[static_cast<std::size_t>(w)],
                      result.stats.chain[static_cast<std::size_t>(w)],
                      1.0 / ladder.temperatures[static_cast<std::size_t>(w)]);
      } else {
        const auto j = static_cast<std::size_t>(ensemble_stream.next_below(
            static_cast<std::uint64_t>(m_chains)));
        auto k = static_cast<std::size_t>(ensemble_stream.next_below(
            static_cast<std::uint64_t>(m_chains - 1)));
        if (k >= j) ++k;
        const double log_ratio =
            pt_swap_log_ratio(chains[j].log_density, chains[k].log_density,
                              ladder.temperatures[j], ladder.temperatures[k]);
        const double u = ensemble_stream.next_double();
        ++result.stats.swap_attempts;
        if (std::log(u) < std::min(0.0, log_ratio)) {
          std::swap(chains[j], chains[k]);
          ++result.stats.swap_accepts;
        }
      }
    });

    if (options.collect_trace) result.trace.states.push_back(chains[0].value);
    if (options.keep_all_chains)
      for (std::size_t w = 0; w < chains.size(); ++w)
        result.all_traces[w].states.push_back(chains[w].value);
    observer(i, chains);
    detail::emit_progress(options, i, n_iter, chains[0], result.stats);
    last_was_update = !swap_iter;
  }

  result.final_ensemble = std::move(chains);
  return result;
}

// Default swap operation for the hierarchical sampler: exchange the full
// chain states. Specialized swap policies (e.g. structured tree exchanges)
// provide the same call signature.
struct ValueSwap {
  static constexpr bool preserves_value_multiset = true;

  template <class T, class S>
  void operator()(const T&, ChainState<S>& a, ChainState<S>& b, RngStream&) const {
    std::swap(a, b);
  }
};

// One iteration of the hierarchical sampler, split out so the swap index can
// be driven directly in tests: exchange chain 1 with chain swap_index
// (unconditionally accepted), then advance every other auxiliary chain by one
// kernel step. Chain swap_index, now holding chain 1's previous value, is not
// updated this iteration.
template <class S, class T, class K, class Swap>
void phs_iterate(const T& target, const std::vector<K>& kernels,
                 std::vector<ChainState<S>>& chains, std::vector<RngStream>& streams,
                 std::vector<KernelStats>& stats, int swap_index, const Swap& swap_op,
                 RngStream& ensemble_stream) {
  const int m_chains = static_cast<int>(chains.size());
  swap_op(target, chains[0], chains[static_cast<std::size_t>(swap_index - 1)], ensemble_stream);
  for (int j = 2; j <= m_chains; ++j) {
    if (j == swap_index) continue;
    const auto idx = static_cast<std::size_t>(j - 1);
    kernels[idx].step(target, chains[idx], streams[idx], stats[idx], 1.0);
  }
}

// Hierarchical multiple-chains sampler: M untempered chains sharing one
// target. Each iteration draws m uniformly on {2,...,M}, swaps the values of
// chain 1 and chain m (always accepted), then MH-updates the remaining M-2
// chains. Chain 1 is the returned sample path; it moves only through swaps.
template <class S, class T, class K, class Swap = ValueSwap, class Observer = NullObserver>
  requires TargetDistribution<T, S> && TransitionKernel<K, T, S>
RunResult<S> run_phs(const T& target, const std::vector<K>& kernels, std::vector<S> init,
                     std::int64_t n_iter, std::uint64_t seed, const RunOptions& options = {},
                     const Swap& swap_op = Swap{}, Observer&& observer = {}) {
  const int m_chains = static_cast<int>(init.size());
  if (m_chains < 3)
    throw std::invalid_argument("hierarchical sampler needs at least 3 chains (M >= 3)");
  if (static_cast<int>(kernels.size()) != m_chains)
    throw std::invalid_argument("need one kernel per chain");
  if (n_iter < 1) throw std::invalid_argument("n_iter must be >= 1");

  RunResult<S> result;
  result.stats.chain.resize(static_cast<std::size_t>(m_chains));
  result.trace.meta = "phs(seed=" + std::to_string(seed) + ",n=" + std::to_string(n_iter) +
                      ",chains=" + std::to_string(m_chains) + ")";

  std::vector<ChainState<S>> chains;
  chains.reserve(init.size());
  for (auto& s : init) chains.push_back(make_chain_state(target, std::move(s)));

  RngStream ensemble_stream(seed, 0);
  std::vector<RngStream> streams;
  streams.reserve(chains.size());
  for (int m = 1; m <= m_chains; ++m) streams.emplace_back(seed, static_cast<std::uint64_t>(m));

  if (options.collect_trace) result.trace.states.reserve(static_cast<std::size_t>(n_iter));
  if (options.keep_all_chains) result.all_traces.resize(chains.size());

  for (std::int64_t i = 1; i <= n_iter; ++i) {
    const int m = 2 + static_cast<int>(ensemble_stream.next_below(
                          static_cast<std::uint64_t>(m_chains - 1)));

    detail::guarded_iteration(i, [&] {
      if constexpr (Swap::preserves_value_multiset) {
        if (options.check_swap_invariant) {
          const S before_1 = chains[0].value;
          const S before_m = chains[static_cast<std::size_t>(m - 1)].value;
          phs_iterate(target, kernels, chains, streams, result.stats.chain, m, swap_op,
                      ensemble_stream);
          if (!(chains[0].value == before_m &&
                chains[static_cast<std::size_t>(m - 1)].value == before_1))
            throw std::logic_error("swap failed to exchange chain values");
          return;
        }
      }
      phs_iterate(target, kernels, chains, streams, result.stats.chain, m, swap_op,
                  ensemble_stream);
    });
    ++result.stats.swap_attempts;
    ++result.stats.swap_accepts;

    if (options.collect_trace) result.trace.states.push_back(chains[0].value);
    if (options.keep_all_chains)
      for (std::size_t w = 0; w < chains.size(); ++w)
        result.all_traces[w].states.push_back(chains[w].value);
    observer(i, chains);
    detail::emit_progress(options, i, n_iter, chains[0], result.stats);
  }

  result.final_ensemble = std::move(chains);
  return result;
}

}  // namespace mcselect
