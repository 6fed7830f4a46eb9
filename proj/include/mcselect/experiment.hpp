#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mcselect/diagnostics.hpp"
#include "mcselect/samplers.hpp"
#include "mcselect/survival/data.hpp"
#include "mcselect/survival/enumerate.hpp"
#include "mcselect/survival/kaplan_meier.hpp"
#include "mcselect/survival/moves.hpp"
#include "mcselect/survival/tree.hpp"
#include "mcselect/survival/weibull.hpp"
#include "mcselect/targets/gaussian_mixture.hpp"
#include "mcselect/targets/linear_model.hpp"

namespace mcselect {

using nlohmann::json;

struct ValidationError {
  std::string field;
  std::string message;
};

// Shipped experiment presets; a config names one through "preset" and its own
// fields override the preset's.
inline json preset_config(const std::string& name) {
  const json benchmark_mixture = GaussianMixture::four_mode_benchmark().to_json();
  if (name == "mixture-phs") {
    return json{{"seed", 20070514},
                {"iterations", 100000},
                {"target",
                 {{"kind", "mixture"},
                  {"mixture", benchmark_mixture},
                  {"init", 0.0},
                  {"histogram", {{"lo", -13.5}, {"hi", 6.6}, {"bins", 100}}}}},
                {"sampler",
                 {{"kind", "phs"},
                  {"chains", 10},
                  {"proposal", {{"kind", "uniform_walk"}, {"delta", 1.0}}}}}};
  }
  if (name == "mixture-mh") {
    return json{{"seed", 20070514},
                {"iterations", 1000000},
                {"target",
                 {{"kind", "mixture"},
                  {"mixture", benchmark_mixture},
                  {"init", 0.0},
                  {"histogram", {{"lo", -13.5}, {"hi", 6.6}, {"bins", 100}}}}},
                {"sampler",
                 {{"kind", "mh"},
                  {"proposal", {{"kind", "uniform_walk"}, {"delta", 1.0}}}}}};
  }
  if (name == "linreg-mh" || name == "linreg-pt" || name == "linreg-phs") {
    json sampler;
    if (name == "linreg-mh") sampler = {{"kind", "mh"}};
    if (name == "linreg-pt")
      sampler = {{"kind", "pt"},
                 {"chains", 9},
                 {"ladder", {{"max", 5.0}}},
                 {"swap", {{"mode", "independent"}, {"rate", 0.2}}}};
    if (name == "linreg-phs") sampler = {{"kind", "phs"}, {"chains", 9}};
    return json{{"seed", 20070514},
                {"iterations", 50000},
                {"target",
                 {{"kind", "linreg"},
                  {"dataset",
                   {{"generate",
                     {{"collinear", false}, {"p", 15}, {"n", 180}, {"noise_sd", 2.5},
                      {"seed", 1812}}}}},
                  {"init", "null"}}},
                {"sampler", sampler}};
  }
  if (name == "cart-phs") {
    return json{{"seed", 20070514},
                {"iterations", 50000},
                {"target",
                 {{"kind", "cart"},
                  {"b_max", 30},
                  {"km_months", {12.0, 24.0, 36.0}}}},
                {"sampler", {{"kind", "phs"}, {"chains", 20}}}};
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

namespace detail {

inline void deep_merge(json& base, const json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      deep_merge(base[key], value);
    else
      base[key] = value;
  }
}

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

// Expand the preset (if any) and apply user overrides on top.
inline json expand_config(const json& user) {
  json expanded = json::object();
  if (user.contains("preset")) expanded = preset_config(user.at("preset").get<std::string>());
  detail::deep_merge(expanded, user);
  return expanded;
}

inline json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j;
  in >> j;
  return j;
}

// Hash of the experiment-defining fields; the output directory is incidental
// to the run and excluded so reruns into different places match.
inline std::string config_hash(const json& expanded) {
  json hashed = expanded;
  hashed.erase("output_dir");
  return detail::fnv1a_hex(hashed.dump());
}

// Full static validation; never throws past this boundary for content
// errors, everything lands in the returned list.
inline std::vector<ValidationError> validate_config(const json& cfg) {
  std::vector<ValidationError> errors;
  auto fail = [&](const std::string& field, const std::string& message) {
    errors.push_back({field, message});
  };

  if (!cfg.contains("seed"))
    fail("seed", "required field is missing");
  else if (!cfg["seed"].is_number_unsigned() && !cfg["seed"].is_number_integer())
    fail("seed", "must be an integer");

  if (!cfg.contains("iterations"))
    fail("iterations", "required field is missing");
  else if (!cfg["iterations"].is_number_integer() || cfg["iterations"].get<std::int64_t>() < 1)
    fail("iterations", "must be a positive integer");

  if (!cfg.contains("target") || !cfg["target"].is_object()) {
    fail("target", "required object is missing");
    return errors;
  }
  if (!cfg.contains("sampler") || !cfg["sampler"].is_object()) {
    fail("sampler", "required object is missing");
    return errors;
  }

  const auto& target = cfg["target"];
  const auto& sampler = cfg["sampler"];
  const std::string target_kind = target.value("kind", "");
  const std::string sampler_kind = sampler.value("kind", "");

  if (target_kind != "mixture" && target_kind != "linreg" && target_kind != "cart")
    fail("target.kind", "must be one of mixture, linreg, cart");
  if (sampler_kind != "mh" && sampler_kind != "pt" && sampler_kind != "phs")
    fail("sampler.kind", "must be one of mh, pt, phs");

  const int chains = sampler.value("chains", sampler_kind == "mh" ? 1 : 0);
  if (sampler_kind == "phs" && chains < 3)
    fail("sampler.chains", "the hierarchical sampler requires M >= 3 chains");
  if (sampler_kind == "pt") {
    if (chains < 1) fail("sampler.chains", "need at least one chain");
    if (sampler.contains("ladder")) {
      if (sampler["ladder"].value("max", 1.0) < 1.0)
        fail("sampler.ladder.max", "top temperature must be >= 1");
    }
    const std::string mode = sampler.contains("swap")
                                 ? sampler["swap"].value("mode", "independent")
                                 : "independent";
    if (mode != "independent" && mode != "deterministic")
      fail("sampler.swap.mode", "must be independent or deterministic");
    if (mode == "independent" && sampler.contains("swap")) {
      const double rate = sampler["swap"].value("rate", 0.5);
      if (!(rate > 0.0 && rate < 1.0)) fail("sampler.swap.rate", "must lie in (0,1)");
    }
  }

  if (target_kind == "mixture") {
    if (target.contains("mixture")) {
      try {
        GaussianMixture::from_json(target["mixture"]);
      } catch (const std::exception& e) {
        fail("target.mixture", e.what());
      }
    } else if (target.contains("random_mixture")) {
      if (target["random_mixture"].value("components", 0) < 1)
        fail("target.random_mixture.components", "need at least one component");
      if (!target["random_mixture"].contains("seed"))
        fail("target.random_mixture.seed", "required for reproducible generation");
    } else {
      fail("target.mixture", "provide either mixture or random_mixture");
    }
    if (sampler.contains("proposal")) {
      const auto& prop = sampler["proposal"];
      if (prop.value("kind", "uniform_walk") != "uniform_walk")
        fail("sampler.proposal.kind", "mixture runs use the uniform_walk proposal");
      if (prop.contains("delta") && !(prop["delta"].get<double>() > 0.0))
        fail("sampler.proposal.delta", "half-width must be positive");
      if (prop.contains("deltas")) {
        if (sampler_kind != "phs")
          fail("sampler.proposal.deltas",
               "per-chain half-widths are a hierarchical-sampler feature; use delta");
        const auto deltas = prop["deltas"].get<std::vector<double>>();
        if (static_cast<int>(deltas.size()) != std::max(chains, 1))
          fail("sampler.proposal.deltas", "need one half-width per chain");
        for (double d : deltas)
          if (!(d > 0.0)) fail("sampler.proposal.deltas", "half-widths must be positive");
      }
    } else {
      fail("sampler.proposal", "mixture runs require a proposal");
    }
  }

  if (target_kind == "linreg") {
    if (!target.contains("dataset")) {
      fail("target.dataset", "provide csv or generate");
    } else if (target["dataset"].contains("csv")) {
      const auto path = target["dataset"]["csv"].get<std::string>();
      if (!std::filesystem::exists(path)) fail("target.dataset.csv", "file not found: " + path);
    } else if (target["dataset"].contains("generate")) {
      const auto& gen = target["dataset"]["generate"];
      const int p = gen.value("p", 15);
      const int n = gen.value("n", 180);
      if (p < 1 || n <= p) fail("target.dataset.generate", "need n > p >= 1");
      if (!gen.contains("seed")) fail("target.dataset.generate.seed", "required");
    } else {
      fail("target.dataset", "provide csv or generate");
    }
  }

  if (target_kind == "cart") {
    if (!target.contains("csv"))
      fail("target.csv", "survival data file is required");
    else if (!std::filesystem::exists(target["csv"].get<std::string>()))
      fail("target.csv", "file not found: " + target["csv"].get<std::string>());
    if (!target.contains("schema"))
      fail("target.schema", "covariate schema file is required");
    else if (!std::filesystem::exists(target["schema"].get<std::string>()))
      fail("target.schema", "file not found: " + target["schema"].get<std::string>());
    else {
      try {
        read_schema_json(target["schema"].get<std::string>());
      } catch (const std::exception& e) {
        fail("target.schema", e.what());
      }
    }
    if (target.value("b_max", 30) < 1) fail("target.b_max", "leaf cap must be >= 1");
    if (target.contains("km_months")) {
      for (double m : target["km_months"].get<std::vector<double>>())
        if (!(m > 0.0)) fail("target.km_months", "evaluation months must be positive");
    }
  }

  return errors;
}

struct ExperimentOutcome {
  RunReport report;
  std::vector<std::string> files;
  std::string output_dir;
};

namespace detail {

inline std::string resolve_output_dir(const json& cfg) {
  if (cfg.contains("output_dir")) return cfg["output_dir"].get<std::string>();
  if (const char* env = std::getenv("MCSELECT_OUT_DIR")) return env;
  return ".";
}

inline void write_manifest(const json& cfg, const std::string& dir,
                           std::vector<std::string>& files) {
  json manifest{{"config_hash", config_hash(cfg)},
                {"seed", cfg.at("seed").get<std::uint64_t>()},
                {"iterations", cfg.at("iterations").get<std::int64_t>()},
                {"target", cfg.at("target").at("kind").get<std::string>()},
                {"sampler", cfg.at("sampler").at("kind").get<std::string>()},
                {"config", cfg},
                {"files", files}};
  const std::string path = dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << manifest.dump(2) << "\n";
  files.push_back(path);
}

inline McseResult safe_mcse(std::span<const double> x) {
  return x.size() >= 100 ? mcse_with_window(x) : McseResult{0.0, 0};
}

inline PtSwapConfig pt_swap_from(const json& sampler_cfg) {
  PtSwapConfig swap;
  if (sampler_cfg.contains("swap")) {
    swap.mode = sampler_cfg["swap"].value("mode", "independent") == std::string("independent")
                    ? PtSwapMode::independent
                    : PtSwapMode::deterministic;
    swap.rate = sampler_cfg["swap"].value("rate", 0.5);
  }
  return swap;
}

inline TemperatureLadder ladder_from(const json& sampler_cfg, int chains) {
  const double t_max =
      sampler_cfg.contains("ladder") ? sampler_cfg["ladder"].value("max", 5.0) : 5.0;
  return TemperatureLadder::equally_spaced(t_max, chains);
}

inline RunOptions run_options(std::int64_t n_iter, bool progress) {
  RunOptions options;
  if (progress) {
    options.progress = [n_iter](std::int64_t iter, double logf, double swap_rate) {
      std::fprintf(stderr, "iter %lld/%lld (%d%%) log_post=%.4f swap_rate=%.3f\n",
                   static_cast<long long>(iter), static_cast<long long>(n_iter),
                   static_cast<int>(100 * iter / n_iter), logf, swap_rate);
    };
  }
  return options;
}

inline void fill_ensemble_stats(RunReport& report, const EnsembleStats& stats) {
  report.acceptance_rates.clear();
  for (const auto& c : stats.chain) report.acceptance_rates.push_back(c.acceptance_rate());
  report.swap_rate = stats.swap_rate();
}

// --- mixture ---

inline GaussianMixture mixture_from_config(const json& target) {
  if (target.contains("mixture")) return GaussianMixture::from_json(target["mixture"]);
  const auto& rm = target["random_mixture"];
  auto range = [&](const char* key, double lo, double hi) -> std::pair<double, double> {
    if (!rm.contains(key)) return {lo, hi};
    const auto v = rm[key].get<std::vector<double>>();
    return {v.at(0), v.at(1)};
  };
  return random_mixture(rm.value("components", 5), range("mean_range", -10.0, 10.0),
                        range("sd_range", 0.1, 1.0), range("weight_range", 1.0, 5.0),
                        rm.at("seed").get<std::uint64_t>());
}

inline ExperimentOutcome run_mixture_experiment(const json& cfg, const std::string& dir,
                                                bool progress) {
  const auto& target_cfg = cfg.at("target");
  const auto& sampler_cfg = cfg.at("sampler");
  const GaussianMixture mix = mixture_from_config(target_cfg);
  const auto n_iter = cfg.at("iterations").get<std::int64_t>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const double init = target_cfg.value("init", 0.0);
  const std::string kind = sampler_cfg.at("kind").get<std::string>();
  const int chains = sampler_cfg.value("chains", 1);

  std::vector<double> deltas;
  const auto& prop = sampler_cfg.at("proposal");
  if (prop.contains("deltas"))
    deltas = prop["deltas"].get<std::vector<double>>();
  else
    deltas.assign(static_cast<std::size_t>(std::max(chains, 1)), prop.value("delta", 1.0));

  const RunOptions options = run_options(n_iter, progress);
  RunResult<double> result;
  if (kind == "mh") {
    result = run_mh(mix, MetropolisKernel<UniformWalkProposal>{UniformWalkProposal(deltas[0])},
                    init, n_iter, seed, options);
  } else if (kind == "pt") {
    result = run_pt(mix, ladder_from(sampler_cfg, chains),
                    MetropolisKernel<UniformWalkProposal>{UniformWalkProposal(deltas[0])},
                    pt_swap_from(sampler_cfg),
                    std::vector<double>(static_cast<std::size_t>(chains), init), n_iter, seed,
                    options);
  } else {
    std::vector<MetropolisKernel<UniformWalkProposal>> kernels;
    kernels.reserve(deltas.size());
    for (double d : deltas)
      kernels.push_back(MetropolisKernel<UniformWalkProposal>{UniformWalkProposal(d)});
    result = run_phs(mix, kernels, std::vector<double>(static_cast<std::size_t>(chains), init),
                     n_iter, seed, options);
  }

  ExperimentOutcome outcome;
  outcome.output_dir = dir;
  fill_ensemble_stats(outcome.report, result.stats);
  const auto mcse_result = safe_mcse(result.trace.states);
  outcome.report.mcse = {mcse_result.value};
  outcome.report.mcse_window = {mcse_result.window};
  const json hist_cfg =
      target_cfg.contains("histogram") ? target_cfg["histogram"] : json::object();
  outcome.report.histogram =
      histogram(result.trace.states, hist_cfg.value("lo", -13.5), hist_cfg.value("hi", 6.6),
                hist_cfg.value("bins", 100));
  outcome.report.config_hash = config_hash(cfg);
  outcome.report.seed = seed;
  outcome.report.iterations = n_iter;

  write_trace_csv(dir + "/trace.csv", result.trace);
  outcome.files.push_back(dir + "/trace.csv");
  write_histogram_csv(dir + "/histogram.csv", *outcome.report.histogram);
  outcome.files.push_back(dir + "/histogram.csv");
  write_report_json(dir + "/report.json", outcome.report);
  outcome.files.push_back(dir + "/report.json");
  return outcome;
}

// --- linear model selection ---

inline RegressionData regression_from_config(const json& target) {
  const auto& ds = target.at("dataset");
  if (ds.contains("csv")) return read_regression_csv(ds["csv"].get<std::string>());
  const auto& gen = ds.at("generate");
  return generate_selection_dataset(gen.value("collinear", false),
                                    gen.at("seed").get<std::uint64_t>(),
                                    static_cast<std::size_t>(gen.value("p", 15)),
                                    static_cast<std::size_t>(gen.value("n", 180)),
                                    gen.value("noise_sd", 2.5))
      .data;
}

inline ExperimentOutcome run_linreg_experiment(const json& cfg, const std::string& dir,
                                               bool progress) {
  const auto& sampler_cfg = cfg.at("sampler");
  const RegressionData data = regression_from_config(cfg.at("target"));
  const ModelSelectionPosterior posterior(data);
  const auto n_iter = cfg.at("iterations").get<std::int64_t>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const std::string kind = sampler_cfg.at("kind").get<std::string>();
  const int chains = sampler_cfg.value("chains", 1);
  const GammaVector init(data.p(), 0);  // null model

  const RunOptions options = run_options(n_iter, progress);
  const GammaSweepKernel kernel;
  RunResult<GammaVector> result;
  if (kind == "mh") {
    result = run_mh(posterior, kernel, init, n_iter, seed, options);
  } else if (kind == "pt") {
    result = run_pt(posterior, ladder_from(sampler_cfg, chains), kernel,
                    pt_swap_from(sampler_cfg),
                    std::vector<GammaVector>(static_cast<std::size_t>(chains), init), n_iter,
                    seed, options);
  } else {
    const std::vector<GammaSweepKernel> kernels(static_cast<std::size_t>(chains), kernel);
    result = run_phs(posterior, kernels,
                     std::vector<GammaVector>(static_cast<std::size_t>(chains), init), n_iter,
                     seed, options);
  }

  ExperimentOutcome outcome;
  outcome.output_dir = dir;
  fill_ensemble_stats(outcome.report, result.stats);
  outcome.report.inclusion_probabilities = inclusion_probabilities(result.trace);
  std::vector<double> coordinate(result.trace.size());
  for (std::size_t j = 0; j < data.p(); ++j) {
    for (std::size_t i = 0; i < result.trace.size(); ++i)
      coordinate[i] = result.trace.states[i][j];
    const auto m = safe_mcse(coordinate);
    outcome.report.mcse.push_back(m.value);
    outcome.report.mcse_window.push_back(m.window);
  }
  outcome.report.singular_models_rejected = posterior.singular_rejections();
  outcome.report.config_hash = config_hash(cfg);
  outcome.report.seed = seed;
  outcome.report.iterations = n_iter;

  write_trace_csv(dir + "/trace.csv", result.trace);
  outcome.files.push_back(dir + "/trace.csv");
  write_report_json(dir + "/report.json", outcome.report);
  outcome.files.push_back(dir + "/report.json");
  return outcome;
}

// --- survival trees ---

inline json modal_tree_to_json(const SurvivalDataset& ds, const TreedState& state, int node,
                               int& leaf_counter) {
  const auto& n = state.tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) {
    return json{{"leaf", ++leaf_counter},
                {"size", state.leaf_members[static_cast<std::size_t>(node)].size()}};
  }
  const auto& schema = ds.schema[static_cast<std::size_t>(n.rule.covariate)];
  json rule;
  rule["covariate"] = schema.name;
  if (n.rule.categorical) {
    rule["kind"] = "subset";
    std::vector<std::string> cats;
    for (std::size_t c = 0; c < schema.categories.size(); ++c)
      if ((n.rule.category_mask >> c) & 1u) cats.push_back(schema.categories[c]);
    rule["categories"] = cats;
  } else {
    rule["kind"] = "threshold";
    rule["threshold"] = n.rule.threshold;
  }
  json out;
  out["rule"] = rule;
  out["left"] = modal_tree_to_json(ds, state, n.left, leaf_counter);
  out["right"] = modal_tree_to_json(ds, state, n.right, leaf_counter);
  return out;
}

struct CartRunArtifacts {
  std::vector<std::int64_t> iteration;
  std::vector<double> log_marginal;
  std::vector<int> leaves;
  std::vector<std::int64_t> covariate_use;  // per covariate
  TreedState modal_state;
  double modal_log_marginal = kNegInf;
  std::int64_t modal_iteration = 0;
  EnsembleStats stats;
  std::int64_t rejected = 0;
};

inline CartRunArtifacts run_cart_sampler(const json& cfg, const SurvivalDataset& ds,
                                         const RuleSpace& rules, bool progress) {
  const auto& sampler_cfg = cfg.at("sampler");
  const int b_max = cfg.at("target").value("b_max", 30);
  const auto n_iter = cfg.at("iterations").get<std::int64_t>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const std::string kind = sampler_cfg.at("kind").get<std::string>();
  const int chains = sampler_cfg.value("chains", 1);

  const SurvivalTreePosterior posterior(ds, b_max);
  const TreeMoveProposal proposal(ds, rules, b_max);
  const MetropolisKernel<TreeMoveProposal> kernel{proposal};
  const TreedState init = TreedState::root_state(ds);

  CartRunArtifacts art;
  art.iteration.reserve(static_cast<std::size_t>(n_iter));
  art.covariate_use.assign(ds.n_covariates(), 0);

  auto observer = [&](std::int64_t iter, const std::vector<ChainState<TreedState>>& ens) {
    const auto& cold = ens[0];
    art.iteration.push_back(iter);
    art.log_marginal.push_back(cold.log_density);
    art.leaves.push_back(cold.value.tree.n_leaves());
    thread_local std::vector<char> used;
    used.assign(ds.n_covariates(), 0);
    for (int id : cold.value.tree.internal_ids())
      used[static_cast<std::size_t>(
          cold.value.tree.nodes[static_cast<std::size_t>(id)].rule.covariate)] = 1;
    for (std::size_t j = 0; j < used.size(); ++j) art.covariate_use[j] += used[j];
    if (cold.log_density > art.modal_log_marginal) {
      art.modal_log_marginal = cold.log_density;
      art.modal_state = cold.value;
      art.modal_iteration = iter;
    }
  };

  RunOptions options = run_options(n_iter, progress);
  options.collect_trace = false;

  if (kind == "mh") {
    const auto result = run_mh(posterior, kernel, init, n_iter, seed, options, observer);
    art.stats = result.stats;
  } else if (kind == "pt") {
    const auto result = run_pt(posterior, ladder_from(sampler_cfg, chains), kernel,
                               pt_swap_from(sampler_cfg),
                               std::vector<TreedState>(static_cast<std::size_t>(chains), init),
                               n_iter, seed, options, observer);
    art.stats = result.stats;
  } else {
    const std::vector<MetropolisKernel<TreeMoveProposal>> kernels(
        static_cast<std::size_t>(chains), kernel);
    const CrossChainTreeSwap cross(ds, rules, b_max);
    const auto result = run_phs(posterior, kernels,
                                std::vector<TreedState>(static_cast<std::size_t>(chains), init),
                                n_iter, seed, options, cross, observer);
    art.stats = result.stats;
  }
  art.rejected = posterior.rejected_evaluations();
  return art;
}

inline ExperimentOutcome run_cart_experiment(const json& cfg, const std::string& dir,
                                             bool progress) {
  const auto& target_cfg = cfg.at("target");
  const auto schema = read_schema_json(target_cfg.at("schema").get<std::string>());
  const SurvivalDataset ds = ingest_survival_csv(target_cfg.at("csv").get<std::string>(), schema);
  const RuleSpace rules(ds);
  const auto art = run_cart_sampler(cfg, ds, rules, progress);
  const auto n_iter = cfg.at("iterations").get<std::int64_t>();

  ExperimentOutcome outcome;
  outcome.output_dir = dir;
  fill_ensemble_stats(outcome.report, art.stats);
  const auto m = safe_mcse(art.log_marginal);
  outcome.report.mcse = {m.value};
  outcome.report.mcse_window = {m.window};
  outcome.report.config_hash = config_hash(cfg);
  outcome.report.seed = cfg.at("seed").get<std::uint64_t>();
  outcome.report.iterations = n_iter;
  outcome.report.singular_models_rejected = art.rejected;

  // Trace of (iteration, log marginal, leaf count).
  {
    const std::string path = dir + "/trace.csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "iteration,log_marginal,leaves\n";
    char buf[40];
    for (std::size_t i = 0; i < art.iteration.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", art.log_marginal[i]);
      out << art.iteration[i] << "," << buf << "," << art.leaves[i] << "\n";
    }
    outcome.files.push_back(path);
  }

  // Modal tree as nested JSON.
  {
    int leaf_counter = 0;
    json modal{{"log_marginal", art.modal_log_marginal},
               {"leaves", art.modal_state.tree.n_leaves()},
               {"first_visited_iteration", art.modal_iteration},
               {"tree", modal_tree_to_json(ds, art.modal_state, art.modal_state.tree.root,
                                           leaf_counter)}};
    const std::string path = dir + "/modal_tree.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << modal.dump(2) << "\n";
    outcome.files.push_back(path);
  }

  // Kaplan-Meier summary per modal-tree leaf.
  {
    std::vector<double> months{12.0, 24.0, 36.0};
    if (target_cfg.contains("km_months"))
      months = target_cfg["km_months"].get<std::vector<double>>();
    const std::string path = dir + "/leaf_km.csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "leaf,size";
    for (double t : months) out << ",S" << t;
    out << "\n";
    int leaf_id = 0;
    for (int id : art.modal_state.tree.leaf_ids()) {
      const auto& members = art.modal_state.leaf_members[static_cast<std::size_t>(id)];
      std::vector<double> times;
      std::vector<std::uint8_t> events;
      for (auto obs : members) {
        times.push_back(ds.time[static_cast<std::size_t>(obs)]);
        events.push_back(ds.event[static_cast<std::size_t>(obs)]);
      }
      const auto survival = kaplan_meier_at(times, events, months);
      out << ++leaf_id << "," << members.size();
      char buf[40];
      for (double s : survival) {
        std::snprintf(buf, sizeof(buf), "%.6g", s);
        out << "," << buf;
      }
      out << "\n";
    }
    outcome.files.push_back(path);
  }

  // Proportion of sampled models whose structure depends on each covariate.
  {
    json inclusion = json::object();
    std::vector<double> probs;
    for (std::size_t j = 0; j < ds.n_covariates(); ++j) {
      const double p =
          static_cast<double>(art.covariate_use[j]) / static_cast<double>(n_iter);
      inclusion[ds.schema[j].name] = p;
      probs.push_back(p);
    }
    outcome.report.inclusion_probabilities = probs;
    const std::string path = dir + "/covariate_inclusion.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << inclusion.dump(2) << "\n";
    outcome.files.push_back(path);
  }

  write_report_json(dir + "/report.json", outcome.report);
  outcome.files.push_back(dir + "/report.json");
  return outcome;
}

}  // namespace detail

// Execute a fully expanded, validated configuration. Writes the trace,
// report, and target-specific exports plus a manifest recording the config
// hash and seed for exact reproduction.
inline ExperimentOutcome run_experiment(const json& expanded, bool progress = false) {
  const auto errors = validate_config(expanded);
  if (!errors.empty())
    throw std::invalid_argument("invalid config: " + errors.front().field + ": " +
                                errors.front().message);
  const std::string dir = detail::resolve_output_dir(expanded);
  std::filesystem::create_directories(dir);

  const std::string kind = expanded.at("target").at("kind").get<std::string>();
  ExperimentOutcome outcome;
  if (kind == "mixture")
    outcome = detail::run_mixture_experiment(expanded, dir, progress);
  else if (kind == "linreg")
    outcome = detail::run_linreg_experiment(expanded, dir, progress);
  else
    outcome = detail::run_cart_experiment(expanded, dir, progress);
  detail::write_manifest(expanded, dir, outcome.files);
  return outcome;
}

// Exact enumeration runs for small linreg/cart instances.
inline ExperimentOutcome run_enumeration(const json& expanded) {
  const auto errors = validate_config(expanded);
  if (!errors.empty())
    throw std::invalid_argument("invalid config: " + errors.front().field + ": " +
                                errors.front().message);
  const std::string dir = detail::resolve_output_dir(expanded);
  std::filesystem::create_directories(dir);
  const std::string kind = expanded.at("target").at("kind").get<std::string>();
  ExperimentOutcome outcome;
  outcome.output_dir = dir;

  if (kind == "linreg") {
    const RegressionData data = detail::regression_from_config(expanded.at("target"));
    const auto exact = enumerate_exact_posterior(data);
    const std::string path = dir + "/enumeration.csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "model";
    for (std::size_t j = 1; j <= data.p(); ++j) out << ",g" << j;
    out << ",log_posterior,probability\n";
    char buf[40];
    for (std::size_t mask = 0; mask < exact.probability.size(); ++mask) {
      out << mask;
      for (std::size_t j = 0; j < data.p(); ++j) out << "," << ((mask >> j) & 1u);
      std::snprintf(buf, sizeof(buf), "%.17g", exact.log_posterior[mask]);
      out << "," << buf;
      std::snprintf(buf, sizeof(buf), "%.17g", exact.probability[mask]);
      out << "," << buf << "\n";
    }
    outcome.files.push_back(path);

    json inclusion{{"inclusion_probabilities", exact.inclusion}};
    const std::string ipath = dir + "/inclusion_exact.json";
    std::ofstream iout(ipath);
    iout << inclusion.dump(2) << "\n";
    outcome.files.push_back(ipath);
  } else if (kind == "cart") {
    const auto& target_cfg = expanded.at("target");
    const auto schema = read_schema_json(target_cfg.at("schema").get<std::string>());
    const SurvivalDataset ds =
        ingest_survival_csv(target_cfg.at("csv").get<std::string>(), schema);
    const RuleSpace rules(ds);
    const auto exact = enumerate_tree_posterior(ds, rules, target_cfg.value("b_max", 3));
    const std::string path = dir + "/tree_enumeration.csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "tree,leaves,log_marginal,probability\n";
    char buf[40];
    for (std::size_t i = 0; i < exact.states.size(); ++i) {
      out << canonical_key(exact.states[i].tree) << "," << exact.states[i].tree.n_leaves();
      std::snprintf(buf, sizeof(buf), "%.17g", exact.log_marginal[i]);
      out << "," << buf;
      std::snprintf(buf, sizeof(buf), "%.17g", exact.probability[i]);
      out << "," << buf << "\n";
    }
    outcome.files.push_back(path);
  } else {
    throw std::invalid_argument("enumeration supports linreg and cart targets only");
  }
  return outcome;
}

}  // namespace mcselect
