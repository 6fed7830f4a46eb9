#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcselect/survival/data.hpp"

namespace mcselect {

// One splitting rule: threshold for numeric covariates (satisfied means
// x <= threshold), category subset for categorical ones (satisfied means the
// observation's category bit is set). Satisfied observations go left.
struct SplitRule {
  int covariate = -1;
  bool categorical = false;
  double threshold = 0.0;
  std::uint32_t category_mask = 0;

  bool satisfied(double x) const {
    if (categorical) return (category_mask >> static_cast<std::uint32_t>(x)) & 1u;
    return x <= threshold;
  }

  bool operator==(const SplitRule& o) const {
    return covariate == o.covariate && categorical == o.categorical &&
           (categorical ? category_mask == o.category_mask : threshold == o.threshold);
  }
};

// The finite menu of candidate rules for a dataset: per numeric covariate the
// midpoints of consecutive distinct observed values, per categorical one the
// proper nonempty subsets of observed categories up to complement
// equivalence (canonical subsets contain the lowest observed category).
class RuleSpace {
 public:
  RuleSpace(const SurvivalDataset& ds, std::size_t max_categories = 16) {
    rules_by_covariate_.resize(ds.n_covariates());
    for (std::size_t j = 0; j < ds.n_covariates(); ++j) {
      const auto& col = ds.columns[j];
      if (ds.schema[j].kind == CovariateKind::categorical) {
        std::set<std::uint32_t> observed;
        for (double v : col) observed.insert(static_cast<std::uint32_t>(v));
        if (observed.size() < 2) continue;
        if (observed.size() > max_categories)
          throw std::invalid_argument("covariate '" + ds.schema[j].name +
                                      "' has too many categories for subset rules");
        const std::vector<std::uint32_t> cats(observed.begin(), observed.end());
        const std::uint32_t c = static_cast<std::uint32_t>(cats.size());
        const std::uint32_t lowest = cats.front();
        // Subsets containing the lowest observed category, excluding the
        // full set: exactly one representative per complement pair.
        for (std::uint32_t bits = 1; bits < (1u << (c - 1)); ++bits) {
          std::uint32_t mask = 1u << lowest;
          for (std::uint32_t i = 1; i < c; ++i)
            if ((bits >> (i - 1)) & 1u) mask |= 1u << cats[i];
          SplitRule r;
          r.covariate = static_cast<int>(j);
          r.categorical = true;
          r.category_mask = mask;
          rules_by_covariate_[j].push_back(r);
        }
      } else {
        std::vector<double> sorted(col.begin(), col.end());
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
          SplitRule r;
          r.covariate = static_cast<int>(j);
          r.categorical = false;
          r.threshold = 0.5 * (sorted[i] + sorted[i + 1]);
          rules_by_covariate_[j].push_back(r);
        }
      }
    }
    for (const auto& rules : rules_by_covariate_) {
      total_ += rules.size();
      covariates_with_rules_ += !rules.empty();
    }
  }

  std::size_t total() const { return total_; }
  std::size_t covariates_with_rules() const { return covariates_with_rules_; }
  std::size_t n_covariates() const { return rules_by_covariate_.size(); }

  const std::vector<SplitRule>& rules_for(std::size_t covariate) const {
    return rules_by_covariate_[covariate];
  }

  // Probability of drawing a specific rule: uniform over covariates that have
  // rules, then uniform over that covariate's rules.
  double log_rule_probability(const SplitRule& r) const {
    const auto& rules = rules_by_covariate_[static_cast<std::size_t>(r.covariate)];
    return -std::log(static_cast<double>(covariates_with_rules_)) -
           std::log(static_cast<double>(rules.size()));
  }

  double rule_probability(const SplitRule& r) const {
    const auto& rules = rules_by_covariate_[static_cast<std::size_t>(r.covariate)];
    return 1.0 / (static_cast<double>(covariates_with_rules_) *
                  static_cast<double>(rules.size()));
  }

  template <class Rng>
  SplitRule draw(Rng& rng) const {
    if (total_ == 0) throw std::logic_error("rule space is empty");
    // Uniform over covariates that actually carry rules.
    std::size_t which = rng.next_below(covariates_with_rules_);
    for (const auto& rules : rules_by_covariate_) {
      if (rules.empty()) continue;
      if (which == 0) return rules[static_cast<std::size_t>(rng.next_below(rules.size()))];
      --which;
    }
    throw std::logic_error("rule draw fell through");
  }

 private:
  std::vector<std::vector<SplitRule>> rules_by_covariate_;
  std::size_t total_ = 0;
  std::size_t covariates_with_rules_ = 0;
};

// Rooted binary partition tree. Nodes live in a compact vector; leaves have
// left < 0. Every internal node has exactly two children; the left child
// receives observations satisfying the rule.
struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  SplitRule rule;

  bool is_leaf() const { return left < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;
  int root = 0;

  static Tree single_leaf() {
    Tree t;
    t.nodes.emplace_back();
    return t;
  }

  int n_nodes() const { return static_cast<int>(nodes.size()); }

  int n_leaves() const {
    int b = 0;
    for (const auto& n : nodes) b += n.is_leaf();
    return b;
  }

  int n_internal() const { return n_nodes() - n_leaves(); }

  std::vector<int> leaf_ids() const {
    std::vector<int> ids;
    for (int i = 0; i < n_nodes(); ++i)
      if (nodes[static_cast<std::size_t>(i)].is_leaf()) ids.push_back(i);
    return ids;
  }

  std::vector<int> internal_ids() const {
    std::vector<int> ids;
    for (int i = 0; i < n_nodes(); ++i)
      if (!nodes[static_cast<std::size_t>(i)].is_leaf()) ids.push_back(i);
    return ids;
  }

  // Nodes of the subtree rooted at v, preorder.
  std::vector<int> subtree_ids(int v) const {
    std::vector<int> out;
    std::vector<int> stack{v};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      out.push_back(u);
      const auto& node = nodes[static_cast<std::size_t>(u)];
      if (!node.is_leaf()) {
        stack.push_back(node.left);
        stack.push_back(node.right);
      }
    }
    return out;
  }

  bool in_subtree(int v, int candidate) const {
    int u = candidate;
    while (u >= 0) {
      if (u == v) return true;
      u = nodes[static_cast<std::size_t>(u)].parent;
    }
    return false;
  }

  int route(const SurvivalDataset& ds, std::size_t obs) const {
    int u = root;
    while (!nodes[static_cast<std::size_t>(u)].is_leaf()) {
      const auto& node = nodes[static_cast<std::size_t>(u)];
      const double x = ds.columns[static_cast<std::size_t>(node.rule.covariate)][obs];
      u = node.rule.satisfied(x) ? node.left : node.right;
    }
    return u;
  }

  // Structural sanity used by tests and debug checks.
  void check_consistent() const {
    if (nodes.empty()) throw std::logic_error("tree has no nodes");
    if (nodes[static_cast<std::size_t>(root)].parent != -1)
      throw std::logic_error("root has a parent");
    int reachable = 0;
    for (int id : subtree_ids(root)) {
      ++reachable;
      const auto& n = nodes[static_cast<std::size_t>(id)];
      if (n.is_leaf()) {
        if (n.right >= 0) throw std::logic_error("leaf with one child");
      } else {
        if (n.left < 0 || n.right < 0) throw std::logic_error("internal node missing a child");
        if (nodes[static_cast<std::size_t>(n.left)].parent != id ||
            nodes[static_cast<std::size_t>(n.right)].parent != id)
          throw std::logic_error("child/parent link mismatch");
      }
    }
    if (reachable != n_nodes()) throw std::logic_error("tree contains unreachable nodes");
  }
};

namespace detail {

inline void canonical_key_rec(const Tree& t, int u, std::string& out) {
  const auto& node = t.nodes[static_cast<std::size_t>(u)];
  if (node.is_leaf()) {
    out += 'L';
    return;
  }
  char buf[64];
  if (node.rule.categorical)
    std::snprintf(buf, sizeof(buf), "(c%d:%u", node.rule.covariate, node.rule.category_mask);
  else
    std::snprintf(buf, sizeof(buf), "(n%d:%.17g", node.rule.covariate, node.rule.threshold);
  out += buf;
  canonical_key_rec(t, node.left, out);
  out += '|';
  canonical_key_rec(t, node.right, out);
  out += ')';
}

}  // namespace detail

// Serialization of structure and rules, invariant to node numbering.
inline std::string canonical_key(const Tree& t) {
  std::string out;
  detail::canonical_key_rec(t, t.root, out);
  return out;
}

// Tree plus the per-leaf observation lists it induces. Member lists are kept
// sorted; moves maintain them incrementally and tests cross-check against a
// full reroute.
struct TreedState {
  Tree tree;
  std::vector<std::vector<std::int32_t>> leaf_members;  // indexed by node id

  bool operator==(const TreedState& o) const { return canonical_key(tree) == canonical_key(o.tree); }

  static TreedState root_state(const SurvivalDataset& ds) {
    TreedState s;
    s.tree = Tree::single_leaf();
    s.leaf_members.resize(1);
    s.leaf_members[0].resize(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i)
      s.leaf_members[0][i] = static_cast<std::int32_t>(i);
    return s;
  }

  // Recompute every leaf's member list from scratch.
  static std::vector<std::vector<std::int32_t>> route_all(const SurvivalDataset& ds,
                                                          const Tree& tree) {
    std::vector<std::vector<std::int32_t>> members(
        static_cast<std::size_t>(tree.n_nodes()));
    for (std::size_t i = 0; i < ds.n(); ++i)
      members[static_cast<std::size_t>(tree.route(ds, i))].push_back(
          static_cast<std::int32_t>(i));
    return members;
  }

  // Redistribute the given observations among the leaves below node v,
  // replacing those leaves' member lists. Input order (sorted) is preserved.
  void reroute_below(const SurvivalDataset& ds, int v,
                     const std::vector<std::int32_t>& observations) {
    for (int id : tree.subtree_ids(v))
      if (tree.nodes[static_cast<std::size_t>(id)].is_leaf())
        leaf_members[static_cast<std::size_t>(id)].clear();
    for (std::int32_t obs : observations) {
      int u = v;
      while (!tree.nodes[static_cast<std::size_t>(u)].is_leaf()) {
        const auto& node = tree.nodes[static_cast<std::size_t>(u)];
        const double x =
            ds.columns[static_cast<std::size_t>(node.rule.covariate)][static_cast<std::size_t>(obs)];
        u = node.rule.satisfied(x) ? node.left : node.right;
      }
      leaf_members[static_cast<std::size_t>(u)].push_back(obs);
    }
  }

  // All observations currently routed below node v, in ascending order.
  std::vector<std::int32_t> region_members(int v) const {
    std::vector<std::int32_t> out;
    for (int id : tree.subtree_ids(v))
      if (tree.nodes[static_cast<std::size_t>(id)].is_leaf())
        out.insert(out.end(), leaf_members[static_cast<std::size_t>(id)].begin(),
                   leaf_members[static_cast<std::size_t>(id)].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

}  // namespace mcselect
