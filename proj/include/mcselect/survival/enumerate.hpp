#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mcselect/survival/moves.hpp"
#include "mcselect/survival/tree.hpp"
#include "mcselect/survival/weibull.hpp"

namespace mcselect {

namespace detail {

struct TreeFragment {
  Tree tree;                                            // fragment-local node ids
  std::vector<std::vector<std::int32_t>> leaf_members;  // parallel to tree.nodes
  int leaves = 0;
};

// Carry member lists from a fragment into its clone inside `combined`,
// walking both trees in lockstep.
inline void copy_fragment_members(const TreeFragment& frag, int frag_root, int clone_root,
                                  TreeFragment& combined) {
  std::vector<std::pair<int, int>> walk{{frag_root, clone_root}};
  while (!walk.empty()) {
    const auto [src, dst] = walk.back();
    walk.pop_back();
    const auto& sn = frag.tree.nodes[static_cast<std::size_t>(src)];
    if (sn.is_leaf()) {
      combined.leaf_members[static_cast<std::size_t>(dst)] =
          frag.leaf_members[static_cast<std::size_t>(src)];
    } else {
      const auto& dn = combined.tree.nodes[static_cast<std::size_t>(dst)];
      walk.push_back({sn.left, dn.left});
      walk.push_back({sn.right, dn.right});
    }
  }
}

// All proper subtrees over the given member set with at most budget leaves.
inline void enumerate_fragments(const SurvivalDataset& ds, const RuleSpace& rules,
                                const std::vector<std::int32_t>& members, int budget,
                                std::vector<TreeFragment>& out, std::size_t hard_cap) {
  if (leaf_proper(ds, members)) {
    TreeFragment leaf;
    leaf.tree = Tree::single_leaf();
    leaf.leaf_members.resize(1);
    leaf.leaf_members[0] = members;
    leaf.leaves = 1;
    out.push_back(std::move(leaf));
  }
  if (budget < 2) return;
  for (std::size_t cov = 0; cov < rules.n_covariates(); ++cov) {
    for (const SplitRule& rule : rules.rules_for(cov)) {
      std::vector<std::int32_t> left_members, right_members;
      for (std::int32_t obs : members) {
        const double x =
            ds.columns[static_cast<std::size_t>(rule.covariate)][static_cast<std::size_t>(obs)];
        (rule.satisfied(x) ? left_members : right_members).push_back(obs);
      }
      if (left_members.empty() || right_members.empty()) continue;

      std::vector<TreeFragment> lefts, rights;
      enumerate_fragments(ds, rules, left_members, budget - 1, lefts, hard_cap);
      if (lefts.empty()) continue;
      enumerate_fragments(ds, rules, right_members, budget - 1, rights, hard_cap);
      for (const auto& lf : lefts) {
        for (const auto& rf : rights) {
          if (lf.leaves + rf.leaves > budget) continue;
          TreeFragment combined;
          combined.tree.nodes.emplace_back();
          combined.tree.nodes[0].rule = rule;
          const int left_root = clone_subtree(lf.tree, lf.tree.root, combined.tree, 0);
          const int right_root = clone_subtree(rf.tree, rf.tree.root, combined.tree, 0);
          combined.tree.nodes[0].left = left_root;
          combined.tree.nodes[0].right = right_root;
          combined.leaf_members.resize(combined.tree.nodes.size());
          copy_fragment_members(lf, lf.tree.root, left_root, combined);
          copy_fragment_members(rf, rf.tree.root, right_root, combined);
          combined.leaves = lf.leaves + rf.leaves;
          out.push_back(std::move(combined));
          if (out.size() > hard_cap)
            throw std::invalid_argument("tree space too large to enumerate");
        }
      }
    }
  }
}

}  // namespace detail

struct EnumeratedTreePosterior {
  std::vector<TreedState> states;
  std::vector<double> log_marginal;
  std::vector<double> probability;
};

// Exhaustive enumeration of every proper tree with at most b_max leaves over
// the dataset's finite rule space, with the normalized Laplace posterior.
// Verification oracle and small-instance explorer; guarded by hard_cap.
inline EnumeratedTreePosterior enumerate_tree_posterior(const SurvivalDataset& ds,
                                                        const RuleSpace& rules, int b_max,
                                                        std::size_t hard_cap = 200000) {
  std::vector<std::int32_t> all(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) all[i] = static_cast<std::int32_t>(i);
  std::vector<detail::TreeFragment> fragments;
  detail::enumerate_fragments(ds, rules, all, b_max, fragments, hard_cap);

  EnumeratedTreePosterior out;
  out.states.reserve(fragments.size());
  out.log_marginal.reserve(fragments.size());
  double max_lm = kNegInf;
  for (auto& frag : fragments) {
    TreedState s;
    s.tree = std::move(frag.tree);
    s.leaf_members = std::move(frag.leaf_members);
    const double lm = tree_log_marginal(ds, s);
    out.states.push_back(std::move(s));
    out.log_marginal.push_back(lm);
    if (lm > max_lm) max_lm = lm;
  }
  double total = 0.0;
  for (double lm : out.log_marginal) total += std::exp(lm - max_lm);
  out.probability.resize(out.log_marginal.size());
  for (std::size_t i = 0; i < out.log_marginal.size(); ++i)
    out.probability[i] = std::exp(out.log_marginal[i] - max_lm) / total;
  return out;
}

}  // namespace mcselect
