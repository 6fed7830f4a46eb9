#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mcselect/mcmc.hpp"
#include "mcselect/rng.hpp"
#include "mcselect/survival/tree.hpp"

namespace mcselect {

enum class TreeMoveKind { insert, remove, change, permute, graft };

namespace detail {

// Internal nodes with at most one internal child; the targets the delete
// move may collapse.
inline std::vector<int> eligible_delete_ids(const Tree& t) {
  std::vector<int> out;
  for (int id : t.internal_ids()) {
    const auto& n = t.nodes[static_cast<std::size_t>(id)];
    const bool left_internal = !t.nodes[static_cast<std::size_t>(n.left)].is_leaf();
    const bool right_internal = !t.nodes[static_cast<std::size_t>(n.right)].is_leaf();
    if (!(left_internal && right_internal)) out.push_back(id);
  }
  return out;
}

// Drop the flagged nodes and renumber the survivors compactly. Returns the
// old-id -> new-id map (-1 for removed nodes).
inline std::vector<int> remove_nodes(TreedState& s, const std::vector<char>& doomed) {
  const auto old_n = static_cast<std::size_t>(s.tree.n_nodes());
  std::vector<int> remap(old_n, -1);
  int next_id = 0;
  for (std::size_t i = 0; i < old_n; ++i)
    if (!doomed[i]) remap[i] = next_id++;

  std::vector<TreeNode> nodes(static_cast<std::size_t>(next_id));
  std::vector<std::vector<std::int32_t>> members(static_cast<std::size_t>(next_id));
  for (std::size_t i = 0; i < old_n; ++i) {
    if (doomed[i]) continue;
    TreeNode n = s.tree.nodes[i];
    n.parent = n.parent >= 0 ? remap[static_cast<std::size_t>(n.parent)] : -1;
    n.left = n.left >= 0 ? remap[static_cast<std::size_t>(n.left)] : -1;
    n.right = n.right >= 0 ? remap[static_cast<std::size_t>(n.right)] : -1;
    const auto ni = static_cast<std::size_t>(remap[i]);
    nodes[ni] = n;
    members[ni] = std::move(s.leaf_members[i]);
  }
  s.tree.nodes = std::move(nodes);
  s.leaf_members = std::move(members);
  s.tree.root = remap[static_cast<std::size_t>(s.tree.root)];
  return remap;
}

// Append a copy of the subtree of src rooted at u to dst; plain structural
// clone, member lists not involved.
inline int clone_subtree(const Tree& src, int u, Tree& dst, int parent) {
  const auto& node = src.nodes[static_cast<std::size_t>(u)];
  const int id = dst.n_nodes();
  dst.nodes.emplace_back();
  dst.nodes.back().parent = parent;
  dst.nodes.back().rule = node.rule;
  if (!node.is_leaf()) {
    const int left = clone_subtree(src, node.left, dst, id);
    const int right = clone_subtree(src, node.right, dst, id);
    dst.nodes[static_cast<std::size_t>(id)].left = left;
    dst.nodes[static_cast<std::size_t>(id)].right = right;
  }
  return id;
}

// Clone src, replacing the subtree at substitute_at with the subtree of
// sub_src rooted at sub_node.
inline int clone_substituting(const Tree& src, int u, int substitute_at, const Tree& sub_src,
                              int sub_node, Tree& dst, int parent) {
  if (u == substitute_at) return clone_subtree(sub_src, sub_node, dst, parent);
  const auto& node = src.nodes[static_cast<std::size_t>(u)];
  const int id = dst.n_nodes();
  dst.nodes.emplace_back();
  dst.nodes.back().parent = parent;
  dst.nodes.back().rule = node.rule;
  if (!node.is_leaf()) {
    const int left = clone_substituting(src, node.left, substitute_at, sub_src, sub_node, dst, id);
    const int right =
        clone_substituting(src, node.right, substitute_at, sub_src, sub_node, dst, id);
    dst.nodes[static_cast<std::size_t>(id)].left = left;
    dst.nodes[static_cast<std::size_t>(id)].right = right;
  }
  return id;
}

inline TreedState rebuild_with_substitution(const SurvivalDataset& ds, const Tree& src,
                                            int substitute_at, const Tree& sub_src,
                                            int sub_node) {
  TreedState out;
  out.tree.nodes.clear();
  clone_substituting(src, src.root, substitute_at, sub_src, sub_node, out.tree, -1);
  out.tree.root = 0;
  out.leaf_members = TreedState::route_all(ds, out.tree);
  return out;
}

}  // namespace detail

// The five within-chain structural transitions. Each proposal carries the
// exact log Hastings correction, move-type selection probabilities included;
// candidates that break leaf propriety are left to the target to reject with
// zero mass.
//
//   insert   split a uniformly chosen leaf with a fresh rule
//   remove   collapse an internal node with at most one internal child: a
//            leaf pair merges into its parent; with an internal child the
//            parent is spliced out (that variant has no one-move inverse, so
//            its correction is -inf and it can never be accepted)
//   change   redraw the rule of one internal node
//   permute  apply a non-identity permutation to the rules of a uniformly
//            chosen set of internal nodes
//   graft    exchange a non-root branch with a leaf outside it, keeping
//            every splitting rule in place
class TreeMoveProposal {
 public:
  TreeMoveProposal(const SurvivalDataset& ds, const RuleSpace& rules, int b_max)
      : ds_(&ds), rules_(&rules), b_max_(b_max) {
    if (b_max_ < 1) throw std::invalid_argument("leaf cap must be >= 1");
  }

  std::vector<TreeMoveKind> applicable(const TreedState& s) const {
    const int b = s.tree.n_leaves();
    const int n_internal = s.tree.n_internal();
    std::vector<TreeMoveKind> moves;
    if (b < b_max_ && rules_->total() >= 1) moves.push_back(TreeMoveKind::insert);
    if (b >= 2) moves.push_back(TreeMoveKind::remove);
    if (n_internal >= 1 && rules_->total() >= 2) moves.push_back(TreeMoveKind::change);
    if (n_internal >= 2) {
      moves.push_back(TreeMoveKind::permute);
      moves.push_back(TreeMoveKind::graft);
    }
    return moves;
  }

  ProposalDraw<TreedState> propose(const TreedState& current, RngStream& rng) const {
    const auto moves = applicable(current);
    if (moves.empty())
      throw std::logic_error("no applicable tree move; the rule space is empty");
    const auto kind = moves[static_cast<std::size_t>(rng.next_below(moves.size()))];
    const double log_p_kind = -std::log(static_cast<double>(moves.size()));
    // Selection probabilities cancel exactly for the three structure-count
    // preserving moves, so only insert and remove carry log_p_kind.
    switch (kind) {
      case TreeMoveKind::insert: return propose_insert(current, rng, log_p_kind);
      case TreeMoveKind::remove: return propose_remove(current, rng, log_p_kind);
      case TreeMoveKind::change: return propose_change(current, rng);
      case TreeMoveKind::permute: return propose_permute(current, rng);
      case TreeMoveKind::graft: return propose_graft(current, rng);
    }
    throw std::logic_error("unreachable");
  }

  int b_max() const { return b_max_; }

 private:
  double log_move_count(const TreedState& s) const {
    return -std::log(static_cast<double>(applicable(s).size()));
  }

  ProposalDraw<TreedState> propose_insert(const TreedState& current, RngStream& rng,
                                          double log_p_kind) const {
    const auto leaves = current.tree.leaf_ids();
    const int leaf = leaves[static_cast<std::size_t>(rng.next_below(leaves.size()))];
    const SplitRule rule = rules_->draw(rng);

    TreedState next = current;
    const int left_id = next.tree.n_nodes();
    const int right_id = left_id + 1;
    next.tree.nodes.emplace_back();
    next.tree.nodes.emplace_back();
    next.tree.nodes[static_cast<std::size_t>(left_id)].parent = leaf;
    next.tree.nodes[static_cast<std::size_t>(right_id)].parent = leaf;
    auto& parent = next.tree.nodes[static_cast<std::size_t>(leaf)];
    parent.left = left_id;
    parent.right = right_id;
    parent.rule = rule;
    next.leaf_members.resize(static_cast<std::size_t>(next.tree.n_nodes()));
    for (std::int32_t obs : current.leaf_members[static_cast<std::size_t>(leaf)]) {
      const double x = ds_->columns[static_cast<std::size_t>(rule.covariate)]
                                   [static_cast<std::size_t>(obs)];
      next.leaf_members[static_cast<std::size_t>(rule.satisfied(x) ? left_id : right_id)]
          .push_back(obs);
    }
    next.leaf_members[static_cast<std::size_t>(leaf)].clear();

    const double log_q_fwd = log_p_kind - std::log(static_cast<double>(leaves.size())) +
                             rules_->log_rule_probability(rule);
    const auto eligible_after = detail::eligible_delete_ids(next.tree).size();
    const double log_q_rev =
        log_move_count(next) - std::log(static_cast<double>(eligible_after));
    return {std::move(next), log_q_rev - log_q_fwd};
  }

  ProposalDraw<TreedState> propose_remove(const TreedState& current, RngStream& rng,
                                          double log_p_kind) const {
    const auto eligible = detail::eligible_delete_ids(current.tree);
    const int target = eligible[static_cast<std::size_t>(rng.next_below(eligible.size()))];
    const auto& node = current.tree.nodes[static_cast<std::size_t>(target)];
    const bool left_leaf = current.tree.nodes[static_cast<std::size_t>(node.left)].is_leaf();
    const bool right_leaf = current.tree.nodes[static_cast<std::size_t>(node.right)].is_leaf();
    const double log_q_fwd = log_p_kind - std::log(static_cast<double>(eligible.size()));

    TreedState next = current;
    std::vector<char> doomed(static_cast<std::size_t>(next.tree.n_nodes()), 0);

    if (left_leaf && right_leaf) {
      // Leaf pair with common parent: the parent becomes a leaf again.
      const SplitRule old_rule = node.rule;
      auto merged = std::vector<std::int32_t>();
      const auto& lm = current.leaf_members[static_cast<std::size_t>(node.left)];
      const auto& rm = current.leaf_members[static_cast<std::size_t>(node.right)];
      merged.resize(lm.size() + rm.size());
      std::merge(lm.begin(), lm.end(), rm.begin(), rm.end(), merged.begin());
      doomed[static_cast<std::size_t>(node.left)] = 1;
      doomed[static_cast<std::size_t>(node.right)] = 1;
      auto& pn = next.tree.nodes[static_cast<std::size_t>(target)];
      pn.left = -1;
      pn.right = -1;
      pn.rule = SplitRule{};
      next.leaf_members[static_cast<std::size_t>(target)] = std::move(merged);
      detail::remove_nodes(next, doomed);

      const auto leaves_after = static_cast<double>(next.tree.n_leaves());
      const double log_q_rev = log_move_count(next) - std::log(leaves_after) +
                               rules_->log_rule_probability(old_rule);
      return {std::move(next), log_q_rev - log_q_fwd};
    }

    // One child is an internal subtree: splice the parent out and pour the
    // leaf child's members through the surviving subtree. No single move
    // rebuilds the spliced node, so the reverse proposal probability is zero
    // and the draw can never be accepted; it is still produced faithfully.
    const int leaf_child = left_leaf ? node.left : node.right;
    const int subtree_child = left_leaf ? node.right : node.left;
    const auto leaf_obs = current.leaf_members[static_cast<std::size_t>(leaf_child)];
    const int grandparent = node.parent;
    auto& sn = next.tree.nodes[static_cast<std::size_t>(subtree_child)];
    sn.parent = grandparent;
    if (grandparent >= 0) {
      auto& gp = next.tree.nodes[static_cast<std::size_t>(grandparent)];
      (gp.left == target ? gp.left : gp.right) = subtree_child;
    } else {
      next.tree.root = subtree_child;
    }
    doomed[static_cast<std::size_t>(target)] = 1;
    doomed[static_cast<std::size_t>(leaf_child)] = 1;
    const auto remap = detail::remove_nodes(next, doomed);
    const int new_subtree = remap[static_cast<std::size_t>(subtree_child)];
    auto combined = next.region_members(new_subtree);
    combined.insert(combined.end(), leaf_obs.begin(), leaf_obs.end());
    std::sort(combined.begin(), combined.end());
    next.reroute_below(*ds_, new_subtree, combined);
    return {std::move(next), kNegInf};
  }

  ProposalDraw<TreedState> propose_change(const TreedState& current, RngStream& rng) const {
    const auto internals = current.tree.internal_ids();
    const int node = internals[static_cast<std::size_t>(rng.next_below(internals.size()))];
    const SplitRule old_rule = current.tree.nodes[static_cast<std::size_t>(node)].rule;
    SplitRule rule;
    do {
      rule = rules_->draw(rng);
    } while (rule == old_rule);

    TreedState next = current;
    next.tree.nodes[static_cast<std::size_t>(node)].rule = rule;
    const auto region = next.region_members(node);
    next.reroute_below(*ds_, node, region);

    // Redraw-until-different makes the per-rule probability
    // base(rule) / (1 - base(excluded)); selection counts cancel.
    const double base_new = rules_->rule_probability(rule);
    const double base_old = rules_->rule_probability(old_rule);
    const double log_hastings = (std::log(base_old) - std::log1p(-base_new)) -
                                (std::log(base_new) - std::log1p(-base_old));
    return {std::move(next), log_hastings};
  }

  ProposalDraw<TreedState> propose_permute(const TreedState& current, RngStream& rng) const {
    auto internals = current.tree.internal_ids();
    const auto n_internal = internals.size();
    const auto count = 2 + static_cast<std::size_t>(rng.next_below(n_internal - 1));
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.next_below(n_internal - i));
      std::swap(internals[i], internals[j]);
    }
    internals.resize(count);

    // Uniform non-identity permutation; identity draws are rejected whole.
    std::vector<std::size_t> perm(count);
    bool identity = true;
    do {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = count; i > 1; --i)
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.next_below(i))]);
      identity = true;
      for (std::size_t i = 0; i < count; ++i) identity &= perm[i] == i;
    } while (identity);

    TreedState next = current;
    std::vector<SplitRule> old_rules(count);
    for (std::size_t i = 0; i < count; ++i)
      old_rules[i] = current.tree.nodes[static_cast<std::size_t>(internals[i])].rule;
    for (std::size_t i = 0; i < count; ++i)
      next.tree.nodes[static_cast<std::size_t>(internals[i])].rule = old_rules[perm[i]];

    // Reroute once per topmost changed node; lower changed nodes are covered.
    for (std::size_t i = 0; i < count; ++i) {
      bool covered = false;
      for (std::size_t j = 0; j < count && !covered; ++j)
        covered = j != i && internals[j] != internals[i] &&
                  next.tree.in_subtree(internals[j], internals[i]);
      if (!covered) {
        const auto region = next.region_members(internals[i]);
        next.reroute_below(*ds_, internals[i], region);
      }
    }
    return {std::move(next), 0.0};  // symmetric: same set, inverse permutation
  }

  ProposalDraw<TreedState> propose_graft(const TreedState& current, RngStream& rng) const {
    std::vector<int> branches;
    for (int id : current.tree.internal_ids())
      if (id != current.tree.root) branches.push_back(id);
    const int branch = branches[static_cast<std::size_t>(rng.next_below(branches.size()))];

    std::vector<int> outside_leaves;
    for (int id : current.tree.leaf_ids())
      if (!current.tree.in_subtree(branch, id)) outside_leaves.push_back(id);
    const int leaf =
        outside_leaves[static_cast<std::size_t>(rng.next_below(outside_leaves.size()))];

    TreedState next = current;
    const auto branch_region = current.region_members(branch);
    const auto leaf_obs = current.leaf_members[static_cast<std::size_t>(leaf)];
    const int bp = next.tree.nodes[static_cast<std::size_t>(branch)].parent;
    const int lp = next.tree.nodes[static_cast<std::size_t>(leaf)].parent;
    if (bp == lp) {
      auto& p = next.tree.nodes[static_cast<std::size_t>(bp)];
      std::swap(p.left, p.right);
    } else {
      auto& bpn = next.tree.nodes[static_cast<std::size_t>(bp)];
      (bpn.left == branch ? bpn.left : bpn.right) = leaf;
      auto& lpn = next.tree.nodes[static_cast<std::size_t>(lp)];
      (lpn.left == leaf ? lpn.left : lpn.right) = branch;
      next.tree.nodes[static_cast<std::size_t>(branch)].parent = lp;
      next.tree.nodes[static_cast<std::size_t>(leaf)].parent = bp;
    }
    next.leaf_members[static_cast<std::size_t>(leaf)] = branch_region;
    next.reroute_below(*ds_, branch, leaf_obs);
    // Exchanging a branch with an outside leaf is its own inverse with
    // identical selection counts on both sides.
    return {std::move(next), 0.0};
  }

  const SurvivalDataset* ds_;
  const RuleSpace* rules_;
  int b_max_;
};

enum class CrossMoveKind { whole_tree_swap, cross_insert, cross_graft, cross_change };

// Swap policy for the hierarchical sampler over trees: one of four exchange
// classes drawn uniformly, always accepted. Structured exchanges that would
// produce an invalid tree (improper leaf or too many leaves) fall back to the
// whole-tree swap, which is always valid.
class CrossChainTreeSwap {
 public:
  static constexpr bool preserves_value_multiset = false;

  CrossChainTreeSwap(const SurvivalDataset& ds, const RuleSpace& rules, int b_max)
      : ds_(&ds), rules_(&rules), b_max_(b_max) {}

  template <class T>
  void operator()(const T& target, ChainState<TreedState>& first,
                  ChainState<TreedState>& other, RngStream& rng) const {
    const auto kind = static_cast<CrossMoveKind>(rng.next_below(4));
    std::optional<std::pair<TreedState, TreedState>> moved;
    switch (kind) {
      case CrossMoveKind::whole_tree_swap: break;
      case CrossMoveKind::cross_insert: moved = cross_insert(first.value, other.value, rng); break;
      case CrossMoveKind::cross_graft: moved = cross_graft(first.value, other.value, rng); break;
      case CrossMoveKind::cross_change: moved = cross_change(first.value, other.value, rng); break;
    }
    if (moved) {
      const double lf = target.log_density(moved->first);
      const double lo = target.log_density(moved->second);
      if (std::isfinite(lf) && std::isfinite(lo)) {
        first.value = std::move(moved->first);
        first.log_density = lf;
        other.value = std::move(moved->second);
        other.log_density = lo;
        return;
      }
    }
    std::swap(first, other);
  }

 private:
  // Swap the splitting rule of one uniformly chosen internal node per tree.
  std::optional<std::pair<TreedState, TreedState>> cross_change(const TreedState& a,
                                                                const TreedState& b,
                                                                RngStream& rng) const {
    const auto ia = a.tree.internal_ids();
    const auto ib = b.tree.internal_ids();
    if (ia.empty() || ib.empty()) return std::nullopt;
    const int ua = ia[static_cast<std::size_t>(rng.next_below(ia.size()))];
    const int ub = ib[static_cast<std::size_t>(rng.next_below(ib.size()))];
    TreedState na = a;
    TreedState nb = b;
    std::swap(na.tree.nodes[static_cast<std::size_t>(ua)].rule,
              nb.tree.nodes[static_cast<std::size_t>(ub)].rule);
    na.leaf_members = TreedState::route_all(*ds_, na.tree);
    nb.leaf_members = TreedState::route_all(*ds_, nb.tree);
    return std::make_pair(std::move(na), std::move(nb));
  }

  // Move one split between the chains: the donor collapses an eligible node
  // and the recipient inserts the freed rule at a uniformly chosen leaf.
  std::optional<std::pair<TreedState, TreedState>> cross_insert(const TreedState& a,
                                                                const TreedState& b,
                                                                RngStream& rng) const {
    const bool a_donates = rng.next_below(2) == 0;
    const TreedState& donor = a_donates ? a : b;
    const TreedState& recipient = a_donates ? b : a;
    const auto eligible = detail::eligible_delete_ids(donor.tree);
    if (eligible.empty()) return std::nullopt;
    if (recipient.tree.n_leaves() >= b_max_) return std::nullopt;

    const int victim = eligible[static_cast<std::size_t>(rng.next_below(eligible.size()))];
    const auto& vn = donor.tree.nodes[static_cast<std::size_t>(victim)];
    const SplitRule rule = vn.rule;
    const bool left_leaf = donor.tree.nodes[static_cast<std::size_t>(vn.left)].is_leaf();
    const bool right_leaf = donor.tree.nodes[static_cast<std::size_t>(vn.right)].is_leaf();
    TreedState new_donor;
    if (left_leaf && right_leaf) {
      const Tree leaf_tree = Tree::single_leaf();
      new_donor = detail::rebuild_with_substitution(*ds_, donor.tree, victim, leaf_tree, 0);
    } else {
      const int surviving = left_leaf ? vn.right : vn.left;
      new_donor =
          detail::rebuild_with_substitution(*ds_, donor.tree, victim, donor.tree, surviving);
    }

    const auto leaves = recipient.tree.leaf_ids();
    const int leaf = leaves[static_cast<std::size_t>(rng.next_below(leaves.size()))];
    Tree fragment;
    fragment.nodes.resize(3);
    fragment.nodes[0].rule = rule;
    fragment.nodes[0].left = 1;
    fragment.nodes[0].right = 2;
    fragment.nodes[1].parent = 0;
    fragment.nodes[2].parent = 0;
    TreedState new_recipient =
        detail::rebuild_with_substitution(*ds_, recipient.tree, leaf, fragment, 0);

    if (a_donates) return std::make_pair(std::move(new_donor), std::move(new_recipient));
    return std::make_pair(std::move(new_recipient), std::move(new_donor));
  }

  // Exchange whole subtrees rooted at non-root internal nodes.
  std::optional<std::pair<TreedState, TreedState>> cross_graft(const TreedState& a,
                                                               const TreedState& b,
                                                               RngStream& rng) const {
    std::vector<int> va;
    for (int id : a.tree.internal_ids())
      if (id != a.tree.root) va.push_back(id);
    std::vector<int> vb;
    for (int id : b.tree.internal_ids())
      if (id != b.tree.root) vb.push_back(id);
    if (va.empty() || vb.empty()) return std::nullopt;
    const int na = va[static_cast<std::size_t>(rng.next_below(va.size()))];
    const int nb = vb[static_cast<std::size_t>(rng.next_below(vb.size()))];
    TreedState new_a = detail::rebuild_with_substitution(*ds_, a.tree, na, b.tree, nb);
    TreedState new_b = detail::rebuild_with_substitution(*ds_, b.tree, nb, a.tree, na);
    if (new_a.tree.n_leaves() > b_max_ || new_b.tree.n_leaves() > b_max_) return std::nullopt;
    return std::make_pair(std::move(new_a), std::move(new_b));
  }

  const SurvivalDataset* ds_;
  const RuleSpace* rules_;
  int b_max_;
};

}  // namespace mcselect
