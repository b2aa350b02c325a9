#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "abda/error.hpp"
#include "abda/likelihoods.hpp"
#include "abda/math.hpp"
#include "abda/spn.hpp"

namespace abda {

/// Sum-node weights (Omega), one log-weight vector per sum, indexed by
/// SumNode::weight_index, plus the symmetric Dirichlet concentration.
struct SumWeights {
  std::vector<std::vector<double>> log_weights;
  double concentration = 10.0;
};

/// Leaf distribution: a mixture over the feature's likelihood dictionary.
struct LeafMixture {
  std::vector<Distribution> components;
  std::vector<double> log_weights;
};

/// Every continuous parameter of an Spn: Omega, w and eta.
struct SpnParams {
  SumWeights sums;
  std::vector<std::vector<LeafMixture>> leaves;  // [feature][leaf slot]

  const LeafMixture& leaf(std::size_t feature, std::size_t slot) const { return leaves[feature][slot]; }
};

/// One data row with its observation mask (1 = observed).
struct RowView {
  std::span<const double> values;
  std::span<const std::uint8_t> observed;

  bool is_observed(std::size_t d) const { return observed[d] != 0; }
};

/// Induced tree: one child per sum (for detached sums the child drawn from
/// the prior) and the leaf slot selected for each feature.
struct InducedTree {
  std::vector<std::uint32_t> choice;     // per sum: chosen child position
  std::vector<std::uint8_t> attached;    // per sum: reached from the root
  std::vector<std::uint32_t> leaf_slots;  // per feature: j^d

  NodeId chosen_child(const Spn& spn, std::size_t sum_index) const {
    return std::get<SumNode>(spn.node(spn.sum_node(sum_index))).children[choice[sum_index]];
  }

  bool operator==(const InducedTree&) const = default;
};

inline SumWeights uniform_sum_weights(const Spn& spn, double concentration = 10.0) {
  SumWeights w;
  w.concentration = concentration;
  w.log_weights.resize(spn.num_sums());
  for (std::size_t s = 0; s < spn.num_sums(); ++s) {
    const auto k = std::get<SumNode>(spn.node(spn.sum_node(s))).children.size();
    w.log_weights[s].assign(k, -std::log(static_cast<double>(k)));
  }
  return w;
}

/// Leaf log-value: log sum_l w_l p_l(x); 0 for an unobserved cell.
inline double leaf_log_value(const LeafMixture& leaf, double x) {
  double hi = kNegInf;
  double terms[16];
  std::vector<double> spill;
  double* buf = terms;
  if (leaf.components.size() > 16) {
    spill.resize(leaf.components.size());
    buf = spill.data();
  }
  for (std::size_t l = 0; l < leaf.components.size(); ++l) {
    const double lw = leaf.log_weights[l];
    buf[l] = lw == kNegInf ? kNegInf : lw + log_pdf(leaf.components[l], x);
    if (std::isnan(buf[l])) return buf[l];
    hi = std::max(hi, buf[l]);
  }
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t l = 0; l < leaf.components.size(); ++l) acc += std::exp(buf[l] - hi);
  return hi + std::log(acc);
}

namespace detail {

template <typename LeafFn>
inline void propagate(const Spn& spn, const SumWeights& sums, std::span<double> values, LeafFn&& leaf_value) {
  for (NodeId id : spn.evaluation_order()) {
    const Node& node = spn.node(id);
    double& out = values[id.value];
    if (const auto* leaf = std::get_if<LeafNode>(&node)) {
      out = leaf_value(id, *leaf);
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      double acc = 0.0;
      for (NodeId c : prod->children) acc += values[c.value];
      out = acc;
    } else {
      const auto& sum = std::get<SumNode>(node);
      const auto& lw = sums.log_weights[sum.weight_index];
      double hi = kNegInf;
      for (std::size_t i = 0; i < sum.children.size(); ++i) {
        if (lw[i] == kNegInf) continue;
        hi = std::max(hi, lw[i] + values[sum.children[i].value]);
      }
      if (hi == kNegInf || std::isinf(hi)) {
        out = hi;
        continue;
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < sum.children.size(); ++i) {
        if (lw[i] == kNegInf) continue;
        acc += std::exp(lw[i] + values[sum.children[i].value] - hi);
      }
      out = hi + std::log(acc);
    }
  }
}

}  // namespace detail

/// Bottom-up pass writing every node's log-value into `values` (size
/// spn.size()). Unobserved cells are marginalized.
inline void evaluate_nodes(const Spn& spn, const SpnParams& params, RowView row, std::span<double> values) {
  detail::propagate(spn, params.sums, values, [&](NodeId, const LeafNode& leaf) {
    if (!row.is_observed(leaf.feature)) return 0.0;
    return leaf_log_value(params.leaf(leaf.feature, leaf.leaf_slot), row.values[leaf.feature]);
  });
}

/// log S(x^o): density of the observed sub-vector of `row`.
inline double log_density(const Spn& spn, const SpnParams& params, RowView row, std::vector<double>& scratch) {
  scratch.resize(spn.size());
  evaluate_nodes(spn, params, row, scratch);
  for (std::size_t d = 0; d < spn.num_features(); ++d) {
    if (!row.is_observed(d)) continue;
    for (NodeId leaf : spn.leaves_by_feature(d)) {
      if (std::isnan(scratch[leaf.value])) {
        throw Error(ErrorCode::NonFiniteValue, "leaf " + std::to_string(leaf.value) + " evaluated to NaN");
      }
    }
  }
  return scratch[spn.root().value];
}

inline double log_density(const Spn& spn, const SpnParams& params, RowView row) {
  std::vector<double> scratch;
  return log_density(spn, params, row, scratch);
}

/// Same propagation as log_density with leaf values supplied directly.
/// `leaf_values` is indexed by NodeId; NaN marks a missing override.
inline double eval_with_leaf_overrides(const Spn& spn, const SumWeights& sums, std::span<const double> leaf_values,
                                       std::vector<double>& scratch) {
  if (leaf_values.size() < spn.size()) throw Error(ErrorCode::MissingOverride, "override vector too short");
  scratch.resize(spn.size());
  detail::propagate(spn, sums, scratch, [&](NodeId id, const LeafNode&) {
    const double v = leaf_values[id.value];
    if (std::isnan(v)) throw Error(ErrorCode::MissingOverride, "no override for leaf " + std::to_string(id.value));
    return v;
  });
  return scratch[spn.root().value];
}

inline double eval_with_leaf_overrides(const Spn& spn, const SumWeights& sums, std::span<const double> leaf_values) {
  std::vector<double> scratch;
  return eval_with_leaf_overrides(spn, sums, leaf_values, scratch);
}

inline InducedTree empty_tree(const Spn& spn) {
  InducedTree t;
  t.choice.assign(spn.num_sums(), 0);
  t.attached.assign(spn.num_sums(), 0);
  t.leaf_slots.assign(spn.num_features(), 0);
  return t;
}

/// Top-down ancestral sampling of an induced tree given cached node values.
/// Reached sums draw a child with probability proportional to weight times
/// child value; detached sums draw from their weights alone.
inline void sample_induced_tree(const Spn& spn, const SumWeights& sums, std::span<const double> values, Rng& rng,
                                InducedTree& tree, std::vector<std::uint8_t>& reached) {
  tree.choice.resize(spn.num_sums());
  tree.attached.resize(spn.num_sums());
  tree.leaf_slots.resize(spn.num_features());
  reached.assign(spn.size(), 0);
  reached[spn.root().value] = 1;
  const auto& order = spn.evaluation_order();
  double posterior[64];
  std::vector<double> spill;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId id = *it;
    const Node& node = spn.node(id);
    const bool on_tree = reached[id.value] != 0;
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      const auto& lw = sums.log_weights[sum->weight_index];
      std::size_t pick = 0;
      if (on_tree) {
        double* buf = posterior;
        if (sum->children.size() > 64) {
          spill.resize(sum->children.size());
          buf = spill.data();
        }
        bool any = false;
        for (std::size_t i = 0; i < sum->children.size(); ++i) {
          buf[i] = lw[i] == kNegInf ? kNegInf : lw[i] + values[sum->children[i].value];
          any = any || buf[i] != kNegInf;
        }
        pick = any ? sample_log_categorical(std::span<const double>(buf, sum->children.size()), rng)
                   : sample_log_categorical(lw, rng);
        reached[sum->children[pick].value] = 1;
      } else {
        pick = sample_log_categorical(lw, rng);
      }
      tree.choice[sum->weight_index] = static_cast<std::uint32_t>(pick);
      tree.attached[sum->weight_index] = on_tree ? 1 : 0;
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      if (on_tree) {
        for (NodeId c : prod->children) reached[c.value] = 1;
      }
    } else if (on_tree) {
      const auto& leaf = std::get<LeafNode>(node);
      tree.leaf_slots[leaf.feature] = static_cast<std::uint32_t>(leaf.leaf_slot);
    }
  }
}

inline InducedTree sample_induced_tree(const Spn& spn, const SpnParams& params, RowView row, Rng& rng) {
  std::vector<double> values(spn.size());
  evaluate_nodes(spn, params, row, values);
  InducedTree tree;
  std::vector<std::uint8_t> reached;
  sample_induced_tree(spn, params.sums, values, rng, tree, reached);
  return tree;
}

/// Marks the nodes visited by `tree` (attached part only).
inline std::vector<std::uint8_t> reached_nodes(const Spn& spn, const InducedTree& tree) {
  std::vector<std::uint8_t> reached(spn.size(), 0);
  reached[spn.root().value] = 1;
  const auto& order = spn.evaluation_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId id = *it;
    if (!reached[id.value]) continue;
    const Node& node = spn.node(id);
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      reached[sum->children[tree.choice[sum->weight_index]].value] = 1;
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      for (NodeId c : prod->children) reached[c.value] = 1;
    }
  }
  return reached;
}

/// log-probability (under the sum weights alone) of reaching each node,
/// accumulated over all root paths.
inline std::vector<double> node_reach_log_prob(const Spn& spn, const SumWeights& sums) {
  std::vector<double> reach(spn.size(), kNegInf);
  reach[spn.root().value] = 0.0;
  const auto& order = spn.evaluation_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId id = *it;
    const double r = reach[id.value];
    if (r == kNegInf) continue;
    const Node& node = spn.node(id);
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      const auto& lw = sums.log_weights[sum->weight_index];
      for (std::size_t i = 0; i < sum->children.size(); ++i) {
        reach[sum->children[i].value] = log_add(reach[sum->children[i].value], r + lw[i]);
      }
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      for (NodeId c : prod->children) reach[c.value] = log_add(reach[c.value], r);
    }
  }
  return reach;
}

/// Result of the max-product decode.
struct MpeResult {
  std::vector<double> values;  // completed row
  InducedTree tree;
  double log_score = 0.0;  // max-product value at the root
};

/// Approximate MPE completion: max-product upward pass, argmax decode
/// downward (ties to the lowest child index). A selected leaf over a missing
/// cell imputes the mode of its best-scoring component.
inline MpeResult mpe_complete(const Spn& spn, const SpnParams& params, RowView row) {
  const std::size_t n = spn.size();
  std::vector<double> values(n, kNegInf);
  std::vector<std::uint32_t> best(n, 0);
  for (NodeId id : spn.evaluation_order()) {
    const Node& node = spn.node(id);
    if (const auto* leaf = std::get_if<LeafNode>(&node)) {
      const LeafMixture& mix = params.leaf(leaf->feature, leaf->leaf_slot);
      if (row.is_observed(leaf->feature)) {
        values[id.value] = leaf_log_value(mix, row.values[leaf->feature]);
      } else {
        double top = kNegInf;
        std::uint32_t arg = 0;
        for (std::size_t l = 0; l < mix.components.size(); ++l) {
          if (mix.log_weights[l] == kNegInf) continue;
          const double s = mix.log_weights[l] + log_pdf(mix.components[l], mode(mix.components[l]));
          if (s > top) {
            top = s;
            arg = static_cast<std::uint32_t>(l);
          }
        }
        values[id.value] = top;
        best[id.value] = arg;
      }
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      double acc = 0.0;
      for (NodeId c : prod->children) acc += values[c.value];
      values[id.value] = acc;
    } else {
      const auto& sum = std::get<SumNode>(node);
      const auto& lw = params.sums.log_weights[sum.weight_index];
      double top = kNegInf;
      std::uint32_t arg = 0;
      for (std::size_t i = 0; i < sum.children.size(); ++i) {
        if (lw[i] == kNegInf) continue;
        const double s = lw[i] + values[sum.children[i].value];
        if (s > top) {
          top = s;
          arg = static_cast<std::uint32_t>(i);
        }
      }
      values[id.value] = top;
      best[id.value] = arg;
    }
  }

  MpeResult result;
  result.values.assign(row.values.begin(), row.values.end());
  result.tree = empty_tree(spn);
  result.log_score = values[spn.root().value];
  std::vector<std::uint8_t> reached(n, 0);
  reached[spn.root().value] = 1;
  const auto& order = spn.evaluation_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId id = *it;
    if (!reached[id.value]) continue;
    const Node& node = spn.node(id);
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      result.tree.choice[sum->weight_index] = best[id.value];
      result.tree.attached[sum->weight_index] = 1;
      reached[sum->children[best[id.value]].value] = 1;
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      for (NodeId c : prod->children) reached[c.value] = 1;
    } else {
      const auto& leaf = std::get<LeafNode>(node);
      result.tree.leaf_slots[leaf.feature] = static_cast<std::uint32_t>(leaf.leaf_slot);
      if (!row.is_observed(leaf.feature)) {
        const LeafMixture& mix = params.leaf(leaf.feature, leaf.leaf_slot);
        result.values[leaf.feature] = mode(mix.components[best[id.value]]);
      }
    }
  }
  return result;
}

struct WeightedTree {
  InducedTree tree;
  double log_weight = 0.0;  // product of the sum weights along the tree
};

/// Number of induced trees, saturating at `cap + 1`.
inline std::size_t count_induced_trees(const Spn& spn, std::size_t cap = 1'000'000) {
  std::vector<double> count(spn.size(), 0.0);
  const double limit = static_cast<double>(cap) + 1.0;
  for (NodeId id : spn.evaluation_order()) {
    const Node& node = spn.node(id);
    if (std::holds_alternative<LeafNode>(node)) {
      count[id.value] = 1.0;
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      double c = 1.0;
      for (NodeId ch : prod->children) c = std::min(c * count[ch.value], limit);
      count[id.value] = c;
    } else {
      double c = 0.0;
      for (NodeId ch : std::get<SumNode>(node).children) c = std::min(c + count[ch.value], limit);
      count[id.value] = c;
    }
  }
  return static_cast<std::size_t>(count[spn.root().value]);
}

/// Exhaustive list of induced trees with their prior log-weights.
inline std::vector<WeightedTree> enumerate_induced_trees(const Spn& spn, const SumWeights& sums,
                                                         std::size_t cap = 1'000'000) {
  const std::size_t total = count_induced_trees(spn, cap);
  if (total > cap) {
    throw Error(ErrorCode::TooManyTrees, "network has more than " + std::to_string(cap) + " induced trees");
  }
  struct Partial {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> choices;  // (sum index, child position)
    std::vector<std::pair<std::uint32_t, std::uint32_t>> leaves;   // (feature, slot)
    double log_weight = 0.0;
  };
  std::vector<std::vector<Partial>> partial(spn.size());
  for (NodeId id : spn.evaluation_order()) {
    const Node& node = spn.node(id);
    auto& out = partial[id.value];
    if (const auto* leaf = std::get_if<LeafNode>(&node)) {
      Partial p;
      p.leaves.emplace_back(static_cast<std::uint32_t>(leaf->feature), static_cast<std::uint32_t>(leaf->leaf_slot));
      out.push_back(std::move(p));
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      out.push_back(Partial{});
      for (NodeId c : prod->children) {
        std::vector<Partial> next;
        next.reserve(out.size() * partial[c.value].size());
        for (const auto& a : out) {
          for (const auto& b : partial[c.value]) {
            Partial m = a;
            m.choices.insert(m.choices.end(), b.choices.begin(), b.choices.end());
            m.leaves.insert(m.leaves.end(), b.leaves.begin(), b.leaves.end());
            m.log_weight += b.log_weight;
            next.push_back(std::move(m));
          }
        }
        out = std::move(next);
      }
    } else {
      const auto& sum = std::get<SumNode>(node);
      const auto& lw = sums.log_weights[sum.weight_index];
      for (std::size_t i = 0; i < sum.children.size(); ++i) {
        for (const auto& b : partial[sum.children[i].value]) {
          Partial m = b;
          m.choices.emplace_back(static_cast<std::uint32_t>(sum.weight_index), static_cast<std::uint32_t>(i));
          m.log_weight += lw[i];
          out.push_back(std::move(m));
        }
      }
    }
  }
  std::vector<WeightedTree> trees;
  for (const auto& p : partial[spn.root().value]) {
    WeightedTree wt{empty_tree(spn), p.log_weight};
    for (auto [s, c] : p.choices) {
      wt.tree.choice[s] = c;
      wt.tree.attached[s] = 1;
    }
    for (auto [d, j] : p.leaves) wt.tree.leaf_slots[d] = j;
    trees.push_back(std::move(wt));
  }
  return trees;
}

/// log p(x^o | tree): product of the selected leaves over observed cells.
inline double tree_log_likelihood(const SpnParams& params, const InducedTree& tree, RowView row) {
  double acc = 0.0;
  for (std::size_t d = 0; d < tree.leaf_slots.size(); ++d) {
    if (!row.is_observed(d)) continue;
    acc += leaf_log_value(params.leaf(d, tree.leaf_slots[d]), row.values[d]);
  }
  return acc;
}

/// Forward (ancestral) sample of a full row; `tree` receives the induced tree.
inline std::vector<double> sample_row(const Spn& spn, const SpnParams& params, Rng& rng, InducedTree* tree_out = nullptr) {
  std::vector<double> zeros(spn.size(), 0.0);
  InducedTree tree;
  std::vector<std::uint8_t> reached;
  sample_induced_tree(spn, params.sums, zeros, rng, tree, reached);
  std::vector<double> row(spn.num_features());
  for (std::size_t d = 0; d < spn.num_features(); ++d) {
    const LeafMixture& mix = params.leaf(d, tree.leaf_slots[d]);
    const std::size_t l = sample_log_categorical(mix.log_weights, rng);
    row[d] = sample(mix.components[l], rng);
  }
  if (tree_out) *tree_out = std::move(tree);
  return row;
}

}  // namespace abda
