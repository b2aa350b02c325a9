#pragma once

#include <algorithm>
#include <compare>
#include <optional>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "abda/error.hpp"

namespace abda {

/// Index of a node in an Spn arena.
struct NodeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

struct SumNode {
  std::vector<NodeId> children;
  std::size_t weight_index = 0;
};

struct ProductNode {
  std::vector<NodeId> children;
};

struct LeafNode {
  std::size_t feature = 0;
  std::size_t leaf_slot = 0;  // position in leaves_by_feature(feature)
};

using Node = std::variant<SumNode, ProductNode, LeafNode>;

inline const std::vector<NodeId>* children_of(const Node& node) {
  if (const auto* s = std::get_if<SumNode>(&node)) return &s->children;
  if (const auto* p = std::get_if<ProductNode>(&node)) return &p->children;
  return nullptr;
}

enum class ViolationKind {
  DanglingChild,
  TooFewChildren,
  Cycle,
  Unreachable,
  Incomplete,
  NotDecomposable,
  RootScope,
  BadLeafSlot,
  BadWeightIndex,
};

struct Violation {
  ViolationKind kind;
  NodeId node;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationKind k) const {
    return std::any_of(violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; });
  }
};

/// Sum-product network structure over features 0..D-1. Nodes live in an
/// index-addressed arena; children are always added before their parents,
/// so arena order is a topological order.
class Spn {
 public:
  Spn() = default;
  explicit Spn(std::size_t num_features) : leaves_by_feature_(num_features) {}

  NodeId add_leaf(std::size_t feature) {
    if (feature >= leaves_by_feature_.size()) {
      throw Error(ErrorCode::InvalidArgument, "leaf feature out of range");
    }
    const NodeId id = next_id();
    nodes_.push_back(LeafNode{feature, leaves_by_feature_[feature].size()});
    leaves_by_feature_[feature].push_back(id);
    finalized_ = false;
    return id;
  }

  NodeId add_sum(std::vector<NodeId> children) {
    check_children(children);
    const NodeId id = next_id();
    nodes_.push_back(SumNode{std::move(children), num_sums_++});
    sum_nodes_.push_back(id);
    finalized_ = false;
    return id;
  }

  NodeId add_product(std::vector<NodeId> children) {
    check_children(children);
    const NodeId id = next_id();
    nodes_.push_back(ProductNode{std::move(children)});
    finalized_ = false;
    return id;
  }

  /// Sets the root and precomputes scopes and the evaluation order.
  void set_root(NodeId root) {
    if (root.value >= nodes_.size()) throw Error(ErrorCode::InvalidArgument, "root out of range");
    root_ = root;
    finalize();
  }

  /// Rebuilds an arena verbatim (deserialization); no structural checks.
  static Spn from_parts(std::size_t num_features, std::vector<Node> nodes, NodeId root) {
    Spn spn(num_features);
    spn.nodes_ = std::move(nodes);
    for (std::size_t i = 0; i < spn.nodes_.size(); ++i) {
      const NodeId id{static_cast<std::uint32_t>(i)};
      if (const auto* leaf = std::get_if<LeafNode>(&spn.nodes_[i])) {
        if (leaf->feature < num_features) {
          auto& slots = spn.leaves_by_feature_[leaf->feature];
          if (slots.size() <= leaf->leaf_slot) slots.resize(leaf->leaf_slot + 1, NodeId{UINT32_MAX});
          slots[leaf->leaf_slot] = id;
        }
      } else if (const auto* sum = std::get_if<SumNode>(&spn.nodes_[i])) {
        if (spn.sum_nodes_.size() <= sum->weight_index) spn.sum_nodes_.resize(sum->weight_index + 1, NodeId{UINT32_MAX});
        spn.sum_nodes_[sum->weight_index] = id;
      }
    }
    spn.num_sums_ = spn.sum_nodes_.size();
    spn.root_ = root;
    spn.finalize();
    return spn;
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t num_features() const { return leaves_by_feature_.size(); }
  std::size_t num_sums() const { return num_sums_; }
  NodeId root() const { return root_; }

  const Node& node(NodeId id) const { return nodes_[id.value]; }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Sorted feature indices of the sub-network rooted at id.
  const std::vector<std::size_t>& scope(NodeId id) const { return scopes_[id.value]; }

  const std::vector<NodeId>& leaves_by_feature(std::size_t feature) const { return leaves_by_feature_[feature]; }

  /// Sum node owning weight vector `weight_index`.
  NodeId sum_node(std::size_t weight_index) const { return sum_nodes_[weight_index]; }

  /// Nodes reachable from the root, children before parents.
  const std::vector<NodeId>& evaluation_order() const { return order_; }

  bool is_leaf(NodeId id) const { return std::holds_alternative<LeafNode>(nodes_[id.value]); }
  bool is_sum(NodeId id) const { return std::holds_alternative<SumNode>(nodes_[id.value]); }
  bool is_product(NodeId id) const { return std::holds_alternative<ProductNode>(nodes_[id.value]); }

  /// Parent of each node in a tree-shaped network (first parent found in a DAG).
  std::vector<std::optional<NodeId>> parents() const {
    std::vector<std::optional<NodeId>> parent(nodes_.size());
    for (NodeId id : order_) {
      if (const auto* ch = children_of(nodes_[id.value])) {
        for (NodeId c : *ch) {
          if (c.value < parent.size() && !parent[c.value]) parent[c.value] = id;
        }
      }
    }
    return parent;
  }

  /// Node ids from the root down to `id` (inclusive).
  std::vector<NodeId> path_to(NodeId id) const {
    const auto parent = parents();
    std::vector<NodeId> path{id};
    while (parent[path.back().value]) path.push_back(*parent[path.back().value]);
    std::reverse(path.begin(), path.end());
    return path;
  }

  ValidationReport validate() const;

 private:
  NodeId next_id() const { return NodeId{static_cast<std::uint32_t>(nodes_.size())}; }

  void check_children(const std::vector<NodeId>& children) const {
    for (NodeId c : children) {
      if (c.value >= nodes_.size()) throw Error(ErrorCode::InvalidArgument, "child must be added before its parent");
    }
  }

  void finalize();

  std::vector<Node> nodes_;
  std::vector<std::vector<NodeId>> leaves_by_feature_;
  std::vector<NodeId> sum_nodes_;
  std::size_t num_sums_ = 0;
  NodeId root_{};
  std::vector<std::vector<std::size_t>> scopes_;
  std::vector<NodeId> order_;
  bool finalized_ = false;
  bool has_cycle_ = false;
};

inline void Spn::finalize() {
  const std::size_t n = nodes_.size();
  scopes_.assign(n, {});
  order_.clear();
  has_cycle_ = false;
  if (n == 0) return;
  // iterative post-order DFS from the root; 0 = new, 1 = on stack, 2 = done
  std::vector<std::uint8_t> state(n, 0);
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{root_.value, 0}};
  state[root_.value] = 1;
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    const auto* ch = children_of(nodes_[v]);
    if (ch && next < ch->size()) {
      const NodeId c = (*ch)[next++];
      if (c.value >= n) continue;
      if (state[c.value] == 1) {
        has_cycle_ = true;
        continue;
      }
      if (state[c.value] == 0) {
        state[c.value] = 1;
        stack.emplace_back(c.value, 0);
      }
      continue;
    }
    state[v] = 2;
    order_.push_back(NodeId{v});
    stack.pop_back();
  }
  for (NodeId id : order_) {
    auto& sc = scopes_[id.value];
    if (const auto* leaf = std::get_if<LeafNode>(&nodes_[id.value])) {
      sc = {leaf->feature};
    } else if (const auto* ch = children_of(nodes_[id.value])) {
      for (NodeId c : *ch) {
        if (c.value < n) sc.insert(sc.end(), scopes_[c.value].begin(), scopes_[c.value].end());
      }
      std::sort(sc.begin(), sc.end());
      sc.erase(std::unique(sc.begin(), sc.end()), sc.end());
    }
  }
  finalized_ = true;
}

inline ValidationReport Spn::validate() const {
  ValidationReport report;
  auto add = [&report](ViolationKind k, std::size_t id, std::string msg) {
    report.violations.push_back({k, NodeId{static_cast<std::uint32_t>(id)}, std::move(msg)});
  };
  const std::size_t n = nodes_.size();
  if (n == 0) {
    add(ViolationKind::Unreachable, 0, "empty network");
    return report;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto* ch = children_of(nodes_[i]);
    if (!ch) continue;
    if (ch->size() < 2) add(ViolationKind::TooFewChildren, i, "inner node needs at least two children");
    for (NodeId c : *ch) {
      if (c.value >= n) add(ViolationKind::DanglingChild, i, "child index out of range");
    }
  }
  if (has_cycle_) add(ViolationKind::Cycle, root_.value, "graph contains a cycle");

  std::vector<bool> reachable(n, false);
  for (NodeId id : order_) reachable[id.value] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!reachable[i]) add(ViolationKind::Unreachable, i, "node not reachable from root");
  }

  for (NodeId id : order_) {
    const Node& node = nodes_[id.value];
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      for (NodeId c : sum->children) {
        if (c.value < n && scopes_[c.value] != scopes_[id.value]) {
          add(ViolationKind::Incomplete, id.value, "sum children have different scopes");
          break;
        }
      }
      if (sum->weight_index >= sum_nodes_.size() || sum_nodes_[sum->weight_index] != id) {
        add(ViolationKind::BadWeightIndex, id.value, "sum weight index is not unique");
      }
    } else if (const auto* prod = std::get_if<ProductNode>(&node)) {
      std::size_t total = 0;
      for (NodeId c : prod->children) {
        if (c.value < n) total += scopes_[c.value].size();
      }
      if (total != scopes_[id.value].size()) {
        add(ViolationKind::NotDecomposable, id.value, "product children have overlapping scopes");
      }
    } else {
      const auto& leaf = std::get<LeafNode>(node);
      if (leaf.feature >= leaves_by_feature_.size() ||
          leaf.leaf_slot >= leaves_by_feature_[leaf.feature].size() ||
          leaves_by_feature_[leaf.feature][leaf.leaf_slot] != id) {
        add(ViolationKind::BadLeafSlot, id.value, "leaf slot does not match its feature's leaf list");
      }
    }
  }
  if (root_.value < n && scopes_[root_.value].size() != leaves_by_feature_.size()) {
    add(ViolationKind::RootScope, root_.value, "root scope must cover every feature");
  }
  return report;
}

}  // namespace abda
