#pragma once

// Binary regression tree over a fixed-arity covariate vector. Nodes live in a
// slot arena so that node ids stay stable across grow/prune edits; a pruned
// slot is recycled by the next grow.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "peerbench/error.hpp"

namespace peerbench {

using NodeId = int;
inline constexpr NodeId kNoNode = -1;

// Observations with x[covariate] <= threshold go left.
struct SplitRule {
  std::size_t covariate = 0;
  double threshold = 0.0;

  friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

struct TreeNode {
  NodeId parent = kNoNode;
  NodeId left = kNoNode;
  NodeId right = kNoNode;
  int depth = 0;
  SplitRule rule;
  bool live = true;

  bool is_leaf() const noexcept { return left == kNoNode; }
};

// Prior probability that a node at `depth` splits.
inline double split_probability(int depth, double alpha, double beta) {
  return alpha * std::pow(1.0 + depth, -beta);
}

class RegressionTree {
 public:
  RegressionTree() : RegressionTree(0) {}
  explicit RegressionTree(std::size_t arity) : arity_(arity) { nodes_.push_back(TreeNode{}); }

  std::size_t arity() const noexcept { return arity_; }
  static constexpr NodeId root() noexcept { return 0; }

  const TreeNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t slot_count() const noexcept { return nodes_.size(); }

  // Converts leaf `id` into an internal node with two fresh leaves.
  std::pair<NodeId, NodeId> grow(NodeId id, SplitRule rule) {
    if (!node(id).live || !node(id).is_leaf()) throw StateError("grow: node is not a live leaf");
    if (rule.covariate >= arity_) throw DomainError("grow: covariate index out of range");
    const int depth = node(id).depth + 1;
    const NodeId l = allocate(id, depth);
    const NodeId r = allocate(id, depth);
    auto& n = at(id);
    n.left = l;
    n.right = r;
    n.rule = rule;
    return {l, r};
  }

  // Collapses internal node `id`, whose children must both be leaves.
  void prune(NodeId id) {
    const auto& n = node(id);
    if (n.is_leaf()) throw StateError("prune: node is a leaf");
    if (!node(n.left).is_leaf() || !node(n.right).is_leaf())
      throw StateError("prune: children are not both leaves");
    release(n.left);
    release(n.right);
    auto& m = at(id);
    m.left = m.right = kNoNode;
    m.rule = {};
  }

  void set_rule(NodeId id, SplitRule rule) {
    if (node(id).is_leaf()) throw StateError("set_rule: node is a leaf");
    at(id).rule = rule;
  }

  NodeId route(std::span<const double> x) const {
    if (x.size() != arity_)
      throw DomainError("route: covariate vector has " + std::to_string(x.size()) + " entries, tree expects " +
                        std::to_string(arity_));
    return route_unchecked(x.data());
  }

  NodeId route_unchecked(const double* x) const noexcept {
    NodeId id = root();
    while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
      const auto& n = nodes_[static_cast<std::size_t>(id)];
      id = x[n.rule.covariate] <= n.rule.threshold ? n.left : n.right;
    }
    return id;
  }

  bool is_ancestor_or_self(NodeId ancestor, NodeId id) const noexcept {
    while (id != kNoNode) {
      if (id == ancestor) return true;
      id = nodes_[static_cast<std::size_t>(id)].parent;
    }
    return false;
  }

  // Live node ids in depth-first (pre-)order.
  std::vector<NodeId> preorder(NodeId from = root()) const {
    std::vector<NodeId> out, stack{from};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      out.push_back(id);
      const auto& n = node(id);
      if (!n.is_leaf()) {
        stack.push_back(n.right);
        stack.push_back(n.left);
      }
    }
    return out;
  }

  std::vector<NodeId> leaves() const {
    std::vector<NodeId> out;
    for (NodeId id : preorder())
      if (node(id).is_leaf()) out.push_back(id);
    return out;
  }

  std::vector<NodeId> internal_nodes() const {
    std::vector<NodeId> out;
    for (NodeId id : preorder())
      if (!node(id).is_leaf()) out.push_back(id);
    return out;
  }

  // Internal nodes whose children are both leaves (prunable).
  std::vector<NodeId> prunable_nodes() const {
    std::vector<NodeId> out;
    for (NodeId id : internal_nodes()) {
      const auto& n = node(id);
      if (node(n.left).is_leaf() && node(n.right).is_leaf()) out.push_back(id);
    }
    return out;
  }

  // Internal nodes with an internal parent; each names a (parent, child) pair.
  std::vector<NodeId> swappable_children() const {
    std::vector<NodeId> out;
    for (NodeId id : internal_nodes())
      if (id != root()) out.push_back(id);
    return out;
  }

  std::size_t leaf_count() const { return leaves().size(); }

  int depth() const {
    int d = 0;
    for (NodeId id : preorder()) d = std::max(d, node(id).depth);
    return d;
  }

  // Structure-only equality: same shape and rules in preorder, slots ignored.
  bool same_structure(const RegressionTree& other) const {
    const auto a = preorder(), b = other.preorder();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& x = node(a[i]);
      const auto& y = other.node(b[i]);
      if (x.is_leaf() != y.is_leaf()) return false;
      if (!x.is_leaf() && !(x.rule == y.rule)) return false;
    }
    return true;
  }

 private:
  TreeNode& at(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }

  NodeId allocate(NodeId parent, int depth) {
    TreeNode fresh;
    fresh.parent = parent;
    fresh.depth = depth;
    if (!free_.empty()) {
      const NodeId id = free_.back();
      free_.pop_back();
      at(id) = fresh;
      return id;
    }
    nodes_.push_back(fresh);
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  void release(NodeId id) {
    at(id).live = false;
    free_.push_back(id);
  }

  std::size_t arity_;
  std::vector<TreeNode> nodes_;
  std::vector<NodeId> free_;
};

}  // namespace peerbench
