#pragma once

// Tree prior. A node at depth d splits with probability alpha (1+d)^-beta;
// the covariate is uniform over covariates that admit a legal threshold and
// the threshold is uniform over that covariate's legal values. A threshold is
// legal when both children keep at least `min_leaf` points. Nodes with no
// legal rule, or at the depth cap, are terminal with probability one.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "peerbench/error.hpp"
#include "peerbench/leaf_model.hpp"
#include "peerbench/tree.hpp"

namespace peerbench {

// Where split thresholds are drawn from: values observed at the node being
// split, or any value of the covariate observed in the whole training set.
enum class ThresholdPool { kNode, kGlobal };

struct TreePriorConfig {
  double alpha = 0.5;
  double beta = 2.0;
  LeafPrior leaf;
  std::size_t min_leaf = 10;
  int max_depth = 25;
  ThresholdPool thresholds = ThresholdPool::kNode;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
    if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
    leaf.validate();
  }
};

// Covariates with per-column sort orders and dense ranks, built once.
class TrainingData {
 public:
  TrainingData(std::vector<double> x_row_major, std::size_t rows, std::size_t cols)
      : x_(std::move(x_row_major)), rows_(rows), cols_(cols) {
    if (x_.size() != rows * cols) throw DomainError("TrainingData: matrix size mismatch");
    if (rows > std::numeric_limits<std::uint32_t>::max()) throw DomainError("TrainingData: too many rows");
    for (double v : x_)
      if (!std::isfinite(v)) throw DomainError("TrainingData: non-finite covariate");
    order_.resize(cols);
    rank_.assign(rows * cols, 0);
    distinct_.resize(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      auto& ord = order_[j];
      ord.resize(rows);
      std::iota(ord.begin(), ord.end(), 0u);
      std::stable_sort(ord.begin(), ord.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, j) < x(b, j); });
      for (std::uint32_t i : ord) {
        const double v = x(i, j);
        if (distinct_[j].empty() || distinct_[j].back() != v) distinct_[j].push_back(v);
        rank_[i * cols + j] = static_cast<std::uint32_t>(distinct_[j].size() - 1);
      }
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double x(std::size_t i, std::size_t j) const noexcept { return x_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const noexcept { return {x_.data() + i * cols_, cols_}; }
  const std::vector<std::uint32_t>& order(std::size_t j) const noexcept { return order_[j]; }
  std::uint32_t rank(std::size_t i, std::size_t j) const noexcept { return rank_[i * cols_ + j]; }
  const std::vector<double>& distinct(std::size_t j) const noexcept { return distinct_[j]; }

 private:
  std::vector<double> x_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint32_t> rank_;
  std::vector<std::vector<double>> distinct_;
};

// The observations reaching one node: their indices in ascending order, plus
// one list per covariate sorted by that covariate.
struct NodePoints {
  std::vector<std::uint32_t> members;
  std::vector<std::vector<std::uint32_t>> by_covariate;

  std::size_t size() const noexcept { return members.size(); }

  static NodePoints all(const TrainingData& data) {
    NodePoints p;
    p.members.resize(data.rows());
    std::iota(p.members.begin(), p.members.end(), 0u);
    p.by_covariate.resize(data.cols());
    for (std::size_t j = 0; j < data.cols(); ++j) p.by_covariate[j] = data.order(j);
    return p;
  }

  // Subset selected by `mark[i] != 0`, preserving every ordering.
  static NodePoints filter(const TrainingData& data, const std::vector<std::uint8_t>& mark) {
    NodePoints p;
    for (std::uint32_t i = 0; i < data.rows(); ++i)
      if (mark[i]) p.members.push_back(i);
    p.by_covariate.resize(data.cols());
    for (std::size_t j = 0; j < data.cols(); ++j) {
      auto& out = p.by_covariate[j];
      out.reserve(p.members.size());
      for (std::uint32_t i : data.order(j))
        if (mark[i]) out.push_back(i);
    }
    return p;
  }

  std::pair<NodePoints, NodePoints> split(const TrainingData& data, const SplitRule& rule) const {
    std::pair<NodePoints, NodePoints> out;
    auto goes_left = [&](std::uint32_t i) { return data.x(i, rule.covariate) <= rule.threshold; };
    auto part = [&](const std::vector<std::uint32_t>& src, std::vector<std::uint32_t>& l,
                    std::vector<std::uint32_t>& r) {
      for (std::uint32_t i : src) (goes_left(i) ? l : r).push_back(i);
    };
    part(members, out.first.members, out.second.members);
    out.first.by_covariate.resize(by_covariate.size());
    out.second.by_covariate.resize(by_covariate.size());
    for (std::size_t j = 0; j < by_covariate.size(); ++j) {
      out.first.by_covariate[j].reserve(out.first.members.size());
      out.second.by_covariate[j].reserve(out.second.members.size());
      part(by_covariate[j], out.first.by_covariate[j], out.second.by_covariate[j]);
    }
    return out;
  }
};

// Legal thresholds for each covariate at one node.
struct RuleSpace {
  struct Range {
    std::size_t count = 0;
    std::size_t first_pos = 0;     // node pool: first legal position in the sorted list
    std::uint32_t first_rank = 0;  // global pool: first legal dense rank
  };
  std::vector<Range> ranges;
  std::vector<std::size_t> eligible;  // covariates with count > 0
  bool depth_capped = false;

  bool splittable() const noexcept { return !depth_capped && !eligible.empty(); }
};

inline RuleSpace analyze_rules(const NodePoints& pts, int depth, const TrainingData& data,
                               const TreePriorConfig& cfg) {
  RuleSpace space;
  space.depth_capped = depth >= cfg.max_depth;
  space.ranges.resize(data.cols());
  const std::size_t n = pts.size();
  const std::size_t m = cfg.min_leaf;
  if (n < 2 * m) return space;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    const auto& s = pts.by_covariate[j];
    auto val = [&](std::size_t k) { return data.x(s[k], j); };
    const double hi_value = val(n - m);  // legal thresholds lie below this value
    auto& r = space.ranges[j];
    if (cfg.thresholds == ThresholdPool::kGlobal) {
      r.first_rank = data.rank(s[m - 1], j);
      r.count = data.rank(s[n - m], j) - r.first_rank;
    } else {
      r.first_pos = m - 1;
      double last = 0.0;
      for (std::size_t k = m - 1; k < n && val(k) < hi_value; ++k) {
        if (r.count == 0 || val(k) != last) ++r.count;
        last = val(k);
      }
    }
    if (r.count > 0) space.eligible.push_back(j);
  }
  return space;
}

// Log prior probability of `rule` at this node, or nullopt if it is illegal.
inline std::optional<double> rule_log_probability(const RuleSpace& space, const NodePoints& pts,
                                                  const SplitRule& rule, const TrainingData& data,
                                                  const TreePriorConfig& cfg) {
  if (!space.splittable() || rule.covariate >= data.cols()) return std::nullopt;
  const auto& r = space.ranges[rule.covariate];
  if (r.count == 0) return std::nullopt;
  const auto& s = pts.by_covariate[rule.covariate];
  const std::size_t j = rule.covariate;
  const auto it = std::upper_bound(s.begin(), s.end(), rule.threshold,
                                   [&](double t, std::uint32_t i) { return t < data.x(i, j); });
  const std::size_t below = static_cast<std::size_t>(it - s.begin());
  const std::size_t n = s.size();
  if (below < cfg.min_leaf || n - below < cfg.min_leaf) return std::nullopt;
  if (cfg.thresholds == ThresholdPool::kNode) {
    if (data.x(s[below - 1], j) != rule.threshold) return std::nullopt;
  } else {
    const auto& d = data.distinct(j);
    if (!std::binary_search(d.begin(), d.end(), rule.threshold)) return std::nullopt;
  }
  return -std::log(static_cast<double>(space.eligible.size())) - std::log(static_cast<double>(r.count));
}

struct DrawnRule {
  SplitRule rule;
  double log_probability;
};

template <class Rng>
DrawnRule draw_rule(const RuleSpace& space, const NodePoints& pts, const TrainingData& data,
                    const TreePriorConfig& cfg, Rng& rng) {
  if (!space.splittable()) throw StateError("draw_rule: node has no legal split");
  std::uniform_int_distribution<std::size_t> pick_cov(0, space.eligible.size() - 1);
  const std::size_t j = space.eligible[pick_cov(rng)];
  const auto& r = space.ranges[j];
  std::uniform_int_distribution<std::size_t> pick(0, r.count - 1);
  std::size_t u = pick(rng);
  double threshold = 0.0;
  if (cfg.thresholds == ThresholdPool::kGlobal) {
    threshold = data.distinct(j)[r.first_rank + u];
  } else {
    const auto& s = pts.by_covariate[j];
    std::size_t k = r.first_pos;
    threshold = data.x(s[k], j);
    while (u > 0) {
      ++k;
      const double v = data.x(s[k], j);
      if (v != threshold) {
        threshold = v;
        --u;
      }
    }
  }
  const double logp =
      -std::log(static_cast<double>(space.eligible.size())) - std::log(static_cast<double>(r.count));
  return {{j, threshold}, logp};
}

// Generative draw from the tree prior.
template <class Rng>
RegressionTree sample_prior_tree(const TreePriorConfig& cfg, const TrainingData& data, Rng& rng) {
  if (data.rows() == 0) throw DomainError("sample_prior_tree: empty dataset");
  RegressionTree tree(data.cols());
  std::vector<std::pair<NodeId, NodePoints>> stack;
  stack.emplace_back(RegressionTree::root(), NodePoints::all(data));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (!stack.empty()) {
    auto [id, pts] = std::move(stack.back());
    stack.pop_back();
    const int depth = tree.node(id).depth;
    const auto space = analyze_rules(pts, depth, data, cfg);
    if (!space.splittable()) continue;
    if (unif(rng) >= split_probability(depth, cfg.alpha, cfg.beta)) continue;
    const auto drawn = draw_rule(space, pts, data, cfg, rng);
    const auto [l, r] = tree.grow(id, drawn.rule);
    auto [lp, rp] = pts.split(data, drawn.rule);
    stack.emplace_back(r, std::move(rp));
    stack.emplace_back(l, std::move(lp));
  }
  return tree;
}

// Cached per-node quantities of an evaluated tree.
struct NodeEval {
  double log_prior = 0.0;     // this node's factor in the tree prior
  double log_rule = 0.0;      // internal nodes: log probability of the rule
  double log_marginal = 0.0;  // leaves: NIG log marginal likelihood
  LeafStats stats;            // leaves
  bool splittable = false;    // leaves: a legal rule exists and depth < cap
};

// Evaluates the subtree rooted at `id`, given the points reaching it.
// Writes NodeEval entries into `eval` (indexed by node id) and, for each
// leaf, its member list into `leaf_members`. Returns false if some internal
// rule in the subtree is illegal.
inline bool evaluate_subtree(const RegressionTree& tree, NodeId id, NodePoints pts, const TrainingData& data,
                             std::span<const double> z, const TreePriorConfig& cfg,
                             std::vector<NodeEval>& eval,
                             std::vector<std::pair<NodeId, std::vector<std::uint32_t>>>* leaf_members) {
  if (eval.size() < tree.slot_count()) eval.resize(tree.slot_count());
  std::vector<std::pair<NodeId, NodePoints>> stack;
  stack.emplace_back(id, std::move(pts));
  std::vector<double> buf;
  while (!stack.empty()) {
    auto [nid, p] = std::move(stack.back());
    stack.pop_back();
    const auto& node = tree.node(nid);
    const auto space = analyze_rules(p, node.depth, data, cfg);
    NodeEval e;
    if (node.is_leaf()) {
      e.splittable = space.splittable();
      e.log_prior = e.splittable ? std::log1p(-split_probability(node.depth, cfg.alpha, cfg.beta)) : 0.0;
      buf.clear();
      for (std::uint32_t i : p.members) buf.push_back(z[i]);
      e.stats = LeafStats::of(buf);
      e.log_marginal = leaf_log_marginal(e.stats, cfg.leaf);
      eval[static_cast<std::size_t>(nid)] = e;
      if (leaf_members) leaf_members->emplace_back(nid, std::move(p.members));
      continue;
    }
    const auto logp = rule_log_probability(space, p, node.rule, data, cfg);
    if (!logp) return false;
    e.log_rule = *logp;
    e.log_prior = std::log(split_probability(node.depth, cfg.alpha, cfg.beta)) + *logp;
    eval[static_cast<std::size_t>(nid)] = e;
    auto [lp, rp] = p.split(data, node.rule);
    stack.emplace_back(node.right, std::move(rp));
    stack.emplace_back(node.left, std::move(lp));
  }
  return true;
}

// Log prior of a whole tree (nullopt if the tree is illegal for the data).
inline std::optional<double> tree_log_prior(const RegressionTree& tree, const TrainingData& data,
                                            const TreePriorConfig& cfg) {
  std::vector<NodeEval> eval;
  const std::vector<double> z(data.rows(), 0.0);
  if (!evaluate_subtree(tree, RegressionTree::root(), NodePoints::all(data), data, z, cfg, eval, nullptr))
    return std::nullopt;
  double total = 0.0;
  for (NodeId id : tree.preorder()) total += eval[static_cast<std::size_t>(id)].log_prior;
  return total;
}

}  // namespace peerbench
