#pragma once

// Metropolis-Hastings over single regression trees with normal-inverse-gamma
// leaves (leaf parameters integrated out in the acceptance ratio), followed by
// posterior-mean benchmark scores y_i = E[(z_i - mu_leaf) / sigma_leaf].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "peerbench/error.hpp"
#include "peerbench/leaf_model.hpp"
#include "peerbench/mcmc.hpp"
#include "peerbench/normal.hpp"
#include "peerbench/tree.hpp"
#include "peerbench/tree_prior.hpp"

namespace peerbench {

enum class MoveType { kGrow = 0, kPrune = 1, kChange = 2, kSwap = 3 };

inline const char* move_name(MoveType m) {
  static constexpr std::array<const char*, 4> names{"grow", "prune", "change", "swap"};
  return names[static_cast<std::size_t>(m)];
}

struct MoveMix {
  std::array<double, 4> weight{0.25, 0.25, 0.40, 0.10};

  void validate() const {
    double total = 0.0;
    for (double w : weight) {
      if (!(w >= 0.0)) throw ConfigError("move weights must be nonnegative");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("move weights must not all be zero");
    if (weight[0] <= 0.0 || weight[1] <= 0.0) throw ConfigError("grow and prune weights must be positive");
  }
};

struct TreeSamplerConfig {
  TreePriorConfig prior;
  MoveMix moves;
  McmcSchedule schedule;
  // With the likelihood off the chain targets the tree prior alone.
  bool use_likelihood = true;

  void validate() const {
    prior.validate();
    moves.validate();
    schedule.validate();
  }
};

// One retained posterior draw: the tree and (mu, sigma) for each leaf slot.
struct TreeDraw {
  RegressionTree tree;
  std::vector<LeafParams> leaf;

  const LeafParams& at(std::span<const double> x) const { return leaf[static_cast<std::size_t>(tree.route(x))]; }
};

// Running sums of per-observation benchmark scores; chains merge by adding.
struct BenchmarkAccumulator {
  std::vector<double> sum;
  std::size_t draws = 0;

  void add(std::span<const double> y) {
    if (sum.empty()) sum.assign(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) sum[i] += y[i];
    ++draws;
  }

  void merge(const BenchmarkAccumulator& other) {
    if (other.draws == 0) return;
    if (draws == 0) {
      *this = other;
      return;
    }
    if (other.sum.size() != sum.size()) throw DomainError("merge: accumulators cover different data");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += other.sum[i];
    draws += other.draws;
  }

  std::vector<double> mean() const {
    if (draws == 0) throw StateError("no retained draws");
    std::vector<double> out(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) out[i] = sum[i] / static_cast<double>(draws);
    return out;
  }
};

struct MoveAvailability {
  std::size_t growable = 0;
  std::size_t prunable = 0;
  std::size_t internal = 0;
  std::size_t swappable = 0;

  std::size_t targets(MoveType m) const noexcept {
    switch (m) {
      case MoveType::kGrow: return growable;
      case MoveType::kPrune: return prunable;
      case MoveType::kChange: return internal;
      case MoveType::kSwap: return swappable;
    }
    return 0;
  }

  // Probability of choosing move m once moves without a target are excluded.
  double probability(MoveType m, const MoveMix& mix) const {
    double total = 0.0;
    for (int k = 0; k < 4; ++k)
      if (targets(static_cast<MoveType>(k)) > 0) total += mix.weight[static_cast<std::size_t>(k)];
    if (targets(m) == 0 || total <= 0.0) return 0.0;
    return mix.weight[static_cast<std::size_t>(m)] / total;
  }
};

struct Proposal {
  MoveType move = MoveType::kGrow;
  NodeId target = kNoNode;
  bool valid = false;
  RegressionTree tree;
  std::vector<NodeEval> eval;
  std::vector<std::pair<NodeId, std::vector<std::uint32_t>>> leaf_members;
  double log_prior_ratio = 0.0;
  double log_likelihood_ratio = 0.0;
  double log_proposal_ratio = 0.0;

  double log_acceptance() const noexcept {
    return valid ? log_prior_ratio + log_likelihood_ratio + log_proposal_ratio
                 : -std::numeric_limits<double>::infinity();
  }
};

class TreeSamplerState {
 public:
  TreeSamplerState(std::shared_ptr<const TrainingData> data, std::vector<double> z, TreeSamplerConfig cfg)
      : data_(std::move(data)), z_(std::move(z)), cfg_(std::move(cfg)), tree_(data_->cols()) {
    cfg_.validate();
    if (data_->rows() == 0) throw DomainError("tree sampler: empty dataset");
    if (z_.size() != data_->rows()) throw DomainError("tree sampler: score count does not match covariates");
    leaf_of_.assign(data_->rows(), RegressionTree::root());
    evaluate_subtree(tree_, RegressionTree::root(), NodePoints::all(*data_), *data_, z_, cfg_.prior, eval_, nullptr);
  }

  const TrainingData& data() const noexcept { return *data_; }
  std::span<const double> scores() const noexcept { return z_; }
  const TreeSamplerConfig& config() const noexcept { return cfg_; }
  const RegressionTree& tree() const noexcept { return tree_; }
  const std::vector<NodeEval>& eval() const noexcept { return eval_; }
  const std::vector<NodeId>& allocation() const noexcept { return leaf_of_; }
  std::size_t iteration() const noexcept { return iteration_; }
  const BenchmarkAccumulator& benchmarks() const noexcept { return accumulator_; }
  const std::vector<TreeDraw>& draws() const noexcept { return draws_; }
  const std::array<std::size_t, 4>& proposed() const noexcept { return proposed_; }
  const std::array<std::size_t, 4>& accepted() const noexcept { return accepted_; }

  double log_prior() const { return sum_log_prior(tree_, eval_); }
  double log_likelihood() const { return sum_log_likelihood(tree_, eval_); }

  MoveAvailability availability() const { return availability_of(tree_, eval_); }

  // Observations currently reaching `id`.
  NodePoints points_at(NodeId id) const {
    if (id == RegressionTree::root()) return NodePoints::all(*data_);
    std::vector<std::uint8_t> under(tree_.slot_count(), 0);
    for (NodeId leaf : tree_.leaves()) under[static_cast<std::size_t>(leaf)] = tree_.is_ancestor_or_self(id, leaf);
    std::vector<std::uint8_t> mark(data_->rows());
    for (std::size_t i = 0; i < mark.size(); ++i) mark[i] = under[static_cast<std::size_t>(leaf_of_[i])];
    return NodePoints::filter(*data_, mark);
  }

  template <class Rng>
  Proposal propose_grow(NodeId leaf, Rng& rng) const {
    const auto pts = points_at(leaf);
    const auto space = analyze_rules(pts, tree_.node(leaf).depth, *data_, cfg_.prior);
    const auto drawn = draw_rule(space, pts, *data_, cfg_.prior, rng);
    return propose_grow(leaf, drawn.rule);
  }

  Proposal propose_grow(NodeId leaf, const SplitRule& rule) const {
    const auto before = availability();
    Proposal p = start(MoveType::kGrow, leaf);
    if (!tree_.node(leaf).is_leaf()) throw StateError("propose_grow: target is not a leaf");
    p.tree.grow(leaf, rule);
    if (!finish(p, leaf)) return p;
    const auto after = availability_of(p.tree, p.eval);
    const double log_rule = p.eval[static_cast<std::size_t>(leaf)].log_rule;
    const double fwd = std::log(before.probability(MoveType::kGrow, cfg_.moves)) -
                       std::log(static_cast<double>(before.growable)) + log_rule;
    const double rev = std::log(after.probability(MoveType::kPrune, cfg_.moves)) -
                       std::log(static_cast<double>(after.prunable));
    p.log_proposal_ratio = rev - fwd;
    return p;
  }

  Proposal propose_prune(NodeId node) const {
    const auto before = availability();
    Proposal p = start(MoveType::kPrune, node);
    p.tree.prune(node);
    if (!finish(p, node)) return p;
    const auto after = availability_of(p.tree, p.eval);
    const double fwd = std::log(before.probability(MoveType::kPrune, cfg_.moves)) -
                       std::log(static_cast<double>(before.prunable));
    const double rev = std::log(after.probability(MoveType::kGrow, cfg_.moves)) -
                       std::log(static_cast<double>(after.growable)) +
                       eval_[static_cast<std::size_t>(node)].log_rule;
    p.log_proposal_ratio = rev - fwd;
    return p;
  }

  template <class Rng>
  Proposal propose_change(NodeId node, Rng& rng) const {
    const auto pts = points_at(node);
    const auto space = analyze_rules(pts, tree_.node(node).depth, *data_, cfg_.prior);
    const auto drawn = draw_rule(space, pts, *data_, cfg_.prior, rng);
    return propose_change(node, drawn.rule);
  }

  Proposal propose_change(NodeId node, const SplitRule& rule) const {
    const auto before = availability();
    Proposal p = start(MoveType::kChange, node);
    p.tree.set_rule(node, rule);
    if (!finish(p, node)) return p;
    const auto after = availability_of(p.tree, p.eval);
    const double fwd = std::log(before.probability(MoveType::kChange, cfg_.moves)) +
                       p.eval[static_cast<std::size_t>(node)].log_rule;
    const double rev = std::log(after.probability(MoveType::kChange, cfg_.moves)) +
                       eval_[static_cast<std::size_t>(node)].log_rule;
    p.log_proposal_ratio = rev - fwd;  // 1/|internal| cancels
    return p;
  }

  // Exchanges the rules of internal node `child` and its parent.
  Proposal propose_swap(NodeId child) const {
    const auto before = availability();
    const NodeId parent = tree_.node(child).parent;
    if (parent == kNoNode || tree_.node(child).is_leaf()) throw StateError("propose_swap: not an internal child");
    Proposal p = start(MoveType::kSwap, parent);
    const SplitRule pr = tree_.node(parent).rule;
    p.tree.set_rule(parent, tree_.node(child).rule);
    p.tree.set_rule(child, pr);
    if (!finish(p, parent)) return p;
    const auto after = availability_of(p.tree, p.eval);
    p.log_proposal_ratio = std::log(after.probability(MoveType::kSwap, cfg_.moves)) -
                           std::log(before.probability(MoveType::kSwap, cfg_.moves));
    return p;
  }

  // Draws a move type among those with a legal target, then a target.
  template <class Rng>
  Proposal propose_move(Rng& rng) const {
    const auto avail = availability();
    std::array<double, 4> w{};
    for (int k = 0; k < 4; ++k) w[static_cast<std::size_t>(k)] = avail.probability(static_cast<MoveType>(k), cfg_.moves);
    std::discrete_distribution<int> pick_move(w.begin(), w.end());
    const auto move = static_cast<MoveType>(pick_move(rng));
    auto pick = [&](const std::vector<NodeId>& v) {
      std::uniform_int_distribution<std::size_t> u(0, v.size() - 1);
      return v[u(rng)];
    };
    switch (move) {
      case MoveType::kGrow: {
        std::vector<NodeId> growable;
        for (NodeId id : tree_.leaves())
          if (eval_[static_cast<std::size_t>(id)].splittable) growable.push_back(id);
        return propose_grow(pick(growable), rng);
      }
      case MoveType::kPrune: return propose_prune(pick(tree_.prunable_nodes()));
      case MoveType::kChange: return propose_change(pick(tree_.internal_nodes()), rng);
      case MoveType::kSwap: return propose_swap(pick(tree_.swappable_children()));
    }
    throw StateError("unreachable move type");
  }

  void accept(Proposal&& p) {
    tree_ = std::move(p.tree);
    eval_ = std::move(p.eval);
    for (auto& [leaf, members] : p.leaf_members)
      for (std::uint32_t i : members) leaf_of_[i] = leaf;
  }

  template <class Rng>
  bool mh_step(Rng& rng) {
    Proposal p = propose_move(rng);
    ++proposed_[static_cast<std::size_t>(p.move)];
    ++iteration_;
    if (!p.valid) return false;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double log_a = p.log_acceptance();
    if (log_a >= 0.0 || std::log(unif(rng)) < log_a) {
      ++accepted_[static_cast<std::size_t>(p.move)];
      accept(std::move(p));
      return true;
    }
    return false;
  }

  // Draws every leaf's (mu, sigma) from its conditional posterior, records the
  // draw and adds y_i = (z_i - mu) / sigma to the running sums.
  template <class Rng>
  void retain_draw(Rng& rng) {
    TreeDraw draw{tree_, std::vector<LeafParams>(tree_.slot_count())};
    for (NodeId leaf : tree_.leaves()) {
      const auto& s = eval_[static_cast<std::size_t>(leaf)].stats;
      draw.leaf[static_cast<std::size_t>(leaf)] = draw_leaf_params(leaf_posterior(s, cfg_.prior.leaf), rng);
    }
    std::vector<double> y(z_.size());
    for (std::size_t i = 0; i < z_.size(); ++i) {
      const auto& lp = draw.leaf[static_cast<std::size_t>(leaf_of_[i])];
      y[i] = (z_[i] - lp.mu) / lp.sigma;
    }
    accumulator_.add(y);
    draws_.push_back(std::move(draw));
  }

 private:
  static double sum_log_prior(const RegressionTree& t, const std::vector<NodeEval>& e) {
    double s = 0.0;
    for (NodeId id : t.preorder()) s += e[static_cast<std::size_t>(id)].log_prior;
    return s;
  }

  static double sum_log_likelihood(const RegressionTree& t, const std::vector<NodeEval>& e) {
    double s = 0.0;
    for (NodeId id : t.leaves()) s += e[static_cast<std::size_t>(id)].log_marginal;
    return s;
  }

  static MoveAvailability availability_of(const RegressionTree& t, const std::vector<NodeEval>& e) {
    MoveAvailability a;
    for (NodeId id : t.preorder()) {
      const auto& n = t.node(id);
      if (n.is_leaf()) {
        if (e[static_cast<std::size_t>(id)].splittable) ++a.growable;
        continue;
      }
      ++a.internal;
      if (id != RegressionTree::root()) ++a.swappable;
      if (t.node(n.left).is_leaf() && t.node(n.right).is_leaf()) ++a.prunable;
    }
    return a;
  }

  Proposal start(MoveType move, NodeId target) const {
    Proposal p;
    p.move = move;
    p.target = target;
    p.tree = tree_;
    p.eval = eval_;
    return p;
  }

  // Re-evaluates the edited subtree and fills the prior and likelihood ratios.
  bool finish(Proposal& p, NodeId subtree_root) const {
    p.valid = evaluate_subtree(p.tree, subtree_root, points_at(subtree_root), *data_, z_, cfg_.prior, p.eval,
                               &p.leaf_members);
    if (!p.valid) return false;
    p.log_prior_ratio = sum_log_prior(p.tree, p.eval) - log_prior();
    p.log_likelihood_ratio = cfg_.use_likelihood ? sum_log_likelihood(p.tree, p.eval) - log_likelihood() : 0.0;
    return true;
  }

  std::shared_ptr<const TrainingData> data_;
  std::vector<double> z_;
  TreeSamplerConfig cfg_;
  RegressionTree tree_;
  std::vector<NodeEval> eval_;
  std::vector<NodeId> leaf_of_;
  std::size_t iteration_ = 0;
  BenchmarkAccumulator accumulator_;
  std::vector<TreeDraw> draws_;
  std::array<std::size_t, 4> proposed_{};
  std::array<std::size_t, 4> accepted_{};
};

// Runs the full schedule: burn-in, then a retained draw every `thin` steps.
// An optional observer sees the state after every iteration.
template <class Observer>
TreeSamplerState run_tree_sampler(std::shared_ptr<const TrainingData> data, std::vector<double> z,
                                  const TreeSamplerConfig& cfg, Observer&& observe) {
  TreeSamplerState state(std::move(data), std::move(z), cfg);
  std::mt19937_64 rng(cfg.schedule.seed);
  const auto& s = cfg.schedule;
  for (std::size_t t = 0; t < s.iterations; ++t) {
    state.mh_step(rng);
    if (s.retains(t)) state.retain_draw(rng);
    observe(state, t);
  }
  return state;
}

inline TreeSamplerState run_tree_sampler(std::shared_ptr<const TrainingData> data, std::vector<double> z,
                                         const TreeSamplerConfig& cfg) {
  return run_tree_sampler(std::move(data), std::move(z), cfg, [](const TreeSamplerState&, std::size_t) {});
}

struct PredictiveInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Quantile of an equally weighted mixture of normals (safeguarded Newton).
inline double mixture_quantile(std::span<const LeafParams> comps, double p) {
  if (comps.empty()) throw StateError("mixture_quantile: no components");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : comps) {
    lo = std::min(lo, c.mu - 40.0 * c.sigma);
    hi = std::max(hi, c.mu + 40.0 * c.sigma);
  }
  const double k = static_cast<double>(comps.size());
  auto cdf_pdf = [&](double q) {
    double f = 0.0, d = 0.0;
    for (const auto& c : comps) {
      const double u = (q - c.mu) / c.sigma;
      f += normal_cdf(u);
      d += normal_pdf(u) / c.sigma;
    }
    return std::pair{f / k - p, d / k};
  };
  double q = 0.0;
  for (const auto& c : comps) q += c.mu;
  q /= k;
  for (int it = 0; it < 200; ++it) {
    const auto [f, d] = cdf_pdf(q);
    if (f > 0.0) hi = q; else lo = q;
    double next = d > 0.0 ? q - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - q) <= 1e-13 * (1.0 + std::fabs(q)) || hi - lo <= 1e-13 * (1.0 + std::fabs(q))) return next;
    q = next;
  }
  return q;
}

inline PredictiveInterval mixture_interval(std::span<const LeafParams> comps, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("predictive interval level must lie in (0,1)");
  PredictiveInterval out;
  for (const auto& c : comps) out.mean += c.mu;
  out.mean /= static_cast<double>(comps.size());
  out.lower = mixture_quantile(comps, 0.5 * (1.0 - level));
  out.upper = mixture_quantile(comps, 0.5 * (1.0 + level));
  return out;
}

// Mixture over retained draws of N(mu_leaf(x), sigma_leaf(x)^2).
inline PredictiveInterval predictive_interval(std::span<const TreeDraw> draws, std::span<const double> x,
                                              double level) {
  if (draws.empty()) throw StateError("predictive_interval: no retained draws");
  std::vector<LeafParams> comps;
  comps.reserve(draws.size());
  for (const auto& d : draws) comps.push_back(d.at(x));
  return mixture_interval(comps, level);
}

inline PredictiveInterval predictive_interval(const TreeSamplerState& state, std::span<const double> x,
                                              double level) {
  return predictive_interval(state.draws(), x, level);
}

// Intervals for every row of `data`. Rows that fall in the same leaf in every
// draw share one mixture, so each distinct leaf pattern is solved once.
inline std::vector<PredictiveInterval> predictive_intervals(std::span<const TreeDraw> draws,
                                                            const TrainingData& data, double level) {
  if (draws.empty()) throw StateError("predictive_intervals: no retained draws");
  const std::size_t n = data.rows();
  std::vector<std::uint32_t> group(n, 0), next(n);
  std::uint32_t groups = 1;
  std::unordered_map<std::uint64_t, std::uint32_t> ids;
  for (const auto& d : draws) {
    ids.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const auto leaf = static_cast<std::uint64_t>(d.tree.route_unchecked(data.row(i).data()));
      const std::uint64_t key = (static_cast<std::uint64_t>(group[i]) << 32) | leaf;
      const auto [it, fresh] = ids.emplace(key, static_cast<std::uint32_t>(ids.size()));
      next[i] = it->second;
    }
    groups = static_cast<std::uint32_t>(ids.size());
    group.swap(next);
  }
  std::vector<std::size_t> representative(groups, n);
  for (std::size_t i = 0; i < n; ++i)
    if (representative[group[i]] == n) representative[group[i]] = i;
  std::vector<PredictiveInterval> per_group(groups);
  for (std::uint32_t g = 0; g < groups; ++g)
    per_group[g] = predictive_interval(draws, data.row(representative[g]), level);
  std::vector<PredictiveInterval> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = per_group[group[i]];
  return out;
}

}  // namespace peerbench
