#pragma once

// Simultaneous Bayesian testing of benchmarked trajectories.
//
//   z_i = f_i + e_i,   e_i ~ N(0, Sigma(phi_i, v_i))   (stationary AR(1) at the
//   observed calendar times), f_i ~ w GP(0, K) + (1 - w) delta_0,
//   phi_i ~ U(0,1) (evaluated on a grid), v_i ~ IG(a, b), w ~ Beta(A, B).
//
// Each sweep draws (gamma_i, f_i) jointly with f_i integrated out of the
// gamma_i odds, then v_i by conjugacy, phi_i by griddy Gibbs, and finally w.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "peerbench/error.hpp"
#include "peerbench/mcmc.hpp"
#include "peerbench/random.hpp"

namespace peerbench {

struct Trajectory {
  std::string subject_id;
  std::vector<int> times;
  std::vector<double> values;

  std::size_t size() const noexcept { return times.size(); }

  void validate() const {
    if (times.empty()) throw DomainError("trajectory '" + subject_id + "' is empty");
    if (times.size() != values.size()) throw DomainError("trajectory '" + subject_id + "': length mismatch");
    for (std::size_t k = 1; k < times.size(); ++k)
      if (times[k] <= times[k - 1]) throw DomainError("trajectory '" + subject_id + "': times not increasing");
    for (double v : values)
      if (!std::isfinite(v)) throw DomainError("trajectory '" + subject_id + "': non-finite value");
  }
};

struct NoiseParams {
  double phi = 0.5;
  double v = 1.0;
};

struct TrajTestConfig {
  double ig_shape = 2.5;
  double ig_scale = 2.5;
  double gp_amplitude = 0.25;    // tau^2
  double gp_length_scale = 5.0;  // in periods
  double weight_a = 1.0;
  double weight_b = 1.0;
  std::optional<double> fixed_weight;  // hold w at this value instead of learning it
  McmcSchedule schedule{4000, 1000, 1, 20240101};
  std::size_t horizon = 5;
  std::size_t min_history = 10;
  std::size_t phi_grid_points = 100;
  double phi_grid_lo = 0.005;
  double phi_grid_hi = 0.995;
  std::size_t predictive_samples_per_draw = 1;

  void validate() const {
    if (!(ig_shape > 0.0 && ig_scale > 0.0)) throw ConfigError("inverse-gamma shape and scale must be > 0");
    if (!(gp_amplitude > 0.0 && gp_length_scale > 0.0)) throw ConfigError("GP amplitude and length-scale must be > 0");
    if (!(weight_a > 0.0 && weight_b > 0.0)) throw ConfigError("Beta hyperparameters must be > 0");
    if (fixed_weight && !(*fixed_weight >= 0.0 && *fixed_weight <= 1.0))
      throw ConfigError("fixed weight must lie in [0,1]");
    if (phi_grid_points < 1) throw ConfigError("phi grid needs at least one point");
    if (!(phi_grid_lo > 0.0 && phi_grid_hi < 1.0 && phi_grid_lo <= phi_grid_hi))
      throw ConfigError("phi grid must lie inside (0,1)");
    if (predictive_samples_per_draw < 1) throw ConfigError("predictive samples per draw must be >= 1");
    schedule.validate();
  }

  std::vector<double> phi_grid() const {
    std::vector<double> g(phi_grid_points);
    if (phi_grid_points == 1) {
      g[0] = 0.5 * (phi_grid_lo + phi_grid_hi);
      return g;
    }
    const double step = (phi_grid_hi - phi_grid_lo) / static_cast<double>(phi_grid_points - 1);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = phi_grid_lo + step * static_cast<double>(k);
    return g;
  }

  double prior_weight_mean() const { return fixed_weight ? *fixed_weight : weight_a / (weight_a + weight_b); }
};

// Sigma_jk = v / (1 - phi^2) * phi^|t_j - t_k| using calendar gaps.
inline Eigen::MatrixXd ar1_covariance(std::span<const int> times, double phi, double v) {
  if (!(phi >= 0.0 && phi < 1.0)) throw DomainError("ar1_covariance: phi must lie in [0,1)");
  if (!(v > 0.0)) throw DomainError("ar1_covariance: v must be > 0");
  const auto n = static_cast<Eigen::Index>(times.size());
  const double s2 = v / (1.0 - phi * phi);
  Eigen::MatrixXd m(n, n);
  if (n == 0) return m;
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  std::vector<double> power(static_cast<std::size_t>(*hi - *lo) + 1);
  power[0] = s2;
  for (std::size_t d = 1; d < power.size(); ++d) power[d] = power[d - 1] * phi;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k)
      m(j, k) = power[static_cast<std::size_t>(
          std::abs(times[static_cast<std::size_t>(j)] - times[static_cast<std::size_t>(k)]))];
  return m;
}

inline Eigen::MatrixXd sqexp_covariance(std::span<const int> rows, std::span<const int> cols, double amplitude,
                                        double length_scale) {
  if (!(amplitude > 0.0 && length_scale > 0.0)) throw DomainError("sqexp_covariance: parameters must be > 0");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  const double inv = 1.0 / (2.0 * length_scale * length_scale);
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double d = static_cast<double>(rows[j] - cols[k]);
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = amplitude * std::exp(-d * d * inv);
    }
  return m;
}

inline Eigen::MatrixXd sqexp_covariance(std::span<const int> times, double amplitude, double length_scale) {
  return sqexp_covariance(times, times, amplitude, length_scale);
}

// Cholesky factor, retrying with 1e-8 and then 1e-6 added to the diagonal.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd& m) {
  for (double jitter : {0.0, 1e-8, 1e-6}) {
    Eigen::LLT<Eigen::MatrixXd> llt;
    if (jitter == 0.0) {
      llt.compute(m);
    } else {
      Eigen::MatrixXd j = m;
      j.diagonal().array() += jitter;
      llt.compute(j);
    }
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError("covariance matrix is not positive definite after jitter");
}

inline double gaussian_log_density(const Eigen::VectorXd& z, const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::VectorXd u = llt.matrixL().solve(z);
  const auto n = static_cast<double>(z.size());
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * u.squaredNorm() - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

// Quadratic form r' R^-1 r and log|R| for the AR(1) correlation-scale matrix
// R = Sigma / v, computed in O(n) through the Markov factorisation.
struct Ar1Form {
  double quad = 0.0;
  double log_det = 0.0;
};

inline Ar1Form ar1_form(std::span<const int> times, std::span<const double> r, double phi) {
  const double one_m = 1.0 - phi * phi;
  Ar1Form out;
  out.quad = r[0] * r[0] * one_m;
  out.log_det = -std::log(one_m);
  for (std::size_t k = 1; k < r.size(); ++k) {
    const int gap = times[k] - times[k - 1];
    const double rho = gap == 1 ? phi : std::pow(phi, gap);
    const double cond = (1.0 - rho * rho) / one_m;  // conditional variance / v
    const double e = r[k] - rho * r[k - 1];
    out.quad += e * e / cond;
    out.log_det += std::log(cond);
  }
  return out;
}

inline double ar1_log_density(std::span<const int> times, std::span<const double> r, double phi, double v) {
  const auto f = ar1_form(times, r, phi);
  const auto n = static_cast<double>(r.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * v) - 0.5 * f.log_det - 0.5 * f.quad / v;
}

// log p(z | gamma, phi, v): gamma = 0 is pure AR(1) noise; gamma = 1 adds the
// GP mean, integrated out analytically.
inline double log_marginal(const Trajectory& traj, int gamma, double phi, double v, const TrajTestConfig& cfg) {
  if (!(phi >= 0.0 && phi < 1.0)) throw DomainError("log_marginal: phi must lie in [0,1)");
  if (!(v > 0.0)) throw DomainError("log_marginal: v must be > 0");
  if (gamma == 0) return ar1_log_density(traj.times, traj.values, phi, v);
  const Eigen::MatrixXd c =
      sqexp_covariance(traj.times, cfg.gp_amplitude, cfg.gp_length_scale) + ar1_covariance(traj.times, phi, v);
  const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(traj.values.data(), static_cast<Eigen::Index>(traj.size()));
  return gaussian_log_density(z, cholesky_with_jitter(c));
}

struct InverseGamma {
  double shape;
  double scale;
};

// Conditional of v given the residual z - f and phi.
inline InverseGamma v_conditional(std::span<const int> times, std::span<const double> residual, double phi,
                                  const TrajTestConfig& cfg) {
  const auto f = ar1_form(times, residual, phi);
  return {cfg.ig_shape + 0.5 * static_cast<double>(residual.size()), cfg.ig_scale + 0.5 * f.quad};
}

struct SubjectState {
  int gamma = 0;
  double p_include = 0.0;        // P(gamma = 1 | phi, v, w, data) at the last update
  std::vector<double> f;         // mean trajectory at the observed times
  std::vector<double> f_future;  // its continuation over the forecast horizon
  double phi = 0.5;
  double v = 1.0;
};

// What a forecast needs from one retained sweep.
struct SubjectDraw {
  int gamma = 0;
  double phi = 0.0;
  double v = 1.0;
  double last_residual = 0.0;
  std::vector<double> f_future;
};

namespace detail {

// Fixed per-subject quantities: prior GP covariance over observed + future times.
struct SubjectModel {
  std::vector<int> all_times;
  Eigen::MatrixXd k_all;
  std::size_t n = 0;
  std::size_t horizon = 0;

  SubjectModel(const Trajectory& traj, const TrajTestConfig& cfg) : n(traj.size()), horizon(cfg.horizon) {
    all_times = traj.times;
    for (std::size_t h = 1; h <= horizon; ++h) all_times.push_back(traj.times.back() + static_cast<int>(h));
    k_all = sqexp_covariance(all_times, cfg.gp_amplitude, cfg.gp_length_scale);
  }
};

template <class Rng>
double sample_inverse_gamma(const InverseGamma& ig, Rng& rng) {
  std::gamma_distribution<double> g(ig.shape, 1.0);
  return ig.scale / g(rng);
}

template <class Rng>
void update_subject(SubjectState& s, double w, const Trajectory& traj, const SubjectModel& model,
                    const std::vector<double>& grid, const TrajTestConfig& cfg, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(model.n);
  const auto m = static_cast<Eigen::Index>(model.n + model.horizon);
  const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(traj.values.data(), n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // (i) gamma with f integrated out.
  const Eigen::MatrixXd c = model.k_all.topLeftCorner(n, n) + ar1_covariance(traj.times, s.phi, s.v);
  const auto llt = cholesky_with_jitter(c);
  if (w <= 0.0) {
    s.gamma = 0;
    s.p_include = 0.0;
  } else if (w >= 1.0) {
    s.gamma = 1;
    s.p_include = 1.0;
  } else {
    const double log_m1 = gaussian_log_density(z, llt);
    const double log_m0 = ar1_log_density(traj.times, traj.values, s.phi, s.v);
    const double log_odds = std::log(w) - std::log1p(-w) + log_m1 - log_m0;
    const double p1 = log_odds > 0.0 ? 1.0 / (1.0 + std::exp(-log_odds)) : std::exp(log_odds) / (1.0 + std::exp(log_odds));
    s.p_include = p1;
    s.gamma = unif(rng) < p1 ? 1 : 0;
  }

  // (ii) f over observed and future times from its Gaussian conditional.
  s.f.assign(model.n, 0.0);
  s.f_future.assign(model.horizon, 0.0);
  if (s.gamma == 1) {
    const Eigen::MatrixXd a = llt.matrixL().solve(model.k_all.topRows(n));  // n x m
    const Eigen::VectorXd mean = a.transpose() * llt.matrixL().solve(z);
    Eigen::MatrixXd cov = model.k_all - a.transpose() * a;
    cov = 0.5 * (cov + cov.transpose());
    const auto chol = cholesky_with_jitter(cov);
    Eigen::VectorXd e(m);
    for (Eigen::Index k = 0; k < m; ++k) e[k] = normal(rng);
    const Eigen::VectorXd f = mean + chol.matrixL() * e;
    for (Eigen::Index k = 0; k < n; ++k) s.f[static_cast<std::size_t>(k)] = f[k];
    for (std::size_t h = 0; h < model.horizon; ++h) s.f_future[h] = f[n + static_cast<Eigen::Index>(h)];
  }

  std::vector<double> r(model.n);
  for (std::size_t k = 0; k < model.n; ++k) r[k] = traj.values[k] - s.f[k];

  // (iii) v by conjugacy.
  s.v = sample_inverse_gamma(v_conditional(traj.times, r, s.phi, cfg), rng);

  // (iv) phi by griddy Gibbs.
  std::vector<double> logp(grid.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto f = ar1_form(traj.times, r, grid[g]);
    logp[g] = -0.5 * f.log_det - 0.5 * f.quad / s.v;
    top = std::max(top, logp[g]);
  }
  double total = 0.0;
  for (double& lp : logp) total += (lp = std::exp(lp - top));
  double u = unif(rng) * total;
  std::size_t pick = grid.size() - 1;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    u -= logp[g];
    if (u <= 0.0) {
      pick = g;
      break;
    }
  }
  s.phi = grid[pick];
}

}  // namespace detail

// Seeds one random stream per subject so results do not depend on the order
// subjects are listed in.
inline std::vector<std::mt19937_64> subject_streams(std::span<const Trajectory> trajectories, std::uint64_t seed) {
  std::vector<std::mt19937_64> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) out.emplace_back(stream_seed(seed, "subject:" + t.subject_id));
  return out;
}

inline std::vector<SubjectState> initial_states(std::span<const Trajectory> trajectories, const TrajTestConfig& cfg) {
  const auto grid = cfg.phi_grid();
  std::vector<SubjectState> states(trajectories.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i].f.assign(trajectories[i].size(), 0.0);
    states[i].f_future.assign(cfg.horizon, 0.0);
    states[i].phi = grid[grid.size() / 2];
    states[i].v = cfg.ig_scale / (cfg.ig_shape + 1.0);  // prior mode
  }
  return states;
}

// One full sweep; returns the updated mixture weight.
template <class Rng>
double gibbs_sweep(std::span<SubjectState> states, double w, std::span<const Trajectory> trajectories,
                   const TrajTestConfig& cfg, std::span<std::mt19937_64> subject_rngs, Rng& global_rng) {
  if (states.size() != trajectories.size() || subject_rngs.size() != trajectories.size())
    throw DomainError("gibbs_sweep: states, trajectories and streams differ in length");
  const auto grid = cfg.phi_grid();
  std::size_t included = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const detail::SubjectModel model(trajectories[i], cfg);
    detail::update_subject(states[i], w, trajectories[i], model, grid, cfg, subject_rngs[i]);
    included += static_cast<std::size_t>(states[i].gamma);
  }
  if (cfg.fixed_weight) return *cfg.fixed_weight;
  const double ones = cfg.weight_a + static_cast<double>(included);
  const double zeros = cfg.weight_b + static_cast<double>(states.size() - included);
  std::gamma_distribution<double> ga(ones, 1.0), gb(zeros, 1.0);
  const double x = ga(global_rng), y = gb(global_rng);
  return x / (x + y);
}

enum class SubjectStatus { kOk, kInsufficientHistory };

inline const char* status_name(SubjectStatus s) {
  return s == SubjectStatus::kOk ? "ok" : "insufficient_history";
}

struct PredictiveBands {
  std::vector<int> times;
  std::vector<double> mean;
  std::vector<double> levels;
  std::vector<std::vector<double>> lower;  // [level][horizon step]
  std::vector<std::vector<double>> upper;
};

// Type-7 (linear interpolation) empirical quantile of sorted data.
inline double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw StateError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Forecast over `horizon` periods after the last observation, pooled across
// retained draws and model-averaged over gamma. Each draw extends the AR(1)
// residual from the last observed residual and adds its mean continuation.
template <class Rng>
PredictiveBands posterior_predictive(const Trajectory& traj, std::span<const SubjectDraw> draws, std::size_t horizon,
                                     std::span<const double> levels, Rng& rng, std::size_t samples_per_draw = 1) {
  if (horizon < 1) throw DomainError("posterior_predictive: horizon must be >= 1");
  if (draws.empty()) throw StateError("posterior_predictive: no retained draws");
  for (double l : levels)
    if (!(l > 0.0 && l < 1.0)) throw DomainError("posterior_predictive: levels must lie in (0,1)");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> paths(horizon);
  for (auto& p : paths) p.reserve(draws.size() * samples_per_draw);
  for (const auto& d : draws) {
    if (d.gamma == 1 && d.f_future.size() < horizon)
      throw DomainError("posterior_predictive: draw carries a shorter mean continuation than the horizon");
    const double sd = std::sqrt(d.v);
    for (std::size_t s = 0; s < samples_per_draw; ++s) {
      double e = d.last_residual;
      for (std::size_t h = 0; h < horizon; ++h) {
        e = d.phi * e + sd * normal(rng);
        paths[h].push_back((d.gamma == 1 ? d.f_future[h] : 0.0) + e);
      }
    }
  }
  PredictiveBands out;
  out.levels.assign(levels.begin(), levels.end());
  out.lower.assign(levels.size(), std::vector<double>(horizon));
  out.upper.assign(levels.size(), std::vector<double>(horizon));
  for (std::size_t h = 0; h < horizon; ++h) {
    out.times.push_back(traj.times.back() + static_cast<int>(h + 1));
    auto& p = paths[h];
    double sum = 0.0;
    for (double x : p) sum += x;
    out.mean.push_back(sum / static_cast<double>(p.size()));
    std::sort(p.begin(), p.end());
    for (std::size_t l = 0; l < levels.size(); ++l) {
      out.lower[l][h] = sorted_quantile(p, 0.5 * (1.0 - levels[l]));
      out.upper[l][h] = sorted_quantile(p, 0.5 * (1.0 + levels[l]));
    }
  }
  return out;
}

struct TrajectoryResult {
  std::string subject_id;
  std::size_t n = 0;
  SubjectStatus status = SubjectStatus::kOk;
  double inclusion_probability = 0.0;
  std::vector<int> times;
  std::vector<double> values;
  std::vector<double> mean_trajectory;  // E[f | gamma = 1, data]; zero if never included
  std::size_t included_draws = 0;
  PredictiveBands bands;
};

struct TrajTestResult {
  std::vector<TrajectoryResult> subjects;
  double weight_posterior_mean = 0.0;
  double weight_prior_mean = 0.0;
  std::size_t retained = 0;
};

inline constexpr double kBandLevels[] = {0.50, 0.75, 0.95};

inline TrajTestResult run_trajectory_test(std::span<const Trajectory> trajectories, const TrajTestConfig& cfg) {
  cfg.validate();
  std::set<std::string> ids;
  for (const auto& t : trajectories) {
    t.validate();
    if (!ids.insert(t.subject_id).second) throw DomainError("duplicate trajectory subject '" + t.subject_id + "'");
  }
  const auto grid = cfg.phi_grid();
  std::vector<detail::SubjectModel> models;
  models.reserve(trajectories.size());
  for (const auto& t : trajectories) models.emplace_back(t, cfg);

  auto states = initial_states(trajectories, cfg);
  auto rngs = subject_streams(trajectories, cfg.schedule.seed);
  std::mt19937_64 global(stream_seed(cfg.schedule.seed, "mixture-weight"));
  double w = cfg.prior_weight_mean();

  const std::size_t n_sub = trajectories.size();
  std::vector<double> inclusion_sum(n_sub, 0.0);
  std::vector<std::size_t> f_count(n_sub, 0);
  std::vector<std::vector<double>> f_sum(n_sub);
  std::vector<std::vector<SubjectDraw>> draws(n_sub);
  for (std::size_t i = 0; i < n_sub; ++i) f_sum[i].assign(trajectories[i].size(), 0.0);
  double w_sum = 0.0;
  std::size_t retained = 0;

  for (std::size_t t = 0; t < cfg.schedule.iterations; ++t) {
    std::size_t included = 0;
    for (std::size_t i = 0; i < n_sub; ++i) {
      detail::update_subject(states[i], w, trajectories[i], models[i], grid, cfg, rngs[i]);
      included += static_cast<std::size_t>(states[i].gamma);
    }
    if (!cfg.fixed_weight) {
      std::gamma_distribution<double> ga(cfg.weight_a + static_cast<double>(included), 1.0);
      std::gamma_distribution<double> gb(cfg.weight_b + static_cast<double>(n_sub - included), 1.0);
      const double x = ga(global), y = gb(global);
      w = x / (x + y);
    }
    if (!cfg.schedule.retains(t)) continue;
    ++retained;
    w_sum += w;
    for (std::size_t i = 0; i < n_sub; ++i) {
      const auto& s = states[i];
      inclusion_sum[i] += s.p_include;
      if (s.gamma == 1) {
        ++f_count[i];
        for (std::size_t k = 0; k < s.f.size(); ++k) f_sum[i][k] += s.f[k];
      }
      draws[i].push_back({s.gamma, s.phi, s.v, trajectories[i].values.back() - s.f.back(), s.f_future});
    }
  }

  TrajTestResult out;
  out.retained = retained;
  out.weight_posterior_mean = w_sum / static_cast<double>(retained);
  out.weight_prior_mean = cfg.prior_weight_mean();
  out.subjects.reserve(n_sub);
  for (std::size_t i = 0; i < n_sub; ++i) {
    const auto& traj = trajectories[i];
    TrajectoryResult r;
    r.subject_id = traj.subject_id;
    r.n = traj.size();
    r.status = traj.size() >= cfg.min_history ? SubjectStatus::kOk : SubjectStatus::kInsufficientHistory;
    r.inclusion_probability = inclusion_sum[i] / static_cast<double>(retained);
    r.times = traj.times;
    r.values = traj.values;
    r.included_draws = f_count[i];
    r.mean_trajectory.assign(traj.size(), 0.0);
    if (f_count[i] > 0)
      for (std::size_t k = 0; k < traj.size(); ++k) r.mean_trajectory[k] = f_sum[i][k] / static_cast<double>(f_count[i]);
    if (cfg.horizon > 0) {
      std::mt19937_64 rng(stream_seed(cfg.schedule.seed, "forecast:" + traj.subject_id));
      r.bands = posterior_predictive(traj, draws[i], cfg.horizon, kBandLevels, rng, cfg.predictive_samples_per_draw);
    }
    out.subjects.push_back(std::move(r));
  }
  return out;
}

}  // namespace peerbench
