#pragma once

// Synthetic panels and trajectory cohorts with known ground truth.
//
// Panel: subject-level covariate x1 ~ U(0,1), observation-level x2 ~ U(0,1)
// and a group label drawn per subject. Cells partition (x1, x2) at 0.5; the
// latent score is z* ~ N(mu*_c, sigma*_c^2) and the raw score is skew(z*),
// a strictly increasing map with a long lower tail:
//   skew(z) = 0.05 z               for z >= 0
//   skew(z) = -0.05 (exp(-z) - 1)  for z < 0
//
// Trajectories: stationary AR(1) noise on the calendar grid, plus for
// non-null subjects a Gaussian bump (or a GP draw) as the true mean.
// Missing periods are removed completely at random.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "peerbench/error.hpp"
#include "peerbench/panel.hpp"
#include "peerbench/random.hpp"
#include "peerbench/text.hpp"
#include "peerbench/trajtest.hpp"

namespace peerbench {

inline double skew_transform(double z) { return z >= 0.0 ? 0.05 * z : -0.05 * std::expm1(-z); }

inline std::string synth_subject_id(std::size_t i, std::size_t count) {
  const int width = static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%0*zu", width, i);
  return buf;
}

struct CellTruth {
  double mu;
  double sigma;
};

enum class RawMarginal { kSkewed, kLatent };

struct SynthPanelConfig {
  std::size_t subjects = 1000;
  std::size_t periods = 20;
  int first_period = 1990;
  // 1 cell: homogeneous; 2 cells: split on x2; 4 cells: 2x2 grid on (x1, x2),
  // indexed 2 * [x1 > 0.5] + [x2 > 0.5].
  std::vector<CellTruth> cells{{-0.5, 0.5}, {-0.5, 1.5}, {0.5, 0.5}, {0.5, 1.5}};
  std::vector<std::string> groups{"A", "B", "C"};
  RawMarginal marginal = RawMarginal::kSkewed;
  double missing_rate = 0.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (subjects < 1 || periods < 1) throw ConfigError("synthetic panel needs subjects and periods >= 1");
    if (cells.size() != 1 && cells.size() != 2 && cells.size() != 4)
      throw ConfigError("synthetic panel supports 1, 2 or 4 cells");
    for (const auto& c : cells)
      if (!(c.sigma > 0.0) || !std::isfinite(c.mu)) throw ConfigError("cell sigma must be > 0 and mu finite");
    if (groups.empty()) throw ConfigError("synthetic panel needs at least one group");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing rate must lie in [0,1)");
  }

  std::size_t cell_of(double x1, double x2) const {
    switch (cells.size()) {
      case 1: return 0;
      case 2: return x2 > 0.5 ? 1 : 0;
      default: return 2 * (x1 > 0.5 ? 1 : 0) + (x2 > 0.5 ? 1 : 0);
    }
  }

  // Panel layout: x1, x2 raw; region grouped against the first group.
  PanelSchema schema() const {
    PanelSchema s;
    s.subject_column = "subject";
    s.time_column = "time";
    s.score_column = "score";
    s.spec.covariates = {{"x1", CovariateKind::kRaw}, {"x2", CovariateKind::kRaw},
                         {"region", CovariateKind::kGroupDistance}};
    s.spec.baseline_group = groups.front();
    return s;
  }
};

struct PanelTruthRow {
  std::string subject_id;
  int time;
  std::size_t cell;
  double mu;
  double sigma;
  double z;
  double residual;  // (z - mu) / sigma
};

struct SynthPanel {
  PanelDataset data;
  std::vector<PanelTruthRow> truth;  // aligned with data.observations
};

inline SynthPanel generate_panel(const SynthPanelConfig& cfg) {
  cfg.validate();
  SynthPanel out;
  out.data.schema = cfg.schema();
  out.data.covariate_names = {"x1", "x2", "region"};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_group(0, cfg.groups.size() - 1);
  for (std::size_t i = 0; i < cfg.subjects; ++i) {
    const std::string id = synth_subject_id(i, cfg.subjects);
    std::mt19937_64 rng(stream_seed(cfg.seed, "panel:" + id));
    const double x1 = unif(rng);
    const std::string& group = cfg.groups[pick_group(rng)];
    for (std::size_t p = 0; p < cfg.periods; ++p) {
      const double x2 = unif(rng);
      const double e = normal(rng);
      const bool missing = unif(rng) < cfg.missing_rate;
      if (missing) continue;
      const std::size_t c = cfg.cell_of(x1, x2);
      const auto& cell = cfg.cells[c];
      const double z = cell.mu + cell.sigma * e;
      const int t = cfg.first_period + static_cast<int>(p);
      Observation o;
      o.subject_id = id;
      o.time = t;
      o.raw_score = cfg.marginal == RawMarginal::kSkewed ? skew_transform(z) : z;
      o.covariates = {x1, x2, std::numeric_limits<double>::quiet_NaN()};
      o.group = group;
      out.data.observations.push_back(std::move(o));
      out.truth.push_back({id, t, c, cell.mu, cell.sigma, z, e});
    }
  }
  out.data.update_time_range();
  return out;
}

inline void write_panel_truth(std::ostream& os, const std::vector<PanelTruthRow>& truth) {
  os << "subject,time,cell,mu,sigma,z,residual\n";
  for (const auto& r : truth)
    os << text::join_record({r.subject_id, std::to_string(r.time), std::to_string(r.cell), text::format_double(r.mu),
                             text::format_double(r.sigma), text::format_double(r.z),
                             text::format_double(r.residual)},
                            ',')
       << '\n';
}

enum class TrendShape { kBump, kGaussianProcess };

struct SynthTrajConfig {
  std::size_t subjects = 200;
  std::size_t periods = 40;
  int first_period = 1970;
  double fraction_nonnull = 0.2;
  double phi_lo = 0.2, phi_hi = 0.6;
  double v_lo = 0.6, v_hi = 0.9;
  TrendShape shape = TrendShape::kBump;
  double amplitude = 0.75;   // bump height, or GP standard deviation
  double bump_width = 8.0;   // bump standard deviation in periods
  double gp_length_scale = 5.0;
  double missing_rate = 0.0;
  std::uint64_t seed = 11;

  void validate() const {
    if (subjects < 1 || periods < 1) throw ConfigError("synthetic cohort needs subjects and periods >= 1");
    if (!(fraction_nonnull >= 0.0 && fraction_nonnull <= 1.0)) throw ConfigError("non-null fraction must lie in [0,1]");
    if (!(phi_lo >= 0.0 && phi_lo <= phi_hi && phi_hi < 1.0)) throw ConfigError("phi range must lie in [0,1)");
    if (!(v_lo > 0.0 && v_lo <= v_hi)) throw ConfigError("v range must be positive");
    if (!(amplitude >= 0.0)) throw ConfigError("amplitude must be >= 0");
    if (!(bump_width > 0.0 && gp_length_scale > 0.0)) throw ConfigError("bump width and length scale must be > 0");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing rate must lie in [0,1)");
  }
};

struct TrajectoryTruth {
  std::string subject_id;
  bool nonnull = false;
  double phi = 0.0;
  double v = 0.0;
  std::vector<double> f;  // true mean at the observed times
};

struct SynthCohort {
  std::vector<Trajectory> trajectories;
  std::vector<TrajectoryTruth> truth;
};

// AR(1) path on consecutive periods, started from the stationary law.
template <class Rng>
std::vector<double> ar1_path(std::size_t n, double phi, double v, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> e(n);
  if (n == 0) return e;
  e[0] = std::sqrt(v / (1.0 - phi * phi)) * normal(rng);
  for (std::size_t k = 1; k < n; ++k) e[k] = phi * e[k - 1] + std::sqrt(v) * normal(rng);
  return e;
}

inline SynthCohort generate_trajectories(const SynthTrajConfig& cfg) {
  cfg.validate();
  const std::size_t n_sub = cfg.subjects;
  const auto n_nonnull = static_cast<std::size_t>(std::llround(cfg.fraction_nonnull * static_cast<double>(n_sub)));
  std::vector<std::size_t> order(n_sub);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 label_rng(stream_seed(cfg.seed, "labels"));
  std::shuffle(order.begin(), order.end(), label_rng);
  std::vector<bool> nonnull(n_sub, false);
  for (std::size_t k = 0; k < n_nonnull; ++k) nonnull[order[k]] = true;

  std::vector<int> grid(cfg.periods);
  for (std::size_t p = 0; p < cfg.periods; ++p) grid[p] = cfg.first_period + static_cast<int>(p);
  Eigen::MatrixXd gp_chol;
  if (cfg.shape == TrendShape::kGaussianProcess) {
    Eigen::MatrixXd k = sqexp_covariance(grid, 1.0, cfg.gp_length_scale);
    k.diagonal().array() += 1e-9;
    gp_chol = Eigen::LLT<Eigen::MatrixXd>(k).matrixL();
  }

  SynthCohort out;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n_sub; ++i) {
    const std::string id = synth_subject_id(i, n_sub);
    std::mt19937_64 rng(stream_seed(cfg.seed, "trajectory:" + id));
    const double phi = cfg.phi_lo + (cfg.phi_hi - cfg.phi_lo) * unif(rng);
    const double v = cfg.v_lo + (cfg.v_hi - cfg.v_lo) * unif(rng);
    const auto noise = ar1_path(cfg.periods, phi, v, rng);
    std::vector<double> f(cfg.periods, 0.0);
    if (cfg.shape == TrendShape::kBump) {
      const double centre = grid.front() + (0.25 + 0.5 * unif(rng)) * static_cast<double>(cfg.periods - 1);
      const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
      if (nonnull[i])
        for (std::size_t p = 0; p < cfg.periods; ++p) {
          const double d = (grid[p] - centre) / cfg.bump_width;
          f[p] = sign * cfg.amplitude * std::exp(-0.5 * d * d);
        }
    } else {
      Eigen::VectorXd e(static_cast<Eigen::Index>(cfg.periods));
      for (auto& x : e) x = normal(rng);
      if (nonnull[i]) {
        const Eigen::VectorXd g = cfg.amplitude * (gp_chol * e);
        for (std::size_t p = 0; p < cfg.periods; ++p) f[p] = g[static_cast<Eigen::Index>(p)];
      }
    }
    Trajectory traj;
    traj.subject_id = id;
    TrajectoryTruth truth{id, static_cast<bool>(nonnull[i]), phi, v, {}};
    for (std::size_t p = 0; p < cfg.periods; ++p) {
      const bool missing = unif(rng) < cfg.missing_rate;
      if (missing) continue;
      traj.times.push_back(grid[p]);
      traj.values.push_back(f[p] + noise[p]);
      truth.f.push_back(f[p]);
    }
    if (traj.times.empty()) {  // keep every subject observable
      traj.times.push_back(grid.back());
      traj.values.push_back(f.back() + noise.back());
      truth.f.push_back(f.back());
    }
    out.trajectories.push_back(std::move(traj));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

// Long format: subject, time, y.
inline void write_trajectories(std::ostream& os, const std::vector<Trajectory>& trajectories,
                               const std::string& value_column = "y") {
  os << "subject,time," << value_column << '\n';
  for (const auto& t : trajectories)
    for (std::size_t k = 0; k < t.size(); ++k)
      os << text::join_record({t.subject_id, std::to_string(t.times[k]), text::format_double(t.values[k])}, ',')
         << '\n';
}

inline void write_trajectory_truth(std::ostream& os, const SynthCohort& cohort) {
  os << "subject,time,nonnull,phi,v,f\n";
  for (std::size_t i = 0; i < cohort.truth.size(); ++i) {
    const auto& tr = cohort.truth[i];
    const auto& traj = cohort.trajectories[i];
    for (std::size_t k = 0; k < traj.size(); ++k)
      os << text::join_record({tr.subject_id, std::to_string(traj.times[k]), tr.nonnull ? "1" : "0",
                               text::format_double(tr.phi), text::format_double(tr.v), text::format_double(tr.f[k])},
                              ',')
         << '\n';
  }
}

}  // namespace peerbench
