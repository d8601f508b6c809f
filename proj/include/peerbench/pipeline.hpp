#pragma once

// End-to-end orchestration: configuration schema, stage functions shared by
// the command-line tool, table formats, and plot-data emission.
//
// Pipeline outputs (relative to the output directory):
//   scores.csv                 subject, time, raw, z
//   benchmark_table.csv        subject, time, raw, z, y, common, pred_mean, pred_lower, pred_upper
//   tree_draws.json            retained trees with leaf (mu, sigma)
//   trajectory_results.csv     subject, n, inclusion_probability, status
//   trajectory_fits.csv        subject, time, z, fhat
//   inclusion_histogram.csv    bin_lo, bin_hi, count
//   bands/<subject>.csv        time, mean, q25, q75, q125, q875, q025, q975
//   manifest.json

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "peerbench/copula.hpp"
#include "peerbench/error.hpp"
#include "peerbench/manifest.hpp"
#include "peerbench/panel.hpp"
#include "peerbench/text.hpp"
#include "peerbench/trajtest.hpp"
#include "peerbench/tree_sampler.hpp"

namespace peerbench {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

inline std::uint64_t parse_seed(const std::string& s) {
  std::uint64_t v = 0;
  const auto t = text::trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size()) throw ConfigError("seed is not an unsigned integer: " + s);
  return v;
}

// Every recognised key with its default. An empty default means "unset".
inline const text::KeyValueConfig& pipeline_defaults() {
  static const text::KeyValueConfig d = [] {
    text::KeyValueConfig c;
    const McmcSchedule tree_mcmc;
    const TrajTestConfig traj;
    const TreePriorConfig prior;
    c.set("panel", "");
    c.set("seed", std::to_string(tree_mcmc.seed));
    c.set("subject", "subject");
    c.set("time", "time");
    c.set("score", "score");
    c.set("delimiter", "comma");
    c.set("covariates", "");
    c.set("baseline", "");
    c.set("tree.alpha", text::format_double(prior.alpha));
    c.set("tree.beta", text::format_double(prior.beta));
    c.set("tree.m0", text::format_double(prior.leaf.m0));
    c.set("tree.kappa0", text::format_double(prior.leaf.kappa0));
    c.set("tree.a0", text::format_double(prior.leaf.a0));
    c.set("tree.b0", text::format_double(prior.leaf.b0));
    c.set("tree.min_leaf", std::to_string(prior.min_leaf));
    c.set("tree.max_depth", std::to_string(prior.max_depth));
    c.set("tree.thresholds", "node");
    c.set("tree.iterations", std::to_string(tree_mcmc.iterations));
    c.set("tree.burn_in", std::to_string(tree_mcmc.burn_in));
    c.set("tree.thin", std::to_string(tree_mcmc.thin));
    c.set("interval.level", "0.95");
    c.set("traj.a", text::format_double(traj.ig_shape));
    c.set("traj.b", text::format_double(traj.ig_scale));
    c.set("traj.tau2", text::format_double(traj.gp_amplitude));
    c.set("traj.length_scale", text::format_double(traj.gp_length_scale));
    c.set("traj.weight_a", text::format_double(traj.weight_a));
    c.set("traj.weight_b", text::format_double(traj.weight_b));
    c.set("traj.fixed_weight", "");
    c.set("traj.iterations", std::to_string(traj.schedule.iterations));
    c.set("traj.burn_in", std::to_string(traj.schedule.burn_in));
    c.set("traj.thin", std::to_string(traj.schedule.thin));
    c.set("traj.horizon", std::to_string(traj.horizon));
    c.set("traj.min_history", std::to_string(traj.min_history));
    c.set("traj.phi_grid", std::to_string(traj.phi_grid_points));
    c.set("traj.samples_per_draw", std::to_string(traj.predictive_samples_per_draw));
    return c;
  }();
  return d;
}

// Defaults overlaid with `user`; unknown keys are rejected.
inline text::KeyValueConfig resolve_config(const text::KeyValueConfig& user) {
  const auto& d = pipeline_defaults();
  for (const auto& [k, v] : user.values())
    if (!d.contains(k)) throw ConfigError("unknown configuration key '" + k + "'");
  text::KeyValueConfig out = d;
  out.merge(user);
  return out;
}

inline std::size_t get_count(const text::KeyValueConfig& c, const std::string& key) {
  const auto v = c.get_int(key, 0);
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

inline TreeSamplerConfig tree_config_from(const text::KeyValueConfig& c) {
  TreeSamplerConfig cfg;
  cfg.prior.alpha = c.get_double("tree.alpha", cfg.prior.alpha);
  cfg.prior.beta = c.get_double("tree.beta", cfg.prior.beta);
  cfg.prior.leaf.m0 = c.get_double("tree.m0", cfg.prior.leaf.m0);
  cfg.prior.leaf.kappa0 = c.get_double("tree.kappa0", cfg.prior.leaf.kappa0);
  cfg.prior.leaf.a0 = c.get_double("tree.a0", cfg.prior.leaf.a0);
  cfg.prior.leaf.b0 = c.get_double("tree.b0", cfg.prior.leaf.b0);
  if (c.contains("tree.min_leaf")) cfg.prior.min_leaf = get_count(c, "tree.min_leaf");
  cfg.prior.max_depth = static_cast<int>(c.get_int("tree.max_depth", cfg.prior.max_depth));
  const auto pool = c.get_or("tree.thresholds", "node");
  if (pool == "node") cfg.prior.thresholds = ThresholdPool::kNode;
  else if (pool == "global") cfg.prior.thresholds = ThresholdPool::kGlobal;
  else throw ConfigError("tree.thresholds must be 'node' or 'global'");
  if (c.contains("tree.iterations")) cfg.schedule.iterations = get_count(c, "tree.iterations");
  if (c.contains("tree.burn_in")) cfg.schedule.burn_in = get_count(c, "tree.burn_in");
  if (c.contains("tree.thin")) cfg.schedule.thin = get_count(c, "tree.thin");
  if (c.contains("seed")) cfg.schedule.seed = parse_seed(*c.get("seed"));
  cfg.validate();
  return cfg;
}

inline TrajTestConfig traj_config_from(const text::KeyValueConfig& c) {
  TrajTestConfig cfg;
  cfg.ig_shape = c.get_double("traj.a", cfg.ig_shape);
  cfg.ig_scale = c.get_double("traj.b", cfg.ig_scale);
  cfg.gp_amplitude = c.get_double("traj.tau2", cfg.gp_amplitude);
  cfg.gp_length_scale = c.get_double("traj.length_scale", cfg.gp_length_scale);
  cfg.weight_a = c.get_double("traj.weight_a", cfg.weight_a);
  cfg.weight_b = c.get_double("traj.weight_b", cfg.weight_b);
  if (const auto w = c.get("traj.fixed_weight"); w && !w->empty()) cfg.fixed_weight = c.get_double("traj.fixed_weight", 0);
  if (c.contains("traj.iterations")) cfg.schedule.iterations = get_count(c, "traj.iterations");
  if (c.contains("traj.burn_in")) cfg.schedule.burn_in = get_count(c, "traj.burn_in");
  if (c.contains("traj.thin")) cfg.schedule.thin = get_count(c, "traj.thin");
  if (c.contains("traj.horizon")) cfg.horizon = get_count(c, "traj.horizon");
  if (c.contains("traj.min_history")) cfg.min_history = get_count(c, "traj.min_history");
  if (c.contains("traj.phi_grid")) cfg.phi_grid_points = get_count(c, "traj.phi_grid");
  if (c.contains("traj.samples_per_draw")) cfg.predictive_samples_per_draw = get_count(c, "traj.samples_per_draw");
  if (c.contains("seed")) cfg.schedule.seed = parse_seed(*c.get("seed"));
  cfg.validate();
  return cfg;
}

inline double interval_level_from(const text::KeyValueConfig& c) {
  const double level = c.get_double("interval.level", 0.95);
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("interval.level must lie in (0,1)");
  return level;
}

// ---------------------------------------------------------------------------
// Stage functions

inline PanelDataset load_panel_file(const fs::path& path, const PanelSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open panel '" + path.string() + "'");
  return load_panel(in, schema);
}

inline void write_scores(std::ostream& os, const PanelDataset& data, std::span<const double> z) {
  os << "subject,time,raw,z\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& o = data.observations[i];
    os << text::join_record({o.subject_id, std::to_string(o.time), text::format_double(o.raw_score),
                             text::format_double(z[i])},
                            ',')
       << '\n';
  }
}

struct BenchmarkRow {
  std::string subject_id;
  int time = 0;
  double raw = 0.0;
  double z = 0.0;
  double y = 0.0;
  double common = 0.5;
  PredictiveInterval interval;
};

struct BenchmarkFit {
  std::vector<BenchmarkRow> rows;
  std::vector<TreeDraw> draws;
  std::array<std::size_t, 4> proposed{};
  std::array<std::size_t, 4> accepted{};
};

inline std::shared_ptr<const TrainingData> training_data(const PanelDataset& data) {
  if (!data.covariates_built && data.schema.spec.group_index())
    throw StateError("covariates must be built before fitting");
  return std::make_shared<const TrainingData>(data.covariate_matrix(), data.size(), data.arity());
}

inline BenchmarkFit fit_benchmarks(const PanelDataset& data, std::span<const double> z, const TreeSamplerConfig& cfg,
                                   double level) {
  auto td = training_data(data);
  auto state = run_tree_sampler(td, std::vector<double>(z.begin(), z.end()), cfg);
  const auto y = state.benchmarks().mean();
  const auto intervals = predictive_intervals(state.draws(), *td, level);
  BenchmarkFit fit;
  fit.rows.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& o = data.observations[i];
    fit.rows.push_back({o.subject_id, o.time, o.raw_score, z[i], y[i], common_scale(y[i]), intervals[i]});
  }
  fit.draws = state.draws();
  fit.proposed = state.proposed();
  fit.accepted = state.accepted();
  return fit;
}

inline void write_benchmark_table(std::ostream& os, const std::vector<BenchmarkRow>& rows) {
  os << "subject,time,raw,z,y,common,pred_mean,pred_lower,pred_upper\n";
  for (const auto& r : rows)
    os << text::join_record({r.subject_id, std::to_string(r.time), text::format_double(r.raw),
                             text::format_double(r.z), text::format_double(r.y), text::format_double(r.common),
                             text::format_double(r.interval.mean), text::format_double(r.interval.lower),
                             text::format_double(r.interval.upper)},
                            ',')
       << '\n';
}

// Minimal reader for comma-separated tables with a header: column name ->
// field list per row.
class CsvTable {
 public:
  static CsvTable read(std::istream& in, char delim = ',') {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError(1, "missing header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header_ = text::split_record(line, delim, line_no);
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty()) continue;
      auto f = text::split_record(line, delim, line_no);
      if (f.size() != t.header_.size())
        throw ParseError(line_no, "expected " + std::to_string(t.header_.size()) + " fields, found " +
                                      std::to_string(f.size()));
      t.rows_.push_back(std::move(f));
      t.lines_.push_back(line_no);
    }
    return t;
  }

  static CsvTable read_file(const fs::path& path, char delim = ',') {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open '" + path.string() + "'");
    return read(in, delim);
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header_.size(); ++j)
      if (header_[j] == name) return j;
    throw ParseError(1, "missing column '" + name + "'");
  }

  std::size_t size() const noexcept { return rows_.size(); }
  const std::string& at(std::size_t row, std::size_t col) const { return rows_[row][col]; }
  std::size_t line(std::size_t row) const { return lines_[row]; }

  double number(std::size_t row, std::size_t col) const {
    const auto v = text::parse_double(rows_[row][col]);
    if (!v || !std::isfinite(*v)) throw ParseError(lines_[row], "not a finite number: '" + rows_[row][col] + "'");
    return *v;
  }

  int integer(std::size_t row, std::size_t col) const {
    const auto v = text::parse_int(rows_[row][col]);
    if (!v) throw ParseError(lines_[row], "not an integer: '" + rows_[row][col] + "'");
    return static_cast<int>(*v);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

// Groups long-format rows into per-subject trajectories sorted by time.
// Subjects come out in lexicographic order.
inline std::vector<Trajectory> trajectories_from_table(const CsvTable& t, const std::string& value_column,
                                                       const std::string& subject_column = "subject",
                                                       const std::string& time_column = "time") {
  const auto cs = t.column(subject_column), ct = t.column(time_column), cv = t.column(value_column);
  std::map<std::string, std::map<int, double>> by_subject;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const int time = t.integer(r, ct);
    if (!by_subject[t.at(r, cs)].emplace(time, t.number(r, cv)).second)
      throw UniquenessError("duplicate observation (" + t.at(r, cs) + ", " + std::to_string(time) + ")");
  }
  std::vector<Trajectory> out;
  for (const auto& [id, series] : by_subject) {
    Trajectory traj;
    traj.subject_id = id;
    for (const auto& [time, value] : series) {
      traj.times.push_back(time);
      traj.values.push_back(value);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

inline std::vector<Trajectory> trajectories_from_rows(const std::vector<BenchmarkRow>& rows) {
  std::map<std::string, std::map<int, double>> by_subject;
  for (const auto& r : rows) by_subject[r.subject_id][r.time] = r.y;
  std::vector<Trajectory> out;
  for (const auto& [id, series] : by_subject) {
    Trajectory traj;
    traj.subject_id = id;
    for (const auto& [time, value] : series) {
      traj.times.push_back(time);
      traj.values.push_back(value);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

// Tree draws as JSON. Each draw lists nodes in preorder: internal nodes as
// {"c": covariate, "t": threshold}, leaves as {"mu": ..., "sigma": ...}.
inline nlohmann::json tree_draws_to_json(const std::vector<TreeDraw>& draws,
                                         const std::vector<std::string>& covariate_names) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : draws) {
    nlohmann::json nodes = nlohmann::json::array();
    for (NodeId id : d.tree.preorder()) {
      const auto& n = d.tree.node(id);
      if (n.is_leaf()) {
        const auto& p = d.leaf[static_cast<std::size_t>(id)];
        nodes.push_back({{"mu", p.mu}, {"sigma", p.sigma}});
      } else {
        nodes.push_back({{"c", n.rule.covariate}, {"t", n.rule.threshold}});
      }
    }
    arr.push_back(std::move(nodes));
  }
  return {{"covariates", covariate_names}, {"draws", std::move(arr)}};
}

struct TreeDrawSet {
  std::vector<std::string> covariate_names;
  std::vector<TreeDraw> draws;
};

inline TreeDrawSet tree_draws_from_json(const nlohmann::json& j) {
  TreeDrawSet out;
  try {
    out.covariate_names = j.at("covariates").get<std::vector<std::string>>();
    const std::size_t arity = out.covariate_names.size();
    for (const auto& nodes : j.at("draws")) {
      TreeDraw d{RegressionTree(arity), {}};
      std::size_t pos = 0;
      // Rebuild by expanding the preorder list recursively.
      std::function<void(NodeId)> build = [&](NodeId id) {
        if (pos >= nodes.size()) throw ParseError(0, "tree draw: truncated node list");
        const auto& n = nodes[pos++];
        if (n.contains("c")) {
          const auto [l, r] = d.tree.grow(id, {n.at("c").get<std::size_t>(), n.at("t").get<double>()});
          build(l);
          build(r);
        } else {
          if (d.leaf.size() <= static_cast<std::size_t>(id)) d.leaf.resize(static_cast<std::size_t>(id) + 1);
          const double sigma = n.at("sigma").get<double>();
          if (!(sigma > 0.0)) throw ParseError(0, "tree draw: leaf sigma must be > 0");
          d.leaf[static_cast<std::size_t>(id)] = {n.at("mu").get<double>(), sigma};
        }
      };
      build(RegressionTree::root());
      if (pos != nodes.size()) throw ParseError(0, "tree draw: trailing nodes");
      d.leaf.resize(d.tree.slot_count());
      out.draws.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("tree draws: ") + e.what());
  }
  return out;
}

inline TreeDrawSet read_tree_draws(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return tree_draws_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, "tree draws '" + path.string() + "': " + e.what());
  }
}

// Filesystem-safe stem for per-subject files.
inline std::string file_stem(const std::string& subject_id) {
  std::string s = subject_id;
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  if (s.empty() || s == "." || s == "..") s = "_" + s;
  return s;
}

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};

// Equal-width bins on [0,1]; the last bin is closed.
inline Histogram inclusion_histogram(std::span<const double> probabilities, std::size_t bins = 10) {
  if (bins < 1) throw DomainError("histogram needs at least one bin");
  Histogram h;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
  h.counts.assign(bins, 0);
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("inclusion probability outside [0,1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(p * static_cast<double>(bins)));
    ++h.counts[b];
  }
  return h;
}

inline void write_histogram(std::ostream& os, const Histogram& h) {
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    os << text::format_double(h.edges[b]) << ',' << text::format_double(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
}

inline void write_trajectory_summary(std::ostream& os, const TrajTestResult& res) {
  os << "subject,n,inclusion_probability,status\n";
  for (const auto& s : res.subjects)
    os << text::join_record({s.subject_id, std::to_string(s.n), text::format_double(s.inclusion_probability),
                             status_name(s.status)},
                            ',')
       << '\n';
}

inline void write_trajectory_fits(std::ostream& os, const TrajTestResult& res) {
  os << "subject,time,z,fhat\n";
  for (const auto& s : res.subjects)
    for (std::size_t k = 0; k < s.times.size(); ++k)
      os << text::join_record({s.subject_id, std::to_string(s.times[k]), text::format_double(s.values[k]),
                               text::format_double(s.mean_trajectory[k])},
                              ',')
         << '\n';
}

// Columns: time, mean, then lower/upper for 50%, 75% and 95%.
inline void write_bands(std::ostream& os, const PredictiveBands& b) {
  os << "time,mean,q25,q75,q125,q875,q025,q975\n";
  for (std::size_t h = 0; h < b.times.size(); ++h) {
    os << b.times[h] << ',' << text::format_double(b.mean[h]);
    for (std::size_t l = 0; l < b.levels.size(); ++l)
      os << ',' << text::format_double(b.lower[l][h]) << ',' << text::format_double(b.upper[l][h]);
    os << '\n';
  }
}

// Files written by one run; removed again if the run fails.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const noexcept { return dir_; }
  const std::vector<std::string>& files() const noexcept { return files_; }

  void ensure_dir(const std::string& relative = "") {
    const auto p = relative.empty() ? dir_ : dir_ / relative;
    if (fs::exists(p)) return;
    // Record each directory we create, outermost first.
    std::vector<fs::path> fresh;
    for (auto q = p; !q.empty() && !fs::exists(q); q = q.parent_path()) fresh.push_back(q);
    fs::create_directories(p);
    dirs_.insert(dirs_.end(), fresh.rbegin(), fresh.rend());
  }

  template <class Writer>
  void write(const std::string& relative, Writer&& writer) {
    const auto p = dir_ / relative;
    ensure_dir(fs::path(relative).parent_path().string());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DomainError("cannot write '" + p.string() + "'");
    files_.push_back(relative);
    writer(out);
    out.flush();
    if (!out) throw DomainError("write failed for '" + p.string() + "'");
  }

  void remove_all() noexcept {
    std::error_code ec;
    for (const auto& f : files_) fs::remove(dir_ / f, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(*it, ec);  // only if empty
    files_.clear();
    dirs_.clear();
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
  std::vector<fs::path> dirs_;
};

// A stage failure; keeps the exit code of the underlying error.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what, ExitCode code)
      : Error("stage '" + stage + "' failed: " + what), stage_(stage), code_(code) {}
  const std::string& stage() const noexcept { return stage_; }
  ExitCode exit_code() const noexcept override { return code_; }

 private:
  std::string stage_;
  ExitCode code_;
};

template <class Fn>
auto run_stage(const std::string& name, std::ostream* log, Fn&& fn) {
  if (log) *log << "[" << name << "]\n";
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what(), e.exit_code());
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), ExitCode::kData);
  }
}

inline void write_trajectory_outputs(OutputSet& out, const TrajTestResult& res) {
  out.write("trajectory_results.csv", [&](std::ostream& os) { write_trajectory_summary(os, res); });
  out.write("trajectory_fits.csv", [&](std::ostream& os) { write_trajectory_fits(os, res); });
  std::vector<double> eligible;
  for (const auto& s : res.subjects)
    if (s.status == SubjectStatus::kOk) eligible.push_back(s.inclusion_probability);
  out.write("inclusion_histogram.csv", [&](std::ostream& os) { write_histogram(os, inclusion_histogram(eligible)); });
  std::set<std::string> stems;
  for (const auto& s : res.subjects) {
    if (s.bands.times.empty()) continue;
    const auto stem = file_stem(s.subject_id);
    if (!stems.insert(stem).second) throw UniquenessError("subjects map to the same band file '" + stem + "'");
    out.write("bands/" + stem + ".csv", [&](std::ostream& os) { write_bands(os, s.bands); });
  }
}

// Runs transform -> fit-tree -> test-trajectories. `user` holds the flat
// configuration (including `panel`); all outputs go to `out_dir` and a
// manifest records every resolved setting and digest. When `replay` is given
// its parameters are used and the input digest must still match.
inline RunManifest run_pipeline(const text::KeyValueConfig& user, const fs::path& out_dir, std::ostream* log = nullptr,
                                const RunManifest* replay = nullptr) {
  text::KeyValueConfig cfg;
  if (replay) {
    if (replay->command != "pipeline") throw ConfigError("manifest was not written by 'pipeline'");
    for (const auto& [k, v] : replay->parameters) cfg.set(k, v);
    cfg = resolve_config(cfg);
  } else {
    cfg = resolve_config(user);
  }
  const std::string panel_path = cfg.get_or("panel", "");
  if (panel_path.empty()) throw ConfigError("configuration does not name a panel file");
  const auto schema = PanelSchema::from_config(cfg);
  const auto tree_cfg = tree_config_from(cfg);
  const auto traj_cfg = traj_config_from(cfg);
  const double level = interval_level_from(cfg);

  RunManifest manifest;
  manifest.command = "pipeline";
  manifest.parameters = cfg.values();
  manifest.seed = tree_cfg.schedule.seed;
  manifest.add_input(panel_path);
  if (replay) {
    const auto it = replay->inputs.find(panel_path);
    if (it != replay->inputs.end() && it->second != manifest.inputs.at(panel_path))
      throw DomainError("input '" + panel_path + "' differs from the manifest digest");
  }

  OutputSet out(out_dir);
  try {
    out.ensure_dir();
    const auto data = run_stage("load", log, [&] { return build_covariates(load_panel_file(panel_path, schema)); });
    if (data.size() == 0) throw StageError("load", "panel has no usable observations", ExitCode::kData);
    if (log)
      *log << "  " << data.size() << " observations, dropped " << data.dropped_missing_score
           << " (missing score) and " << data.dropped_missing_covariate << " (missing covariate)\n";
    const auto scores = run_stage("transform", log, [&] {
      auto ns = fit_normal_scores(data.raw_scores());
      out.write("scores.csv", [&](std::ostream& os) { write_scores(os, data, ns.z); });
      return ns;
    });
    const auto fit = run_stage("fit-tree", log, [&] {
      auto f = fit_benchmarks(data, scores.z, tree_cfg, level);
      out.write("benchmark_table.csv", [&](std::ostream& os) { write_benchmark_table(os, f.rows); });
      out.write("tree_draws.json",
                [&](std::ostream& os) { os << tree_draws_to_json(f.draws, data.covariate_names).dump() << '\n'; });
      return f;
    });
    run_stage("test-trajectories", log, [&] {
      const auto trajectories = trajectories_from_rows(fit.rows);
      const auto res = run_trajectory_test(trajectories, traj_cfg);
      write_trajectory_outputs(out, res);
      if (log) *log << "  posterior mean of w: " << res.weight_posterior_mean << '\n';
      return 0;
    });
    run_stage("manifest", log, [&] {
      for (const auto& f : out.files()) manifest.add_output(out_dir, f);
      manifest.created_utc = utc_timestamp();
      manifest.write(out_dir / "manifest.json");
      return 0;
    });
  } catch (...) {
    std::error_code ec;
    fs::remove(out_dir / "manifest.json", ec);
    out.remove_all();
    throw;
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Plot data

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Up to `limit` known ids closest to `query` by edit distance.
inline std::vector<std::string> near_matches(const std::string& query, const std::set<std::string>& known,
                                             std::size_t limit = 3) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& k : known) scored.emplace_back(edit_distance(query, k), k);
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < limit; ++i) out.push_back(scored[i].second);
  return out;
}

inline void require_known(const std::string& subject, const std::set<std::string>& known) {
  if (known.count(subject)) return;
  std::string msg = "unknown subject '" + subject + "'";
  const auto near = near_matches(subject, known);
  if (!near.empty()) {
    msg += "; did you mean";
    for (std::size_t i = 0; i < near.size(); ++i) msg += (i ? ", '" : " '") + near[i] + "'";
    msg += "?";
  }
  throw LookupError(msg);
}

// Writes, for each requested subject (all if empty), into `plot_dir`:
//   <subject>_benchmark.csv   time, z, y, pred_mean, pred_lower, pred_upper, common
//   <subject>_trajectory.csv  time, y, fhat
//   <subject>_forecast.csv    the subject's forecast bands
// plus inclusion_histogram.csv. Returns the files written, relative to plot_dir.
inline std::vector<std::string> emit_plot_data(const fs::path& results_dir, const std::vector<std::string>& subjects,
                                               const fs::path& plot_dir) {
  const auto bench = CsvTable::read_file(results_dir / "benchmark_table.csv");
  const auto fits = CsvTable::read_file(results_dir / "trajectory_fits.csv");
  const auto summary = CsvTable::read_file(results_dir / "trajectory_results.csv");
  std::set<std::string> known;
  const auto bs = bench.column("subject");
  for (std::size_t r = 0; r < bench.size(); ++r) known.insert(bench.at(r, bs));
  std::vector<std::string> wanted = subjects;
  if (wanted.empty()) wanted.assign(known.begin(), known.end());
  for (const auto& s : wanted) require_known(s, known);
  const std::set<std::string> wanted_set(wanted.begin(), wanted.end());

  OutputSet out(plot_dir);
  try {
    out.ensure_dir();
    std::map<std::string, std::vector<std::size_t>> bench_rows, fit_rows;
    for (std::size_t r = 0; r < bench.size(); ++r)
      if (wanted_set.count(bench.at(r, bs))) bench_rows[bench.at(r, bs)].push_back(r);
    const auto fs_ = fits.column("subject");
    for (std::size_t r = 0; r < fits.size(); ++r)
      if (wanted_set.count(fits.at(r, fs_))) fit_rows[fits.at(r, fs_)].push_back(r);
    const std::vector<std::string> bench_cols{"time", "z", "y", "pred_mean", "pred_lower", "pred_upper", "common"};
    std::vector<std::size_t> bench_idx;
    for (const auto& c : bench_cols) bench_idx.push_back(bench.column(c));
    const auto ft = fits.column("time"), fz = fits.column("z"), ff = fits.column("fhat");
    for (const auto& s : wanted_set) {
      const auto stem = file_stem(s);
      out.write(stem + "_benchmark.csv", [&](std::ostream& os) {
        os << text::join_record(bench_cols, ',') << '\n';
        for (std::size_t r : bench_rows[s]) {
          std::vector<std::string> row;
          for (std::size_t c : bench_idx) row.push_back(bench.at(r, c));
          os << text::join_record(row, ',') << '\n';
        }
      });
      out.write(stem + "_trajectory.csv", [&](std::ostream& os) {
        os << "time,y,fhat\n";
        for (std::size_t r : fit_rows[s])
          os << text::join_record({fits.at(r, ft), fits.at(r, fz), fits.at(r, ff)}, ',') << '\n';
      });
      const auto band = results_dir / "bands" / (stem + ".csv");
      if (fs::exists(band)) {
        const auto bytes = read_file(band);
        out.write(stem + "_forecast.csv", [&](std::ostream& os) { os << bytes; });
      }
    }
    const auto sp = summary.column("inclusion_probability"), ss = summary.column("status");
    std::vector<double> eligible;
    for (std::size_t r = 0; r < summary.size(); ++r)
      if (summary.at(r, ss) == status_name(SubjectStatus::kOk)) eligible.push_back(summary.number(r, sp));
    out.write("inclusion_histogram.csv", [&](std::ostream& os) { write_histogram(os, inclusion_histogram(eligible)); });
  } catch (...) {
    out.remove_all();
    throw;
  }
  return out.files();
}

}  // namespace peerbench
