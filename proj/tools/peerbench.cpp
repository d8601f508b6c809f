// peerbench command-line tool.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "peerbench/peerbench.hpp"

namespace fs = std::filesystem;
using namespace peerbench;

namespace {

// Flag name -> configuration key, shared by the commands that read a config.
struct FlagBinding {
  std::string flag;
  std::string key;
  std::string help;
};

const std::vector<FlagBinding> kTreeFlags{
    {"--alpha", "tree.alpha", "split probability scale"},
    {"--beta", "tree.beta", "split probability depth exponent"},
    {"--m0", "tree.m0", "leaf prior mean"},
    {"--kappa0", "tree.kappa0", "leaf prior mean precision factor"},
    {"--a0", "tree.a0", "leaf prior inverse-gamma shape"},
    {"--b0", "tree.b0", "leaf prior inverse-gamma scale"},
    {"--min-leaf", "tree.min_leaf", "minimum observations per leaf"},
    {"--max-depth", "tree.max_depth", "depth cap"},
    {"--thresholds", "tree.thresholds", "threshold pool: node or global"},
    {"--iterations", "tree.iterations", "MCMC iterations including burn-in"},
    {"--burn-in", "tree.burn_in", "burn-in iterations"},
    {"--thin", "tree.thin", "keep every k-th iteration"},
    {"--level", "interval.level", "predictive interval level"},
};

const std::vector<FlagBinding> kTrajFlags{
    {"--ig-shape", "traj.a", "inverse-gamma shape for v"},
    {"--ig-scale", "traj.b", "inverse-gamma scale for v"},
    {"--tau2", "traj.tau2", "GP amplitude"},
    {"--length-scale", "traj.length_scale", "GP length-scale in periods"},
    {"--weight-a", "traj.weight_a", "Beta prior A for the mixture weight"},
    {"--weight-b", "traj.weight_b", "Beta prior B for the mixture weight"},
    {"--fixed-weight", "traj.fixed_weight", "hold the mixture weight fixed"},
    {"--sweeps", "traj.iterations", "Gibbs sweeps including burn-in"},
    {"--sweep-burn-in", "traj.burn_in", "burn-in sweeps"},
    {"--sweep-thin", "traj.thin", "keep every k-th sweep"},
    {"--horizon", "traj.horizon", "forecast horizon in periods"},
    {"--min-history", "traj.min_history", "minimum history for an unflagged result"},
    {"--phi-grid", "traj.phi_grid", "griddy Gibbs points for phi"},
    {"--samples-per-draw", "traj.samples_per_draw", "forecast paths per retained sweep"},
};

const std::vector<FlagBinding> kSchemaFlags{
    {"--subject-column", "subject", "subject id column"},
    {"--time-column", "time", "time column"},
    {"--score-column", "score", "raw score column"},
    {"--delimiter", "delimiter", "comma, tab, semicolon or pipe"},
    {"--covariates", "covariates", "covariate list, e.g. x1, code:code, region:ks"},
    {"--baseline", "baseline", "baseline group for the KS covariate"},
};

// Collects a config file, per-key flags and --set overrides (in that order
// of increasing precedence).
struct ConfigSources {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;

  void bind(CLI::App* cmd, const std::vector<FlagBinding>& flags) {
    for (const auto& f : flags) cmd->add_option(f.flag, flag_values[f.key], f.help);
  }

  void add_common(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "flat key = value configuration file");
    cmd->add_option("--set", sets, "override a configuration key (key=value)");
  }

  text::KeyValueConfig collect() const {
    text::KeyValueConfig cfg;
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw ConfigError("cannot open configuration '" + file + "'");
      cfg = text::KeyValueConfig::parse(in);
    }
    for (const auto& [k, v] : flag_values)
      if (!v.empty()) cfg.set(k, v);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set(std::string(text::trim(s.substr(0, eq))), std::string(text::trim(s.substr(eq + 1))));
    }
    return resolve_config(cfg);
  }
};

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write '" + path.string() + "'");
  writer(out);
  if (!out) throw DomainError("write failed for '" + path.string() + "'");
}

// Manifest next to a command's outputs; `outputs` are paths relative to `dir`.
void write_manifest(const std::string& command, const std::map<std::string, std::string>& params,
                    std::uint64_t seed, const std::vector<std::string>& inputs, const fs::path& dir,
                    const std::vector<std::string>& outputs, const fs::path& manifest_path) {
  RunManifest m;
  m.command = command;
  m.parameters = params;
  m.seed = seed;
  for (const auto& in : inputs) m.add_input(in);
  for (const auto& out : outputs) m.add_output(dir, out);
  m.created_utc = utc_timestamp();
  m.write(manifest_path);
}

fs::path default_manifest(const fs::path& output) {
  auto p = output;
  p += ".manifest.json";
  return p;
}

std::string relative_name(const fs::path& p) { return p.filename().string(); }

PanelDataset load_built_panel(const std::string& path, const text::KeyValueConfig& cfg) {
  return build_covariates(load_panel_file(path, PanelSchema::from_config(cfg)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"peerbench: peer-adjusted benchmarking and trajectory testing"};
  app.set_version_flag("--version", std::string(PEERBENCH_VERSION));
  app.require_subcommand(1);

  // simulate-panel
  SynthPanelConfig sp;
  std::size_t sp_cells = 4;
  std::string sp_marginal = "skewed", sp_out, sp_truth, sp_schema_out;
  auto* c_sp = app.add_subcommand("simulate-panel", "generate a synthetic panel with ground truth");
  c_sp->add_option("--subjects", sp.subjects, "number of subjects")->capture_default_str();
  c_sp->add_option("--periods", sp.periods, "periods per subject")->capture_default_str();
  c_sp->add_option("--first-period", sp.first_period, "first calendar period")->capture_default_str();
  c_sp->add_option("--cells", sp_cells, "1, 2 or 4 cells")->capture_default_str();
  c_sp->add_option("--marginal", sp_marginal, "skewed or latent")->capture_default_str();
  c_sp->add_option("--missing", sp.missing_rate, "probability a period is missing")->capture_default_str();
  c_sp->add_option("--seed", sp.seed, "random seed")->capture_default_str();
  c_sp->add_option("-o,--out", sp_out, "panel file")->required();
  c_sp->add_option("--truth", sp_truth, "ground-truth sidecar file");
  c_sp->add_option("--schema-out", sp_schema_out, "write the matching panel configuration");

  // simulate-trajectories
  SynthTrajConfig st;
  std::string st_shape = "bump", st_out, st_truth;
  auto* c_st = app.add_subcommand("simulate-trajectories", "generate a labelled trajectory cohort");
  c_st->add_option("--subjects", st.subjects, "number of subjects")->capture_default_str();
  c_st->add_option("--periods", st.periods, "periods per subject")->capture_default_str();
  c_st->add_option("--first-period", st.first_period, "first calendar period")->capture_default_str();
  c_st->add_option("--fraction", st.fraction_nonnull, "fraction of non-null subjects")->capture_default_str();
  c_st->add_option("--amplitude", st.amplitude, "trend amplitude")->capture_default_str();
  c_st->add_option("--shape", st_shape, "bump or gp")->capture_default_str();
  c_st->add_option("--bump-width", st.bump_width, "bump width in periods")->capture_default_str();
  c_st->add_option("--phi-lo", st.phi_lo, "lower AR(1) coefficient")->capture_default_str();
  c_st->add_option("--phi-hi", st.phi_hi, "upper AR(1) coefficient")->capture_default_str();
  c_st->add_option("--v-lo", st.v_lo, "lower innovation variance")->capture_default_str();
  c_st->add_option("--v-hi", st.v_hi, "upper innovation variance")->capture_default_str();
  c_st->add_option("--missing", st.missing_rate, "probability a period is missing")->capture_default_str();
  c_st->add_option("--seed", st.seed, "random seed")->capture_default_str();
  c_st->add_option("-o,--out", st_out, "trajectory file (subject, time, y)")->required();
  c_st->add_option("--truth", st_truth, "ground-truth sidecar file");

  // transform
  ConfigSources tr_cfg;
  std::string tr_panel, tr_out;
  auto* c_tr = app.add_subcommand("transform", "normal-scores transform of raw panel scores");
  tr_cfg.add_common(c_tr);
  tr_cfg.bind(c_tr, kSchemaFlags);
  c_tr->add_option("--panel", tr_panel, "panel file")->required();
  c_tr->add_option("-o,--out", tr_out, "scores file (subject, time, raw, z)")->required();

  // fit-tree
  ConfigSources ft_cfg;
  std::string ft_panel, ft_out, ft_seed;
  auto* c_ft = app.add_subcommand("fit-tree", "fit the benchmarking tree and write the benchmark table");
  ft_cfg.add_common(c_ft);
  ft_cfg.bind(c_ft, kSchemaFlags);
  ft_cfg.bind(c_ft, kTreeFlags);
  c_ft->add_option("--seed", ft_cfg.flag_values["seed"], "random seed");
  c_ft->add_option("--panel", ft_panel, "panel file")->required();
  c_ft->add_option("-o,--out-dir", ft_out, "output directory")->required();

  // intervals
  ConfigSources iv_cfg;
  std::string iv_panel, iv_draws, iv_out;
  std::vector<std::string> iv_subjects;
  auto* c_iv = app.add_subcommand("intervals", "predictive intervals from saved tree draws");
  iv_cfg.add_common(c_iv);
  iv_cfg.bind(c_iv, kSchemaFlags);
  c_iv->add_option("--level", iv_cfg.flag_values["interval.level"], "interval level");
  c_iv->add_option("--panel", iv_panel, "panel file used for the fit")->required();
  c_iv->add_option("--draws", iv_draws, "tree_draws.json from fit-tree")->required();
  c_iv->add_option("--subject", iv_subjects, "restrict to these subjects");
  c_iv->add_option("-o,--out", iv_out, "interval file")->required();

  // test-trajectories
  ConfigSources tt_cfg;
  std::string tt_input, tt_out, tt_value = "y";
  auto* c_tt = app.add_subcommand("test-trajectories", "posterior inclusion probabilities and forecast bands");
  tt_cfg.add_common(c_tt);
  tt_cfg.bind(c_tt, kTrajFlags);
  c_tt->add_option("--seed", tt_cfg.flag_values["seed"], "random seed");
  c_tt->add_option("-i,--input", tt_input, "benchmark table or trajectory file")->required();
  c_tt->add_option("--value-column", tt_value, "column holding benchmarked values")->capture_default_str();
  c_tt->add_option("-o,--out-dir", tt_out, "output directory")->required();

  // pipeline
  ConfigSources pl_cfg;
  std::string pl_out, pl_replay;
  auto* c_pl = app.add_subcommand("pipeline", "transform, fit-tree and test-trajectories in one run");
  pl_cfg.add_common(c_pl);
  pl_cfg.bind(c_pl, kSchemaFlags);
  pl_cfg.bind(c_pl, kTreeFlags);
  pl_cfg.bind(c_pl, kTrajFlags);
  c_pl->add_option("--panel", pl_cfg.flag_values["panel"], "panel file");
  c_pl->add_option("--seed", pl_cfg.flag_values["seed"], "random seed");
  c_pl->add_option("--replay", pl_replay, "rerun with the settings of an earlier manifest");
  c_pl->add_option("-o,--out-dir", pl_out, "output directory")->required();

  // emit-plots
  std::string ep_results, ep_out;
  std::vector<std::string> ep_subjects;
  auto* c_ep = app.add_subcommand("emit-plots", "per-subject plot data from pipeline results");
  c_ep->add_option("-r,--results", ep_results, "pipeline output directory")->required();
  c_ep->add_option("--subject", ep_subjects, "subjects to emit (all if omitted)");
  c_ep->add_option("-o,--out-dir", ep_out, "plot data directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (c_sp->parsed()) {
      if (sp_cells == 1) sp.cells = {{0.0, 1.0}};
      else if (sp_cells == 2) sp.cells = {{-0.5, 0.5}, {0.5, 1.5}};
      else if (sp_cells != 4) throw ConfigError("--cells must be 1, 2 or 4");
      if (sp_marginal == "skewed") sp.marginal = RawMarginal::kSkewed;
      else if (sp_marginal == "latent") sp.marginal = RawMarginal::kLatent;
      else throw ConfigError("--marginal must be 'skewed' or 'latent'");
      const auto panel = generate_panel(sp);
      const fs::path out = sp_out;
      write_file(out, [&](std::ostream& os) { write_panel(os, panel.data); });
      std::vector<std::string> outputs{relative_name(out)};
      if (!sp_truth.empty()) {
        write_file(sp_truth, [&](std::ostream& os) { write_panel_truth(os, panel.truth); });
        outputs.push_back(fs::relative(sp_truth, out.parent_path().empty() ? "." : out.parent_path()).string());
      }
      if (!sp_schema_out.empty()) {
        write_file(sp_schema_out, [&](std::ostream& os) { os << sp.schema().to_config().to_string(); });
        outputs.push_back(fs::relative(sp_schema_out, out.parent_path().empty() ? "." : out.parent_path()).string());
      }
      write_manifest("simulate-panel",
                     {{"subjects", std::to_string(sp.subjects)},
                      {"periods", std::to_string(sp.periods)},
                      {"first_period", std::to_string(sp.first_period)},
                      {"cells", std::to_string(sp_cells)},
                      {"marginal", sp_marginal},
                      {"missing", text::format_double(sp.missing_rate)}},
                     sp.seed, {}, out.parent_path().empty() ? "." : out.parent_path(), outputs,
                     default_manifest(out));
      std::cerr << "wrote " << panel.data.size() << " observations to " << out.string() << '\n';
    } else if (c_st->parsed()) {
      if (st_shape == "bump") st.shape = TrendShape::kBump;
      else if (st_shape == "gp") st.shape = TrendShape::kGaussianProcess;
      else throw ConfigError("--shape must be 'bump' or 'gp'");
      const auto cohort = generate_trajectories(st);
      const fs::path out = st_out;
      const fs::path dir = out.parent_path().empty() ? "." : out.parent_path();
      write_file(out, [&](std::ostream& os) { write_trajectories(os, cohort.trajectories); });
      std::vector<std::string> outputs{relative_name(out)};
      if (!st_truth.empty()) {
        write_file(st_truth, [&](std::ostream& os) { write_trajectory_truth(os, cohort); });
        outputs.push_back(fs::relative(st_truth, dir).string());
      }
      write_manifest("simulate-trajectories",
                     {{"subjects", std::to_string(st.subjects)},
                      {"periods", std::to_string(st.periods)},
                      {"first_period", std::to_string(st.first_period)},
                      {"fraction", text::format_double(st.fraction_nonnull)},
                      {"amplitude", text::format_double(st.amplitude)},
                      {"shape", st_shape},
                      {"bump_width", text::format_double(st.bump_width)},
                      {"phi_range", text::format_double(st.phi_lo) + "," + text::format_double(st.phi_hi)},
                      {"v_range", text::format_double(st.v_lo) + "," + text::format_double(st.v_hi)},
                      {"missing", text::format_double(st.missing_rate)}},
                     st.seed, {}, dir, outputs, default_manifest(out));
      std::cerr << "wrote " << cohort.trajectories.size() << " trajectories to " << out.string() << '\n';
    } else if (c_tr->parsed()) {
      const auto cfg = tr_cfg.collect();
      const auto data = load_built_panel(tr_panel, cfg);
      const auto ns = fit_normal_scores(data.raw_scores());
      const fs::path out = tr_out;
      write_file(out, [&](std::ostream& os) { write_scores(os, data, ns.z); });
      write_manifest("transform", cfg.values(), 0, {tr_panel}, out.parent_path().empty() ? "." : out.parent_path(),
                     {relative_name(out)}, default_manifest(out));
    } else if (c_ft->parsed()) {
      const auto cfg = ft_cfg.collect();
      const auto tree_cfg = tree_config_from(cfg);
      const auto data = load_built_panel(ft_panel, cfg);
      if (data.size() == 0) throw DomainError("panel has no usable observations");
      const auto ns = fit_normal_scores(data.raw_scores());
      const auto fit = fit_benchmarks(data, ns.z, tree_cfg, interval_level_from(cfg));
      OutputSet out(ft_out);
      try {
        out.ensure_dir();
        out.write("benchmark_table.csv", [&](std::ostream& os) { write_benchmark_table(os, fit.rows); });
        out.write("tree_draws.json",
                  [&](std::ostream& os) { os << tree_draws_to_json(fit.draws, data.covariate_names).dump() << '\n'; });
        write_manifest("fit-tree", cfg.values(), tree_cfg.schedule.seed, {ft_panel}, ft_out, out.files(),
                       fs::path(ft_out) / "manifest.json");
      } catch (...) {
        out.remove_all();
        throw;
      }
      for (int m = 0; m < 4; ++m)
        std::cerr << move_name(static_cast<MoveType>(m)) << ": accepted " << fit.accepted[static_cast<std::size_t>(m)]
                  << " of " << fit.proposed[static_cast<std::size_t>(m)] << '\n';
    } else if (c_iv->parsed()) {
      const auto cfg = iv_cfg.collect();
      const double level = interval_level_from(cfg);
      const auto data = load_built_panel(iv_panel, cfg);
      const auto ns = fit_normal_scores(data.raw_scores());
      const auto set = read_tree_draws(iv_draws);
      if (set.covariate_names != data.covariate_names)
        throw DomainError("tree draws were fitted on different covariates");
      std::set<std::string> known;
      for (const auto& o : data.observations) known.insert(o.subject_id);
      for (const auto& s : iv_subjects) require_known(s, known);
      const std::set<std::string> wanted(iv_subjects.begin(), iv_subjects.end());
      const auto td = training_data(data);
      const auto iv = predictive_intervals(set.draws, *td, level);
      const fs::path out = iv_out;
      write_file(out, [&](std::ostream& os) {
        os << "subject,time,z,mean,lower,upper\n";
        for (std::size_t i = 0; i < data.size(); ++i) {
          const auto& o = data.observations[i];
          if (!wanted.empty() && !wanted.count(o.subject_id)) continue;
          os << text::join_record({o.subject_id, std::to_string(o.time), text::format_double(ns.z[i]),
                                   text::format_double(iv[i].mean), text::format_double(iv[i].lower),
                                   text::format_double(iv[i].upper)},
                                  ',')
             << '\n';
        }
      });
      write_manifest("intervals", cfg.values(), 0, {iv_panel, iv_draws},
                     out.parent_path().empty() ? "." : out.parent_path(), {relative_name(out)}, default_manifest(out));
    } else if (c_tt->parsed()) {
      const auto cfg = tt_cfg.collect();
      const auto traj_cfg = traj_config_from(cfg);
      const auto trajectories = trajectories_from_table(CsvTable::read_file(tt_input), tt_value);
      const auto res = run_trajectory_test(trajectories, traj_cfg);
      OutputSet out(tt_out);
      try {
        out.ensure_dir();
        write_trajectory_outputs(out, res);
        auto params = cfg.values();
        params["value_column"] = tt_value;
        write_manifest("test-trajectories", params, traj_cfg.schedule.seed, {tt_input}, tt_out, out.files(),
                       fs::path(tt_out) / "manifest.json");
      } catch (...) {
        out.remove_all();
        throw;
      }
      std::cerr << "posterior mean of w: " << res.weight_posterior_mean << " (prior mean " << res.weight_prior_mean
                << ")\n";
    } else if (c_pl->parsed()) {
      if (!pl_replay.empty()) {
        const auto manifest = RunManifest::read(pl_replay);
        run_pipeline({}, pl_out, &std::cerr, &manifest);
      } else {
        run_pipeline(pl_cfg.collect(), pl_out, &std::cerr);
      }
    } else if (c_ep->parsed()) {
      const auto files = emit_plot_data(ep_results, ep_subjects, ep_out);
      write_manifest("emit-plots", {{"results", ep_results}}, 0, {}, ep_out, files,
                     fs::path(ep_out) / "manifest.json");
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
