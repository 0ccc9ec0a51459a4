// nlfm command line: synthetic data generation, fitting, experiment
// presets, and model evaluation. See README.md for config keys.

#include "nlfm/io.hpp"
#include "nlfm/parallel.hpp"
#include "nlfm/presets.hpp"
#include "nlfm/trace_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace nlfm;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  int diag_every = 0;
  bool fixed_clock_flag = false;
  std::vector<std::string> overrides;
};

ConfigMap load_config(const GlobalArgs& g) {
  ConfigMap cfg;
  if (!g.config_path.empty()) cfg = ConfigMap::from_file(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects section.key=value, got " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed.has_value()) {
    cfg.set("synth.seed", std::to_string(*g.seed));
    cfg.set("solver.seed", std::to_string(*g.seed));
    cfg.set("split.seed", std::to_string(*g.seed));
  }
  if (g.diag_every > 0) cfg.set("solver.diag_every", std::to_string(g.diag_every));
  return cfg;
}

void apply_runtime(const GlobalArgs& g) {
  set_num_threads(g.threads);
  set_fixed_clock(g.fixed_clock_flag);
}

int cmd_synth(const GlobalArgs& g) {
  apply_runtime(g);
  const ConfigMap cfg = load_config(g);
  const SyntheticConfig synth = synthetic_config_from(cfg);
  auto [obs, truth] = generate_synthetic(synth);
  fs::create_directories(g.out_dir);
  save_observations(obs, (fs::path(g.out_dir) / "obs.csv").string());
  save_factors(truth.z_star, (fs::path(g.out_dir) / "truth_z.csv").string());
  save_link(truth.link, (fs::path(g.out_dir) / "truth_link.json").string());
  std::cout << "synth: n=" << obs.n << " T=" << obs.T << " r=" << synth.r << " M=" << obs.M()
            << " kappa=" << truth.kappa() << " mu=" << truth.mu() << "\n";
  std::cout << "wrote " << g.out_dir << "/{obs.csv,truth_z.csv,truth_link.json}\n";
  return 0;
}

int cmd_fit(const GlobalArgs& g, const std::string& data_path, const std::string& truth_dir) {
  apply_runtime(g);
  const ConfigMap cfg = load_config(g);
  const ObservationSet obs = load_observations(data_path);
  SolverConfig solver = solver_config_from(cfg);

  GroundTruth truth;
  const GroundTruth* truth_ptr = nullptr;
  if (!truth_dir.empty()) {
    truth.z_star = load_factors((fs::path(truth_dir) / "truth_z.csv").string());
    truth.link = load_link((fs::path(truth_dir) / "truth_link.json").string());
    truth.sigma_star = Vec::Ones(truth.z_star.r);
    truth_ptr = &truth;
  }

  const SolverTrace trace = bcd_run(obs, solver, truth_ptr);
  fs::create_directories(g.out_dir);
  write_trace(trace, (fs::path(g.out_dir) / "trace.csv").string());
  save_factors(trace.z_final, (fs::path(g.out_dir) / "z.csv").string());
  save_link(trace.phi_final, (fs::path(g.out_dir) / "link.json").string());
  if (trace.aborted_at.has_value()) {
    std::cerr << "fit aborted at iteration " << *trace.aborted_at << ": " << trace.abort_reason << "\n";
    return 1;
  }
  const TraceRow& last = trace.rows.back();
  std::cout << "fit: iters=" << last.iter << " loss=" << format_double(last.loss)
            << " train_rmse=" << format_double(rmse(obs, trace.z_final, trace.phi_final));
  if (last.delta_fro.has_value()) std::cout << " delta_fro=" << format_double(*last.delta_fro);
  std::cout << "\nwrote " << g.out_dir << "/{trace.csv,z.csv,link.json}\n";
  return 0;
}

int cmd_preset(const GlobalArgs& g, const std::string& name) {
  apply_runtime(g);
  ExperimentPreset preset;
  preset.name = name;
  preset.base = load_config(g);
  const auto rows = run_preset(preset, g.out_dir);
  std::cout << "preset " << name << ": " << rows.size() << " runs, summary in " << g.out_dir
            << "/summary.{csv,txt}\n";
  for (const auto& row : rows) {
    std::cout << "  " << row.method << " grid=" << row.grid_value << " best_iter=" << row.best_iter;
    if (row.val_rmse.has_value()) std::cout << " val_rmse=" << format_double(*row.val_rmse);
    if (row.delta_fro_final.has_value()) std::cout << " delta_fro=" << format_double(*row.delta_fro_final);
    std::cout << "\n";
  }
  return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& model_dir, const std::string& data_path) {
  apply_runtime(g);
  const ObservationSet obs = load_observations(data_path);
  const FactorMatrix z = load_factors((fs::path(model_dir) / "z.csv").string());
  const Link phi = load_link((fs::path(model_dir) / "link.json").string());
  std::cout << "rmse=" << format_double(rmse(obs, z, phi)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonlinear factor model solver"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key=value config file");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--seed", g.seed, "seed override for synth/solver/split");
  app.add_option("--threads", g.threads, "worker threads (results are thread-count independent)");
  app.add_option("--diag-every", g.diag_every, "diagnostic stride override");
  app.add_flag("--fixed-clock", g.fixed_clock_flag, "emit wall-clock columns as 0 (reproducibility)");
  app.add_option("--set", g.overrides, "config override section.key=value")->take_all();

  auto* synth = app.add_subcommand("synth", "generate a synthetic instance");
  auto* fit = app.add_subcommand("fit", "run the solver on an observation file");
  std::string data_path, truth_dir, preset_name, model_dir;
  fit->add_option("--data", data_path, "observation csv")->required();
  fit->add_option("--truth", truth_dir, "directory with truth_z.csv/truth_link.json");
  auto* preset = app.add_subcommand("preset", "run an experiment preset");
  preset->add_option("name", preset_name,
                     "noise-sweep|sample-size-sweep|alpha-sweep|regret-curve|movielens|jester|custom")
      ->required();
  auto* eval = app.add_subcommand("eval", "evaluate a fitted model on an observation file");
  eval->add_option("--model", model_dir, "directory with z.csv/link.json")->required();
  eval->add_option("--data", data_path, "observation csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(g);
    if (fit->parsed()) return cmd_fit(g, data_path, truth_dir);
    if (preset->parsed()) return cmd_preset(g, preset_name);
    if (eval->parsed()) return cmd_eval(g, model_dir, data_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
