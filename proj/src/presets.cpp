#include "nlfm/presets.hpp"

#include "nlfm/io.hpp"
#include "nlfm/objective.hpp"
#include "nlfm/parallel.hpp"
#include "nlfm/trace_io.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nlfm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigMap ConfigMap::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  ConfigMap cfg;
  std::string line, section;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: expected key=value at " + path + ":" + std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

std::string ConfigMap::get(const std::string& key, const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : std::stod(it->second);
}

Index ConfigMap::get_index(const std::string& key, Index fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : static_cast<Index>(std::stoll(it->second));
}

int ConfigMap::get_int(const std::string& key, int fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : std::stoi(it->second);
}

std::uint64_t ConfigMap::get_seed(const std::string& key, std::uint64_t fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : std::stoull(it->second);
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  return it->second == "1" || it->second == "true" || it->second == "on" || it->second == "yes";
}

std::vector<double> ConfigMap::get_grid(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<double> out;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(trim(tok)));
  return out;
}

AnalyticLink analytic_link_from(const std::string& name) {
  if (name == "identity") return AnalyticLink::identity;
  if (name == "sigmoid") return AnalyticLink::sigmoid;
  if (name == "piecewise") return AnalyticLink::piecewise;
  throw std::invalid_argument("unknown link name: " + name);
}

SyntheticConfig synthetic_config_from(const ConfigMap& cfg) {
  SyntheticConfig out;
  out.n = cfg.get_index("synth.n", 100);
  out.T = cfg.get_index("synth.T", 100);
  out.r = cfg.get_index("synth.r", 3);
  out.M = cfg.get_index("synth.M", 5000);
  const std::string sampling = cfg.get("synth.sampling", "with-replacement");
  if (sampling == "with-replacement") out.sampling = SamplingScheme::with_replacement;
  else if (sampling == "without-replacement") out.sampling = SamplingScheme::without_replacement;
  else if (sampling == "complete") out.sampling = SamplingScheme::complete;
  else throw std::invalid_argument("unknown sampling scheme: " + sampling);
  const std::string noise = cfg.get("synth.noise", "gaussian");
  if (noise == "none") out.noise = NoiseKind::none;
  else if (noise == "gaussian") out.noise = NoiseKind::gaussian;
  else if (noise == "subgaussian-bounded") out.noise = NoiseKind::subgaussian_bounded;
  else throw std::invalid_argument("unknown noise kind: " + noise);
  out.sigma = cfg.get_double("synth.sigma", 0.0);
  if (out.sigma == 0.0) out.noise = NoiseKind::none;
  out.link = analytic_link_from(cfg.get("synth.link", "sigmoid"));
  out.seed = cfg.get_seed("synth.seed", 1);
  return out;
}

SolverConfig solver_config_from(const ConfigMap& cfg) {
  SolverConfig out;
  out.r = cfg.get_index("solver.r", 3);
  out.zeta = cfg.get_double("solver.zeta", 1e-5);
  out.eta = cfg.get_double("solver.eta", 1e-4);
  out.params.lambda = cfg.get_double("solver.lambda", 0.5);
  out.params.alpha = cfg.get_double("solver.alpha", 1e-3);
  out.kernel.bandwidth = cfg.get_double("solver.kernel_bandwidth", 0.0);
  out.bounds.xi = cfg.get_double("solver.xi", 0.1);
  out.bounds.Xi = cfg.get_double("solver.Xi", 50.0);
  out.bounds.grid_points = cfg.get_int("solver.grid_points", 64);
  const std::string mono = cfg.get("solver.monotone_mode", "none");
  if (mono == "none") out.monotone_mode = MonotoneMode::none;
  else if (mono == "slope-clip") out.monotone_mode = MonotoneMode::slope_clip;
  else if (mono == "qp") out.monotone_mode = MonotoneMode::qp;
  else throw std::invalid_argument("unknown monotone mode: " + mono);
  out.incoherent.enabled = cfg.get_bool("solver.incoherent", false);
  if (cfg.has("solver.beta")) out.incoherent.beta_override = cfg.get_double("solver.beta", 0.0);
  out.mu_estimate = cfg.get_double("solver.mu_estimate", 3.0);
  out.max_iters = cfg.get_int("solver.max_iters", 1000);
  const std::string init = cfg.get("solver.phi_init", "mean-offset");
  if (init == "zero") out.phi_init = PhiInit::zero;
  else if (init == "mean-offset") out.phi_init = PhiInit::mean_offset;
  else if (init == "kernel-ridge-warmstart") out.phi_init = PhiInit::kernel_ridge_warmstart;
  else throw std::invalid_argument("unknown phi init: " + init);
  out.diag_every = cfg.get_int("solver.diag_every", 25);
  out.seed = cfg.get_seed("solver.seed", 0);
  if (cfg.has("solver.frozen_link")) out.frozen_link = analytic_link_from(cfg.get("solver.frozen_link", ""));
  out.dict_spacing = cfg.get_double("solver.dict_spacing", 0.0);
  out.phi_sharp_subsample = cfg.get_index("solver.subsample", 2000);
  out.gamma = cfg.get_double("solver.gamma", 1.0);
  if (cfg.has("solver.init_rescale")) out.init_rescale = cfg.get_bool("solver.init_rescale", true);
  return out;
}

namespace {

namespace fs = std::filesystem;

double elapsed_s(const std::chrono::steady_clock::time_point& start) {
  if (fixed_clock()) return 0.0;
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '/' || c == ' ') c = '-';
  return s;
}

/// One synthetic grid-point run: generate, solve, write the trace.
PresetRunSummary run_synth_point(const std::string& preset, const std::string& grid_value,
                                 const std::string& method, const SyntheticConfig& synth,
                                 const SolverConfig& solver, const std::string& out_dir) {
  PresetRunSummary row;
  row.preset = preset;
  row.grid_value = grid_value;
  row.method = method;
  const auto start = std::chrono::steady_clock::now();
  auto [obs, truth] = generate_synthetic(synth);
  SolverTrace trace = bcd_run(obs, solver, &truth);
  row.wall_s = elapsed_s(start);
  const std::string trace_name =
      "trace_" + sanitize(preset) + "_" + sanitize(grid_value) + "_" + sanitize(method) + ".csv";
  write_trace(trace, (fs::path(out_dir) / trace_name).string());
  if (trace.aborted_at.has_value()) return row;
  const TraceRow& last = trace.rows.back();
  row.best_iter = last.iter;
  row.train_rmse = rmse(obs, trace.z_final, trace.phi_final);
  row.delta_fro_final = last.delta_fro;
  const Vec x = sample_products(obs, trace.z_final);
  row.x_min = x.minCoeff();
  row.x_max = x.maxCoeff();
  return row;
}

struct DatasetMethod {
  std::string name;
  bool frozen_identity = false;
  bool incoherent = false;
  std::optional<double> beta;
  MonotoneMode monotone = MonotoneMode::none;
};

/// One dataset method run with best-checkpoint selection on validation RMSE.
PresetRunSummary run_dataset_method(const std::string& preset, const DatasetMethod& method,
                                    const ObservationSet& train, const ObservationSet& val,
                                    const ObservationSet& all_obs, SolverConfig solver,
                                    const std::string& out_dir) {
  PresetRunSummary row;
  row.preset = preset;
  row.grid_value = "-";
  row.method = method.name;

  if (method.frozen_identity) {
    solver = freeze_phi_mode(std::move(solver), AnalyticLink::identity);
    solver.params.alpha = 0.0;
  }
  solver.incoherent.enabled = method.incoherent;
  solver.incoherent.beta_override = method.beta;
  solver.monotone_mode = method.monotone;

  struct Best {
    int iter = -1;
    double val_rmse = std::numeric_limits<double>::infinity();
    FactorMatrix z;
    Link phi = AnalyticLink::identity;
  } best;
  SolverHooks hooks;
  const int stride = solver.diag_every;
  const int last_iter = solver.max_iters;
  hooks.on_iterate = [&](int iter, const FactorMatrix& z, const Link& phi) {
    if (iter % stride != 0 && iter != last_iter) return;
    const double v = rmse(val, z, phi);
    if (v < best.val_rmse) {
      best.iter = iter;
      best.val_rmse = v;
      best.z = z;
      best.phi = phi;
    }
  };

  const auto start = std::chrono::steady_clock::now();
  SolverTrace trace = bcd_run(train, solver, nullptr, &hooks);
  row.wall_s = elapsed_s(start);
  write_trace(trace, (fs::path(out_dir) / ("trace_" + sanitize(preset) + "_" + sanitize(method.name) + ".csv")).string());
  if (trace.aborted_at.has_value() || best.iter < 0) return row;

  row.best_iter = best.iter;
  row.val_rmse = best.val_rmse;
  row.train_rmse = rmse(train, best.z, best.phi);
  const Vec x = sample_products(all_obs, best.z);
  row.x_min = x.minCoeff();
  row.x_max = x.maxCoeff();
  save_factors(best.z, (fs::path(out_dir) / ("z_" + sanitize(method.name) + ".csv")).string());
  save_link(best.phi, (fs::path(out_dir) / ("link_" + sanitize(method.name) + ".json")).string());
  return row;
}

std::vector<PresetRunSummary> run_noise_sweep(const ConfigMap& base, const std::string& out_dir) {
  const std::vector<double> grid = base.get_grid("preset.grid", {0.0, 0.05, 0.1, 0.2});
  const int seeds = base.get_int("preset.seeds", 3);
  std::vector<PresetRunSummary> rows;
  for (double sigma : grid) {
    for (int s = 0; s < seeds; ++s) {
      ConfigMap cfg = base;
      cfg.set("synth.sigma", format_double(sigma));
      cfg.set("synth.link", cfg.get("synth.link", "sigmoid"));
      SyntheticConfig synth = synthetic_config_from(cfg);
      synth.seed = cfg.get_seed("synth.seed", 1) + static_cast<std::uint64_t>(s);
      SolverConfig solver = solver_config_from(cfg);
      solver.r = synth.r;
      if (!cfg.has("solver.zeta")) solver.zeta = 10.0;
      if (!cfg.has("solver.lambda")) solver.params.lambda = 0.001;
      if (!cfg.has("solver.alpha")) solver.params.alpha = 0.0;
      if (!cfg.has("solver.max_iters")) solver.max_iters = 1500;
      solver = freeze_phi_mode(std::move(solver), Link{synth.link});
      rows.push_back(run_synth_point("noise-sweep", format_double(sigma),
                                     "frozen-" + std::string(to_string(synth.link)) + "/seed" + std::to_string(s),
                                     synth, solver, out_dir));
    }
  }
  return rows;
}

std::vector<PresetRunSummary> run_sample_size_sweep(const ConfigMap& base, const std::string& out_dir) {
  const std::vector<double> grid = base.get_grid("preset.grid", {1, 2, 3, 4, 5, 6, 7, 8});
  std::vector<PresetRunSummary> rows;
  for (double mult : grid) {
    ConfigMap cfg = base;
    if (!cfg.has("synth.n")) cfg.set("synth.n", "200");
    if (!cfg.has("synth.T")) cfg.set("synth.T", "200");
    if (!cfg.has("synth.r")) cfg.set("synth.r", "5");
    cfg.set("synth.link", "identity");
    cfg.set("synth.noise", "none");
    SyntheticConfig synth = synthetic_config_from(cfg);
    synth.M = static_cast<Index>(mult * static_cast<double>(synth.r) * static_cast<double>(synth.n));
    SolverConfig solver = solver_config_from(cfg);
    solver.r = synth.r;
    if (!cfg.has("solver.zeta")) solver.zeta = 4.0;
    if (!cfg.has("solver.lambda")) solver.params.lambda = 0.001;
    if (!cfg.has("solver.alpha")) solver.params.alpha = 0.0;
    if (!cfg.has("solver.max_iters")) solver.max_iters = 5000;
    solver = freeze_phi_mode(std::move(solver), Link{AnalyticLink::identity});
    rows.push_back(run_synth_point("sample-size-sweep", format_double(mult), "frozen-identity", synth,
                                   solver, out_dir));
  }
  return rows;
}

}  // namespace

ConfigMap shared_param_defaults(ConfigMap cfg) {
  // the joint-learning setting shared by the sweeps: n = T = 100, r = 3,
  // M = 5000, lambda = 0.5, zeta = 1e-5, eta = 1e-4 in the unnormalized
  // convention, translated to the (1/M)-normalized objective used here
  const double m = 5000.0;
  if (!cfg.has("synth.n")) cfg.set("synth.n", "100");
  if (!cfg.has("synth.T")) cfg.set("synth.T", "100");
  if (!cfg.has("synth.r")) cfg.set("synth.r", "3");
  if (!cfg.has("synth.M")) cfg.set("synth.M", "5000");
  if (!cfg.has("solver.r")) cfg.set("solver.r", "3");
  if (!cfg.has("solver.zeta")) cfg.set("solver.zeta", format_double(m * 1e-5));
  if (!cfg.has("solver.eta")) cfg.set("solver.eta", format_double(m * 1e-4));
  if (!cfg.has("solver.alpha")) cfg.set("solver.alpha", format_double(1e-3 / m));
  if (!cfg.has("solver.lambda")) cfg.set("solver.lambda", format_double(0.5 / m));
  if (!cfg.has("solver.kernel_bandwidth")) cfg.set("solver.kernel_bandwidth", "1");
  if (!cfg.has("solver.gamma")) cfg.set("solver.gamma", "0.02");
  if (!cfg.has("solver.incoherent")) cfg.set("solver.incoherent", "1");
  if (!cfg.has("solver.max_iters")) cfg.set("solver.max_iters", "2000");
  return cfg;
}

namespace {

std::vector<PresetRunSummary> run_alpha_sweep(const ConfigMap& base, const std::string& out_dir) {
  const std::vector<double> grid = base.get_grid("preset.grid", {1e-4, 1e-3, 1e-2, 1e-1});
  std::vector<PresetRunSummary> rows;
  for (double alpha : grid) {
    ConfigMap cfg = shared_param_defaults(base);
    if (!cfg.has("synth.sigma")) cfg.set("synth.sigma", "0.1");
    SyntheticConfig synth = synthetic_config_from(cfg);
    SolverConfig solver = solver_config_from(cfg);
    solver.r = synth.r;
    solver.params.alpha = alpha / static_cast<double>(synth.M);  // grid is in the unnormalized convention
    rows.push_back(run_synth_point("alpha-sweep", format_double(alpha), "joint", synth, solver, out_dir));
  }
  return rows;
}

std::vector<PresetRunSummary> run_regret_curve(const ConfigMap& base, const std::string& out_dir) {
  std::vector<std::string> links{"identity", "sigmoid", "piecewise"};
  if (base.has("preset.links")) {
    links.clear();
    std::istringstream ss(base.get("preset.links", ""));
    std::string tok;
    while (std::getline(ss, tok, ',')) links.push_back(trim(tok));
  }
  std::vector<PresetRunSummary> rows;
  for (const auto& link : links) {
    ConfigMap cfg = shared_param_defaults(base);
    cfg.set("synth.link", link);
    if (!cfg.has("synth.sigma")) cfg.set("synth.sigma", "0");
    SyntheticConfig synth = synthetic_config_from(cfg);
    SolverConfig solver = solver_config_from(cfg);
    solver.r = synth.r;
    rows.push_back(run_synth_point("regret-curve", link, "joint", synth, solver, out_dir));
  }
  return rows;
}

std::vector<PresetRunSummary> run_ratings_preset(const std::string& preset, const ConfigMap& base,
                                                 const std::string& out_dir) {
  const std::string path = base.get("data.path", "");
  if (path.empty()) throw std::runtime_error(preset + ": data.path must be set (datasets are not downloaded)");
  const bool jester = preset == "jester";
  const RatingsDataset ds =
      load_ratings(path, jester ? RatingsFormat::jester_dense : RatingsFormat::movielens_csv);
  SplitSpec spec;
  spec.holdout_fraction = base.get_double("split.holdout", 0.1);
  spec.seed = base.get_seed("split.seed", 7);
  spec.strategy = base.get("split.strategy", "row-stratified") == "uniform"
                      ? SplitSpec::Strategy::uniform
                      : SplitSpec::Strategy::row_stratified;
  auto [train, val] = split(ds, spec);
  const ObservationSet all_obs = to_observations(ds);

  ConfigMap cfg = base;
  if (!cfg.has("solver.r")) cfg.set("solver.r", jester ? "5" : "10");
  SolverConfig solver = solver_config_from(cfg);
  if (!cfg.has("solver.zeta")) solver.zeta = 0.3;
  if (!cfg.has("solver.eta")) solver.eta = 0.05;
  if (!cfg.has("solver.alpha")) solver.params.alpha = 1e-5;
  if (!cfg.has("solver.lambda")) solver.params.lambda = 1e-3;
  if (!cfg.has("solver.max_iters")) solver.max_iters = 2000;
  if (!cfg.has("solver.diag_every")) solver.diag_every = 25;

  std::vector<DatasetMethod> methods;
  if (jester) {
    methods.push_back({"id-link", true, false, std::nullopt, MonotoneMode::none});
    methods.push_back({"nl-monotone", false, true, base.get_double("preset.beta_nl", 3.537),
                       MonotoneMode::slope_clip});
  } else {
    methods.push_back({"id-link", true, false, std::nullopt, MonotoneMode::none});
    methods.push_back({"id-zproj", true, true, base.get_double("preset.beta_id", 2.441), MonotoneMode::none});
    methods.push_back({"nl-zproj", false, true, base.get_double("preset.beta_nl", 0.496), MonotoneMode::none});
    methods.push_back({"nl-monotone", false, true, base.get_double("preset.beta_nl", 0.496),
                       MonotoneMode::slope_clip});
  }

  std::vector<PresetRunSummary> rows;
  for (const auto& method : methods)
    rows.push_back(run_dataset_method(preset, method, train, val, all_obs, solver, out_dir));
  return rows;
}

std::vector<PresetRunSummary> run_custom(const ConfigMap& base, const std::string& out_dir) {
  SyntheticConfig synth = synthetic_config_from(base);
  SolverConfig solver = solver_config_from(base);
  solver.r = synth.r;
  if (base.has("solver.frozen_link"))
    solver = freeze_phi_mode(std::move(solver), Link{analytic_link_from(base.get("solver.frozen_link", ""))});
  return {run_synth_point("custom", "-", solver.frozen_link.has_value() ? "frozen" : "joint", synth,
                          solver, out_dir)};
}

}  // namespace

std::vector<PresetRunSummary> run_preset(const ExperimentPreset& preset, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<PresetRunSummary> rows;
  if (preset.name == "noise-sweep") rows = run_noise_sweep(preset.base, out_dir);
  else if (preset.name == "sample-size-sweep") rows = run_sample_size_sweep(preset.base, out_dir);
  else if (preset.name == "alpha-sweep") rows = run_alpha_sweep(preset.base, out_dir);
  else if (preset.name == "regret-curve") rows = run_regret_curve(preset.base, out_dir);
  else if (preset.name == "movielens" || preset.name == "jester") rows = run_ratings_preset(preset.name, preset.base, out_dir);
  else if (preset.name == "custom") rows = run_custom(preset.base, out_dir);
  else throw std::invalid_argument("unknown preset: " + preset.name);
  write_summary(rows, out_dir);
  return rows;
}

namespace {

std::string opt_str(const std::optional<double>& v) { return v.has_value() ? format_double(*v) : ""; }

}  // namespace

void write_summary(const std::vector<PresetRunSummary>& rows, const std::string& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream csv((fs::path(out_dir) / "summary.csv").string(), std::ios::binary);
    csv << "preset,grid_value,method,best_iter,train_rmse,val_rmse,delta_fro_final,wall_s,x_min,x_max\n";
    for (const auto& row : rows) {
      csv << row.preset << ',' << row.grid_value << ',' << row.method << ',' << row.best_iter << ','
          << opt_str(row.train_rmse) << ',' << opt_str(row.val_rmse) << ','
          << opt_str(row.delta_fro_final) << ',' << format_double(row.wall_s) << ','
          << opt_str(row.x_min) << ',' << opt_str(row.x_max) << '\n';
    }
  }

  // aligned text table; noise sweeps also get the per-seed normalized error
  std::map<std::string, double> sigma0;
  for (const auto& row : rows)
    if (row.preset == "noise-sweep" && row.grid_value == "0" && row.delta_fro_final.has_value())
      sigma0[row.method.substr(row.method.find("/seed"))] = *row.delta_fro_final;

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"preset",      "grid_value", "method", "best_iter", "train_rmse",
                                  "val_rmse",    "delta_fro",  "wall_s", "x_min",     "x_max"};
  const bool with_norm = !sigma0.empty();
  if (with_norm) header.push_back("normalized");
  cells.push_back(header);
  for (const auto& row : rows) {
    std::vector<std::string> line{row.preset,
                                  row.grid_value,
                                  row.method,
                                  std::to_string(row.best_iter),
                                  opt_str(row.train_rmse),
                                  opt_str(row.val_rmse),
                                  opt_str(row.delta_fro_final),
                                  format_double(row.wall_s),
                                  opt_str(row.x_min),
                                  opt_str(row.x_max)};
    if (with_norm) {
      std::string norm;
      const auto at = row.method.find("/seed");
      if (row.preset == "noise-sweep" && at != std::string::npos && row.delta_fro_final.has_value()) {
        const auto base = sigma0.find(row.method.substr(at));
        if (base != sigma0.end() && base->second > 0.0)
          norm = format_double(*row.delta_fro_final / base->second);
      }
      line.push_back(norm);
    }
    cells.push_back(line);
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::ofstream txt((fs::path(out_dir) / "summary.txt").string(), std::ios::binary);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      txt << line[c] << std::string(width[c] - line[c].size() + 2, ' ');
    }
    txt << '\n';
  }
}

}  // namespace nlfm
