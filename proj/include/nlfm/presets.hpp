#pragma once

#include "nlfm/datasets.hpp"
#include "nlfm/solver.hpp"
#include "nlfm/synthetic.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nlfm {

/// Flat key=value configuration with [section] headers; keys are addressed
/// as "section.key". Later assignments win, so CLI overrides are plain sets.
struct ConfigMap {
  std::map<std::string, std::string> values;

  static ConfigMap from_file(const std::string& path);
  void set(const std::string& key, const std::string& value) { values[key] = value; }
  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  Index get_index(const std::string& key, Index fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_grid(const std::string& key, const std::vector<double>& fallback) const;
};

SyntheticConfig synthetic_config_from(const ConfigMap& cfg);
SolverConfig solver_config_from(const ConfigMap& cfg);
AnalyticLink analytic_link_from(const std::string& name);

/// Joint-learning defaults shared by the synthetic sweeps (n = T = 100,
/// r = 3, M = 5000, with the published step sizes translated to the
/// normalized objective convention). Keys already present are kept.
ConfigMap shared_param_defaults(ConfigMap cfg);

struct ExperimentPreset {
  std::string name;  // noise-sweep | sample-size-sweep | alpha-sweep | regret-curve | movielens | jester | custom
  ConfigMap base;
};

struct PresetRunSummary {
  std::string preset;
  std::string grid_value;
  std::string method;
  int best_iter = -1;
  std::optional<double> train_rmse;
  std::optional<double> val_rmse;
  std::optional<double> delta_fro_final;
  double wall_s = 0.0;
  std::optional<double> x_min;
  std::optional<double> x_max;
};

/// Runs every grid point of the preset, writing one trace CSV per run plus
/// summary.csv / summary.txt into out_dir. Solver aborts are recorded
/// (best_iter = -1) and the sweep continues.
std::vector<PresetRunSummary> run_preset(const ExperimentPreset& preset, const std::string& out_dir);

void write_summary(const std::vector<PresetRunSummary>& rows, const std::string& out_dir);

}  // namespace nlfm
