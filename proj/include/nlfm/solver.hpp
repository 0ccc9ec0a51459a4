#pragma once

#include "nlfm/diagnostics.hpp"
#include "nlfm/kernel.hpp"
#include "nlfm/objective.hpp"
#include "nlfm/synthetic.hpp"
#include "nlfm/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nlfm {

enum class PhiInit { zero, mean_offset, kernel_ridge_warmstart };

struct IncoherentProjection {
  bool enabled = false;
  std::optional<double> beta_override;
};

struct SolverConfig {
  Index r = 1;
  double zeta = 1e-5;  // Z step size
  double eta = 1e-4;   // phi step size
  ObjectiveParams params;
  KernelSpec kernel{KernelFamily::gaussian, 0.0};  // bandwidth <= 0: auto
  MonotoneBounds bounds;
  MonotoneMode monotone_mode = MonotoneMode::none;
  IncoherentProjection incoherent;
  double mu_estimate = 3.0;
  int max_iters = 1000;
  PhiInit phi_init = PhiInit::mean_offset;
  int diag_every = 25;
  std::uint64_t seed = 0;
  std::optional<Link> frozen_link;         // set via freeze_phi_mode
  double dict_spacing = 0.0;               // 0: bandwidth / 8
  Index phi_sharp_subsample = 2000;        // diagnostics Gram cap
  double gamma = 1.0;                      // Lyapunov weight
  std::optional<bool> init_rescale;        // unset: rescale iff M < n*T

  void validate() const {
    if (r < 1) throw std::invalid_argument("SolverConfig: rank must be >= 1");
    if (!(zeta > 0.0) || !(eta > 0.0)) throw std::invalid_argument("SolverConfig: step sizes must be positive");
    if (max_iters < 0) throw std::invalid_argument("SolverConfig: max_iters must be >= 0");
    if (diag_every < 1) throw std::invalid_argument("SolverConfig: diag_every must be >= 1");
    params.validate();
  }
};

struct TraceRow {
  int iter = 0;
  double loss = 0.0;
  double data_term = 0.0;
  double balance_term = 0.0;
  double tikhonov_term = 0.0;
  std::optional<double> delta_fro;
  std::optional<double> phi_h_err;
  std::optional<double> e_t;
  std::optional<double> d_t;
  std::optional<double> v_t;
  std::optional<double> regret_gap;
  std::optional<double> regret_avg;
  double wall_ms = 0.0;
};

struct SolverTrace {
  std::vector<TraceRow> rows;
  FactorMatrix z_final;
  Link phi_final = AnalyticLink::identity;
  double beta_used = 0.0;  // 0 when the incoherent projection is off
  bool init_rank_deficient = false;
  std::optional<int> aborted_at;
  std::string abort_reason;
};

/// Test instrumentation: on_iterate fires after the init row and after each
/// iteration with the fresh state; on_grad_phi_inputs fires with the exact
/// (Z, phi) pair the phi gradient is evaluated at.
struct SolverHooks {
  std::function<void(int, const FactorMatrix&, const Link&)> on_iterate;
  std::function<void(const FactorMatrix&, const Link&)> on_grad_phi_inputs;
};

/// Rank-r truncated SVD of the zero-filled data matrix, stacked as
/// Z0 = [U S^{1/2}; V S^{1/2}]. Missing rank is padded with zero columns and
/// flagged.
FactorMatrix init_svd(const ObservationSet& obs, Index r, bool rescale, bool* rank_deficient = nullptr);

/// Row-clipping projection onto ||Z||_{2,inf} <= beta.
FactorMatrix project_incoherent(FactorMatrix z, double beta);

/// beta = (4/3) sqrt(mu / (n+T)) ||Z0||_F.
double compute_beta(const FactorMatrix& z0, double mu);

/// Config whose phi block is pinned to a known link; only Z is updated.
SolverConfig freeze_phi_mode(SolverConfig cfg, Link frozen);

/// Projected block coordinate descent: Z step at (phi_t, Z_t), then phi step
/// at (phi_t, Z_{t+1}), each followed by its projection. Diagnostics that
/// need a Gram solve run every diag_every iterations and are linearly
/// carried in between.
SolverTrace bcd_run(const ObservationSet& obs, const SolverConfig& cfg,
                    const GroundTruth* truth = nullptr, const SolverHooks* hooks = nullptr,
                    const std::function<void(const TraceRow&)>& row_sink = {});

}  // namespace nlfm
