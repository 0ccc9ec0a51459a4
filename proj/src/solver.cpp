#include "nlfm/solver.hpp"

#include "nlfm/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace nlfm {

namespace {

struct TruncatedSvd {
  Mat u;
  Vec s;
  Mat v;
  bool rank_deficient = false;
};

/// Thin rank-r SVD; large matrices go through the small-side Gram
/// eigenproblem, the usual spectral-initialization route.
TruncatedSvd truncated_svd(const Mat& x, Index r) {
  TruncatedSvd out;
  const Index small_side = std::min(x.rows(), x.cols());
  if (small_side <= 400) {
    Eigen::BDCSVD<Mat> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU().leftCols(r);
    out.s = svd.singularValues().head(r);
    out.v = svd.matrixV().leftCols(r);
  } else {
    const bool rows_small = x.rows() <= x.cols();
    const Mat gram = rows_small ? Mat(x * x.transpose()) : Mat(x.transpose() * x);
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
    const Index m = gram.rows();
    Mat w(m, r);
    out.s.resize(r);
    for (Index a = 0; a < r; ++a) {
      w.col(a) = eig.eigenvectors().col(m - 1 - a);
      out.s[a] = std::sqrt(std::max(eig.eigenvalues()[m - 1 - a], 0.0));
    }
    Mat other(rows_small ? x.cols() : x.rows(), r);
    for (Index a = 0; a < r; ++a) {
      if (out.s[a] > 0.0) {
        if (rows_small)
          other.col(a) = x.transpose() * w.col(a) / out.s[a];
        else
          other.col(a) = x * w.col(a) / out.s[a];
      } else {
        other.col(a).setZero();
      }
    }
    out.u = rows_small ? w : other;
    out.v = rows_small ? other : w;
  }
  const double tol = out.s.size() > 0 ? 1e-12 * out.s[0] : 0.0;
  for (Index a = 0; a < r; ++a) {
    if (!(out.s[a] > tol)) {
      out.s[a] = 0.0;
      out.rank_deficient = true;
    }
  }
  return out;
}

}  // namespace

FactorMatrix init_svd(const ObservationSet& obs, Index r, bool rescale, bool* rank_deficient) {
  if (r > std::min(obs.n, obs.T)) throw std::invalid_argument("init_svd: rank exceeds min(n, T)");
  const Mat filled = zero_filled_matrix(obs, rescale);
  TruncatedSvd svd = truncated_svd(filled, r);
  if (rank_deficient != nullptr) *rank_deficient = svd.rank_deficient;
  const Vec root = svd.s.cwiseSqrt();
  FactorMatrix z;
  z.n = obs.n;
  z.T = obs.T;
  z.r = r;
  z.z.resize(obs.n + obs.T, r);
  z.z.topRows(obs.n) = svd.u * root.asDiagonal();
  z.z.bottomRows(obs.T) = svd.v * root.asDiagonal();
  return z;
}

FactorMatrix project_incoherent(FactorMatrix z, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("project_incoherent: beta must be positive");
  for (Index a = 0; a < z.z.rows(); ++a) {
    const double norm = z.z.row(a).norm();
    if (norm > beta) z.z.row(a) *= beta / norm;
  }
  return z;
}

double compute_beta(const FactorMatrix& z0, double mu) {
  if (!(mu >= 1.0)) throw std::invalid_argument("compute_beta: mu must be >= 1");
  return 4.0 / 3.0 * std::sqrt(mu / static_cast<double>(z0.n + z0.T)) * z0.z.norm();
}

SolverConfig freeze_phi_mode(SolverConfig cfg, Link frozen) {
  cfg.frozen_link = std::move(frozen);
  return cfg;
}

namespace {

double interp(double a, double b, double w) { return a + (b - a) * w; }

/// Fill a sparsely computed diagnostic column by linear interpolation
/// between computed rows; the ends carry the nearest computed value.
void backfill(std::vector<TraceRow>& rows, std::optional<double> TraceRow::* field) {
  Index prev = -1;
  for (Index a = 0; a < static_cast<Index>(rows.size()); ++a) {
    if (!(rows[a].*field).has_value()) continue;
    if (prev < 0) {
      for (Index b = 0; b < a; ++b) rows[b].*field = rows[a].*field;
    } else if (a - prev > 1) {
      for (Index b = prev + 1; b < a; ++b) {
        const double w = static_cast<double>(b - prev) / static_cast<double>(a - prev);
        rows[b].*field = interp(*(rows[prev].*field), *(rows[a].*field), w);
      }
    }
    prev = a;
  }
  if (prev >= 0)
    for (Index b = prev + 1; b < static_cast<Index>(rows.size()); ++b) rows[b].*field = rows[prev].*field;
}

struct DiagContext {
  KernelSpec kernel;
  PhiSharpOptions sharp_opts;
  std::optional<LinkFunction> phi_star_dict;
  const GroundTruth* truth = nullptr;
  double gamma = 1.0;
  double alpha = 0.0;
  MonotoneBounds surrogate_window;  // only lo/hi/grid_points used
};

/// Expensive per-checkpoint diagnostics: one ridge solve shared by E_t and
/// the regret gap.
void diag_row(TraceRow& row, const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
              const ObjectiveParams& params, const DiagContext& ctx) {
  if (!(ctx.alpha > 0.0)) return;
  LinkFunction phi_dict = as_dictionary(phi, ctx.kernel, ctx.surrogate_window.x_lo,
                                        ctx.surrogate_window.x_hi, ctx.surrogate_window.grid_points);
  PhiSharpOptions opts = ctx.sharp_opts;
  opts.offset = phi_dict.offset;
  const LinkFunction sharp = phi_sharp_objective(obs, z, ctx.kernel, ctx.alpha, opts);
  row.e_t = rkhs_dist_sq(phi_dict, sharp);
  if (row.d_t.has_value()) row.v_t = *row.e_t + ctx.gamma * *row.d_t;
  const double sharp_loss = loss(obs, z, Link{sharp}, params);
  row.regret_gap = row.loss - sharp_loss;
  if (ctx.phi_star_dict.has_value())
    row.phi_h_err = std::sqrt(rkhs_dist_sq(phi_dict, *ctx.phi_star_dict));
}

}  // namespace

SolverTrace bcd_run(const ObservationSet& obs, const SolverConfig& cfg_in, const GroundTruth* truth,
                    const SolverHooks* hooks, const std::function<void(const TraceRow&)>& row_sink) {
  SolverConfig cfg = cfg_in;
  cfg.validate();
  obs.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto wall_ms = [&] {
    if (fixed_clock()) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  };

  SolverTrace trace;
  const bool rescale = cfg.init_rescale.value_or(obs.M() < obs.n * obs.T);
  FactorMatrix z = init_svd(obs, cfg.r, rescale, &trace.init_rank_deficient);

  double beta = 0.0;
  if (cfg.incoherent.enabled) {
    if (cfg.incoherent.beta_override.has_value()) {
      beta = *cfg.incoherent.beta_override;
    } else {
      const double mu = truth != nullptr ? truth->mu() : cfg.mu_estimate;
      beta = compute_beta(z, mu);
    }
    z = project_incoherent(std::move(z), beta);
  }
  trace.beta_used = beta;

  // kernel resolution and the reference window for dictionary surrogates
  Vec x = sample_products(obs, z);
  KernelSpec kernel = cfg.kernel;
  if (!(kernel.bandwidth > 0.0))
    kernel.bandwidth = default_bandwidth(x.minCoeff(), x.maxCoeff(), cfg.bounds.grid_points);
  const double dict_spacing = cfg.dict_spacing > 0.0 ? cfg.dict_spacing : kernel.bandwidth / 8.0;

  DiagContext diag;
  diag.kernel = kernel;
  diag.truth = truth;
  diag.gamma = cfg.gamma;
  diag.alpha = cfg.params.alpha;
  diag.sharp_opts.subsample = obs.M() > 4000 ? cfg.phi_sharp_subsample : 0;
  diag.surrogate_window.grid_points = std::max(cfg.bounds.grid_points, 101);
  diag.surrogate_window.x_lo = x.minCoeff() - kernel.bandwidth;
  diag.surrogate_window.x_hi = x.maxCoeff() + kernel.bandwidth;
  if (diag.surrogate_window.x_lo >= diag.surrogate_window.x_hi) {
    diag.surrogate_window.x_lo -= 1.0;
    diag.surrogate_window.x_hi += 1.0;
  }
  if (truth != nullptr) {
    diag.phi_star_dict = as_dictionary(truth->link, kernel, diag.surrogate_window.x_lo,
                                       diag.surrogate_window.x_hi, diag.surrogate_window.grid_points);
  }

  // phi_0
  const bool frozen = cfg.frozen_link.has_value();
  Link phi = AnalyticLink::identity;
  if (frozen) {
    phi = *cfg.frozen_link;
  } else {
    LinkFunction dict;
    dict.kernel = kernel;
    dict.centers.resize(0);
    dict.coeffs.resize(0);
    switch (cfg.phi_init) {
      case PhiInit::zero:
        break;
      case PhiInit::mean_offset:
        dict.offset = obs.y.mean();
        break;
      case PhiInit::kernel_ridge_warmstart: {
        PhiSharpOptions opts = diag.sharp_opts;
        opts.offset = obs.y.mean();
        dict = compress_dictionary(phi_sharp(obs, z, kernel, std::max(cfg.params.alpha, 1e-8), opts),
                                   dict_spacing);
        break;
      }
    }
    phi = std::move(dict);
  }

  Vec vals = link_values(phi, x);
  Vec g = obs.y - vals;

  auto make_row = [&](int iter) {
    TraceRow row;
    row.iter = iter;
    row.data_term = mean_square(g);
    row.balance_term = balance_term(z, cfg.params.lambda);
    row.tikhonov_term = cfg.params.alpha / 2.0 * tikhonov_sq(phi);
    row.loss = row.data_term + row.balance_term + row.tikhonov_term;
    if (truth != nullptr) {
      const double d = procrustes_align(z, truth->z_star).delta_fro;
      row.delta_fro = d;
      row.d_t = d * d;
    }
    const bool diag_now = iter % cfg.diag_every == 0 || iter == cfg.max_iters;
    if (diag_now) diag_row(row, obs, z, phi, cfg.params, diag);
    row.wall_ms = wall_ms();
    return row;
  };

  auto push_row = [&](TraceRow row) {
    const bool finite = std::isfinite(row.loss);
    if (!finite) {
      trace.aborted_at = row.iter;
      trace.abort_reason = "non-finite loss (step size too large?)";
      return false;
    }
    if (row_sink) row_sink(row);
    trace.rows.push_back(std::move(row));
    return true;
  };

  bool alive = push_row(make_row(0));
  if (hooks != nullptr && hooks->on_iterate && alive) hooks->on_iterate(0, z, phi);

  for (int t = 0; alive && t < cfg.max_iters; ++t) {
    // Z block at (phi_t, Z_t)
    Mat gz = grad_z_data(obs, z, g, link_derivs(phi, x));
    if (cfg.params.lambda > 0.0) {
      const Mat core = z.u().transpose() * z.u() - z.v().transpose() * z.v();
      gz.topRows(z.n).noalias() += cfg.params.lambda * (z.u() * core);
      gz.bottomRows(z.T).noalias() -= cfg.params.lambda * (z.v() * core);
    }
    z.z -= cfg.zeta * gz;
    if (cfg.incoherent.enabled) z = project_incoherent(std::move(z), beta);

    // phi block at (phi_t, Z_{t+1})
    x = sample_products(obs, z);
    vals = link_values(phi, x);
    g = obs.y - vals;
    if (!frozen) {
      if (hooks != nullptr && hooks->on_grad_phi_inputs) hooks->on_grad_phi_inputs(z, phi);
      PhiGradient pg = grad_phi_from(x, g, cfg.params.alpha);
      LinkFunction next = apply_phi_step(std::get<LinkFunction>(phi), pg, cfg.eta, dict_spacing);
      if (cfg.monotone_mode != MonotoneMode::none) {
        MonotoneBounds bounds = cfg.bounds;
        bounds.x_lo = x.minCoeff() - kernel.bandwidth;
        bounds.x_hi = x.maxCoeff() + kernel.bandwidth;
        bounds.grid_points =
            solvable_grid_points(bounds.x_lo, bounds.x_hi, kernel.bandwidth, cfg.bounds.grid_points);
        next = project_monotone(next, bounds, cfg.monotone_mode);
      }
      phi = std::move(next);
      vals = link_values(phi, x);
      g = obs.y - vals;
    }

    alive = push_row(make_row(t + 1));
    if (hooks != nullptr && hooks->on_iterate && alive) hooks->on_iterate(t + 1, z, phi);
  }

  backfill(trace.rows, &TraceRow::e_t);
  backfill(trace.rows, &TraceRow::regret_gap);
  backfill(trace.rows, &TraceRow::phi_h_err);
  if (truth != nullptr) {
    for (auto& row : trace.rows)
      if (row.e_t.has_value() && row.d_t.has_value() && !row.v_t.has_value())
        row.v_t = *row.e_t + cfg.gamma * *row.d_t;
  }
  double gap_acc = 0.0;
  for (auto& row : trace.rows) {
    if (row.iter == 0 || !row.regret_gap.has_value()) continue;
    gap_acc += *row.regret_gap;
    row.regret_avg = gap_acc / static_cast<double>(row.iter);
  }

  trace.z_final = std::move(z);
  trace.phi_final = std::move(phi);
  return trace;
}

}  // namespace nlfm
