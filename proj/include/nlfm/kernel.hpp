#pragma once

#include "nlfm/types.hpp"

#include <variant>

namespace nlfm {

enum class KernelFamily { gaussian, laplacian };

/// Kernel family plus the constants of the bounded/smooth-kernel
/// assumptions: sup_x K(x,x) and H-norm Lipschitz constants of K(x,.) and
/// of its argument derivative. Gaussian is the supported default.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double bandwidth = 1.0;

  double b_k() const { return 1.0; }
  double lipschitz_k() const { return 1.0 / bandwidth; }
  double lipschitz_kprime() const { return 1.7320508075688772 / (bandwidth * bandwidth); }

  void validate() const {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("KernelSpec: bandwidth must be positive");
  }
};

double kernel_eval(const KernelSpec& spec, double a, double b);
/// d/dx K(center, x).
double kernel_deriv(const KernelSpec& spec, double center, double x);
Mat gram_matrix(const KernelSpec& spec, const Vec& points);

/// RKHS element stored as a kernel dictionary: offset + sum_j coeffs_j *
/// K(centers_j, .). Centers are strictly increasing; the offset is a
/// norm-free additive constant.
struct LinkFunction {
  KernelSpec kernel;
  Vec centers;
  Vec coeffs;
  double offset = 0.0;

  Index size() const { return centers.size(); }
};

/// Sorts centers and merges exact duplicates (coefficients summed).
LinkFunction make_link(const KernelSpec& kernel, Vec centers, Vec coeffs, double offset = 0.0);

double link_eval(const LinkFunction& phi, double x);
double link_deriv(const LinkFunction& phi, double x);

/// beta^T K beta over the dictionary; the offset carries no H-norm.
double rkhs_norm_sq(const LinkFunction& phi);

/// ||a - b||_H^2 via the merged-dictionary Gram quadratic form (offsets
/// excluded). Both dictionaries must share the kernel.
double rkhs_dist_sq(const LinkFunction& a, const LinkFunction& b);

/// Snap centers to the nearest multiple of grid_spacing, summing
/// coefficients that land on the same grid point. The sup-norm evaluation
/// change is at most sum|beta| * L_K * spacing / 2.
LinkFunction compress_dictionary(const LinkFunction& phi, double grid_spacing);

/// Derivative box [xi, Xi] enforced on an m-point uniform grid over
/// [x_lo, x_hi].
struct MonotoneBounds {
  double xi = 0.1;
  double Xi = 10.0;
  int grid_points = 64;
  double x_lo = 0.0;
  double x_hi = 0.0;

  void validate() const {
    if (!(xi > 0.0) || !(Xi >= xi)) throw std::invalid_argument("MonotoneBounds: need 0 < xi <= Xi");
    if (grid_points < 2) throw std::invalid_argument("MonotoneBounds: need at least 2 grid points");
    if (!(x_lo < x_hi)) throw std::invalid_argument("MonotoneBounds: need x_lo < x_hi");
  }
};

enum class MonotoneMode { none, slope_clip, qp };

/// Projection toward the monotone class. slope_clip clamps grid slopes and
/// refits by kernel interpolation; qp runs projected gradient on the
/// grid-value QP (warm-started from slope_clip) and is never farther from
/// phi in H-norm. Both return functions whose grid slopes lie in
/// [xi - 1e-9, Xi + 1e-9].
LinkFunction project_monotone(const LinkFunction& phi, const MonotoneBounds& bounds, MonotoneMode mode);

/// Kernel interpolant of (grid, values) with ridge jitter and iterative
/// refinement; throws if the Gram system cannot reproduce the values
/// (grid too fine for the bandwidth).
LinkFunction fit_grid_dictionary(const KernelSpec& kernel, const Vec& grid, const Vec& values, double offset);

/// Grid-dictionary surrogate of a closed-form link over [lo, hi].
LinkFunction interpolate_analytic(AnalyticLink f, const KernelSpec& kernel, double lo, double hi, int m);

/// 0.5 * width / sqrt(m); fallback bandwidth when none is configured.
double default_bandwidth(double lo, double hi, int m);

/// Largest grid size (<= max_points) whose spacing keeps the Gram
/// interpolation solvable for this bandwidth (spacing >= 0.7 * bandwidth).
int solvable_grid_points(double lo, double hi, double bandwidth, int max_points);

/// A link is either a closed-form function or an RKHS dictionary.
using Link = std::variant<AnalyticLink, LinkFunction>;

inline double link_eval(const Link& phi, double x) {
  return std::visit([x](const auto& f) { return link_eval(f, x); }, phi);
}
inline double link_deriv(const Link& phi, double x) {
  return std::visit([x](const auto& f) { return link_deriv(f, x); }, phi);
}
inline bool is_analytic(const Link& phi) { return std::holds_alternative<AnalyticLink>(phi); }

}  // namespace nlfm
