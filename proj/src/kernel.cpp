#include "nlfm/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nlfm {

double kernel_eval(const KernelSpec& spec, double a, double b) {
  const double d = a - b;
  switch (spec.family) {
    case KernelFamily::gaussian:
      return std::exp(-d * d / (2.0 * spec.bandwidth * spec.bandwidth));
    case KernelFamily::laplacian:
      return std::exp(-std::abs(d) / spec.bandwidth);
  }
  return 0.0;
}

double kernel_deriv(const KernelSpec& spec, double center, double x) {
  const double d = x - center;
  switch (spec.family) {
    case KernelFamily::gaussian: {
      const double h2 = spec.bandwidth * spec.bandwidth;
      return -d / h2 * std::exp(-d * d / (2.0 * h2));
    }
    case KernelFamily::laplacian: {
      const double s = d > 0.0 ? -1.0 : (d < 0.0 ? 1.0 : 0.0);
      return s / spec.bandwidth * std::exp(-std::abs(d) / spec.bandwidth);
    }
  }
  return 0.0;
}

Mat gram_matrix(const KernelSpec& spec, const Vec& points) {
  const Index m = points.size();
  Mat k(m, m);
  for (Index a = 0; a < m; ++a) {
    k(a, a) = kernel_eval(spec, points[a], points[a]);
    for (Index b = a + 1; b < m; ++b) {
      const double v = kernel_eval(spec, points[a], points[b]);
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

LinkFunction make_link(const KernelSpec& kernel, Vec centers, Vec coeffs, double offset) {
  if (centers.size() != coeffs.size())
    throw std::invalid_argument("make_link: centers and coeffs must have equal length");
  const Index m = centers.size();
  std::vector<Index> order(m);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return centers[a] < centers[b]; });
  LinkFunction out;
  out.kernel = kernel;
  out.offset = offset;
  out.centers.resize(m);
  out.coeffs.resize(m);
  Index w = -1;
  for (Index idx = 0; idx < m; ++idx) {
    const Index s = order[idx];
    if (w >= 0 && centers[s] == out.centers[w]) {
      out.coeffs[w] += coeffs[s];
    } else {
      ++w;
      out.centers[w] = centers[s];
      out.coeffs[w] = coeffs[s];
    }
  }
  out.centers.conservativeResize(w + 1);
  out.coeffs.conservativeResize(w + 1);
  return out;
}

double link_eval(const LinkFunction& phi, double x) {
  double acc = phi.offset;
  for (Index j = 0; j < phi.size(); ++j) acc += phi.coeffs[j] * kernel_eval(phi.kernel, phi.centers[j], x);
  return acc;
}

double link_deriv(const LinkFunction& phi, double x) {
  double acc = 0.0;
  for (Index j = 0; j < phi.size(); ++j) acc += phi.coeffs[j] * kernel_deriv(phi.kernel, phi.centers[j], x);
  return acc;
}

double rkhs_norm_sq(const LinkFunction& phi) {
  if (phi.size() == 0) return 0.0;
  double acc = 0.0;
  for (Index a = 0; a < phi.size(); ++a)
    for (Index b = 0; b < phi.size(); ++b)
      acc += phi.coeffs[a] * phi.coeffs[b] * kernel_eval(phi.kernel, phi.centers[a], phi.centers[b]);
  return std::max(acc, 0.0);
}

double rkhs_dist_sq(const LinkFunction& a, const LinkFunction& b) {
  if (a.kernel.family != b.kernel.family || a.kernel.bandwidth != b.kernel.bandwidth)
    throw std::invalid_argument("rkhs_dist_sq: dictionaries must share the kernel");
  const Index ma = a.size(), mb = b.size();
  Vec centers(ma + mb), coeffs(ma + mb);
  centers << a.centers, b.centers;
  coeffs << a.coeffs, -b.coeffs;
  double acc = 0.0;
  for (Index p = 0; p < centers.size(); ++p)
    for (Index q = 0; q < centers.size(); ++q)
      acc += coeffs[p] * coeffs[q] * kernel_eval(a.kernel, centers[p], centers[q]);
  return std::max(acc, 0.0);
}

LinkFunction compress_dictionary(const LinkFunction& phi, double grid_spacing) {
  if (!(grid_spacing > 0.0)) throw std::invalid_argument("compress_dictionary: spacing must be positive");
  Vec snapped(phi.size());
  for (Index j = 0; j < phi.size(); ++j)
    snapped[j] = std::round(phi.centers[j] / grid_spacing) * grid_spacing;
  return make_link(phi.kernel, std::move(snapped), phi.coeffs, phi.offset);
}

namespace {

Vec uniform_grid(const MonotoneBounds& b) {
  Vec g(b.grid_points);
  const double dx = (b.x_hi - b.x_lo) / (b.grid_points - 1);
  for (int a = 0; a < b.grid_points; ++a) g[a] = b.x_lo + a * dx;
  return g;
}

Vec eval_on(const LinkFunction& phi, const Vec& grid) {
  Vec v(grid.size());
  for (Index a = 0; a < grid.size(); ++a) v[a] = link_eval(phi, grid[a]);
  return v;
}

/// Clamp consecutive slopes into [xi, Xi] and rebuild values anchored at the
/// grid midpoint.
Vec clip_slopes(const Vec& values, const MonotoneBounds& b, double dx) {
  const Index m = values.size();
  Vec d(m - 1);
  for (Index a = 0; a + 1 < m; ++a)
    d[a] = std::clamp((values[a + 1] - values[a]) / dx, b.xi, b.Xi) * dx;
  const Index mid = (m - 1) / 2;
  Vec w(m);
  w[mid] = values[mid];
  for (Index a = mid; a + 1 < m; ++a) w[a + 1] = w[a] + d[a];
  for (Index a = mid; a > 0; --a) w[a - 1] = w[a] - d[a - 1];
  return w;
}

}  // namespace

LinkFunction fit_grid_dictionary(const KernelSpec& kernel, const Vec& grid, const Vec& values, double offset) {
  const Index m = grid.size();
  const Mat k = gram_matrix(kernel, grid);
  const double jitter = 1e-8 * k.trace() / static_cast<double>(m);
  Mat k_reg = k;
  k_reg.diagonal().array() += jitter;
  Eigen::LDLT<Mat> solver(k_reg);
  const Vec target = values.array() - offset;
  Vec beta = solver.solve(target);
  // two refinement passes: near-interpolation despite the ridge jitter
  for (int pass = 0; pass < 2; ++pass) beta += solver.solve(target - k * beta);
  const double resid = (k * beta - target).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, target.cwiseAbs().maxCoeff());
  if (!beta.allFinite() || resid > 1e-7 * scale)
    throw std::runtime_error("fit_grid_dictionary: singular Gram system (grid too fine for bandwidth; coarsen the grid)");
  return make_link(kernel, grid, std::move(beta), offset);
}

namespace {

LinkFunction project_slope_clip(const LinkFunction& phi, const MonotoneBounds& b) {
  const Vec grid = uniform_grid(b);
  const double dx = grid[1] - grid[0];
  const Vec w = clip_slopes(eval_on(phi, grid), b, dx);
  LinkFunction out = fit_grid_dictionary(phi.kernel, grid, w, phi.offset);
  // verify the achieved slopes; one corrective pass absorbs interpolation error
  const Vec achieved = eval_on(out, grid);
  bool ok = true;
  for (Index a = 0; a + 1 < grid.size(); ++a) {
    const double s = (achieved[a + 1] - achieved[a]) / dx;
    if (s < b.xi - 1e-9 || s > b.Xi + 1e-9) { ok = false; break; }
  }
  if (!ok) out = fit_grid_dictionary(phi.kernel, grid, clip_slopes(achieved, b, dx), phi.offset);
  return out;
}

LinkFunction project_qp(const LinkFunction& phi, const MonotoneBounds& b) {
  const Vec grid = uniform_grid(b);
  const Index m = grid.size();
  const double dx = grid[1] - grid[0];
  const Mat k = gram_matrix(phi.kernel, grid);
  const double jitter = 1e-8 * k.trace() / static_cast<double>(m);
  Mat k_reg = k;
  k_reg.diagonal().array() += jitter;
  Eigen::LDLT<Mat> solver(k_reg);

  // v_a = <K(g_a,.), phi - offset>_H
  Vec v(m);
  for (Index a = 0; a < m; ++a) {
    double acc = 0.0;
    for (Index j = 0; j < phi.size(); ++j)
      acc += phi.coeffs[j] * kernel_eval(phi.kernel, grid[a], phi.centers[j]);
    v[a] = acc;
  }

  // variables u = (w_0, d_1..d_{m-1}); grid values w = A u with the cumsum map
  auto values_of = [&](const Vec& u) {
    Vec w(m);
    w[0] = u[0];
    for (Index a = 1; a < m; ++a) w[a] = w[a - 1] + u[a];
    return w;
  };
  auto coeffs_of = [&](const Vec& u) { return Vec(solver.solve(values_of(u))); };
  // Q(u) = ||f_u - (phi - offset)||_H^2 up to the constant ||phi||_H^2 term
  auto objective = [&](const Vec& u) {
    const Vec c = coeffs_of(u);
    return c.dot(k * c) - 2.0 * c.dot(v);
  };
  auto gradient = [&](const Vec& u) {
    const Vec c = coeffs_of(u);
    const Vec gw = solver.solve(2.0 * (k * c - v));
    Vec gu(m);
    double tail = 0.0;
    for (Index a = m - 1; a >= 1; --a) { tail += gw[a]; gu[a] = tail; }
    gu[0] = tail + gw[0];
    return gu;
  };
  auto project_box = [&](Vec u) {
    for (Index a = 1; a < m; ++a) u[a] = std::clamp(u[a], b.xi * dx, b.Xi * dx);
    return u;
  };

  // warm start at the slope-clip point (feasible)
  const Vec w0 = clip_slopes(eval_on(phi, grid), b, dx);
  Vec u(m);
  u[0] = w0[0];
  for (Index a = 1; a < m; ++a) u[a] = w0[a] - w0[a - 1];
  u = project_box(u);

  // Lipschitz constant of the gradient: 2 * lam_max(A^T S K S A)
  Mat sa(m, m);
  {
    Mat a_map = Mat::Zero(m, m);
    for (Index row = 0; row < m; ++row) {
      a_map(row, 0) = 1.0;
      for (Index col = 1; col <= row; ++col) a_map(row, col) = 1.0;
    }
    sa = solver.solve(a_map);
  }
  const Mat hess = 2.0 * sa.transpose() * k * sa;
  const double lip = Eigen::SelfAdjointEigenSolver<Mat>(hess, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = lip > 0.0 ? 1.0 / lip : 1.0;

  double best = objective(u);
  Vec best_u = u;
  for (int it = 0; it < 300; ++it) {
    u = project_box(u - step * gradient(u));
    const double q = objective(u);
    if (q < best) { best = q; best_u = u; }
  }

  LinkFunction out = fit_grid_dictionary(phi.kernel, grid, values_of(best_u), phi.offset);
  const Vec achieved = eval_on(out, grid);
  bool ok = true;
  for (Index a = 0; a + 1 < m; ++a) {
    const double s = (achieved[a + 1] - achieved[a]) / dx;
    if (s < b.xi - 1e-9 || s > b.Xi + 1e-9) { ok = false; break; }
  }
  if (!ok) out = fit_grid_dictionary(phi.kernel, grid, clip_slopes(achieved, b, dx), phi.offset);
  return out;
}

}  // namespace

LinkFunction project_monotone(const LinkFunction& phi, const MonotoneBounds& bounds, MonotoneMode mode) {
  if (mode == MonotoneMode::none) return phi;
  bounds.validate();
  switch (mode) {
    case MonotoneMode::slope_clip: return project_slope_clip(phi, bounds);
    case MonotoneMode::qp: return project_qp(phi, bounds);
    default: return phi;
  }
}

LinkFunction interpolate_analytic(AnalyticLink f, const KernelSpec& kernel, double lo, double hi, int m) {
  Vec grid(m), values(m);
  const double dx = (hi - lo) / (m - 1);
  for (int a = 0; a < m; ++a) {
    grid[a] = lo + a * dx;
    values[a] = link_eval(f, grid[a]);
  }
  return fit_grid_dictionary(kernel, grid, values, 0.0);
}

double default_bandwidth(double lo, double hi, int m) {
  const double width = hi - lo;
  if (!(width > 0.0)) return 1.0;
  return 0.5 * width / std::sqrt(static_cast<double>(m));
}

int solvable_grid_points(double lo, double hi, double bandwidth, int max_points) {
  const double width = hi - lo;
  if (!(width > 0.0) || !(bandwidth > 0.0)) return 2;
  const int fit = static_cast<int>(std::floor(width / (0.7 * bandwidth))) + 1;
  return std::clamp(fit, 2, max_points);
}

}  // namespace nlfm
