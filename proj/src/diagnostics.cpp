#include "nlfm/diagnostics.hpp"

#include "nlfm/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nlfm {

AlignmentResult procrustes_align(const FactorMatrix& z, const FactorMatrix& z_star) {
  if (z.z.rows() != z_star.z.rows() || z.z.cols() != z_star.z.cols())
    throw std::invalid_argument("procrustes_align: shape mismatch");
  const Mat a = z_star.z.transpose() * z.z;
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentResult out;
  out.rotation = svd.matrixU() * svd.matrixV().transpose();
  out.delta = z.z - z_star.z * out.rotation;
  out.delta_fro = out.delta.norm();
  return out;
}

namespace {

/// Solves (alpha I + 2K) beta = 2 rhs with one refinement pass.
Vec ridge_solve(const Mat& gram, const Vec& rhs, double alpha) {
  Mat sys = 2.0 * gram;
  sys.diagonal().array() += alpha;
  Eigen::LDLT<Mat> solver(sys);
  Vec beta = solver.solve(2.0 * rhs);
  beta += solver.solve(2.0 * rhs - sys * beta);
  const double resid = (sys * beta - 2.0 * rhs).norm();
  if (!beta.allFinite() || resid > 1e-6 * std::max(1.0, 2.0 * rhs.norm()))
    throw std::runtime_error("phi_sharp: ill-conditioned ridge system (alpha too small for duplicated abscissae)");
  return beta;
}

struct SharpSystem {
  Vec x;      // (possibly subsampled) abscissae, sample order
  Vec y;      // matching responses minus the fixed offset
  Mat gram;
  Vec beta;
};

SharpSystem solve_sharp(const ObservationSet& obs, const FactorMatrix& z, const KernelSpec& kernel,
                        double alpha, const PhiSharpOptions& opts) {
  if (!(alpha > 0.0)) throw std::invalid_argument("phi_sharp: alpha must be positive");
  const Vec x_all = sample_products(obs, z);
  SharpSystem sys;
  const Index m = x_all.size();
  if (opts.subsample > 0 && opts.subsample < m) {
    // uniform subsample without replacement, stable order
    std::vector<Index> idx(m);
    std::iota(idx.begin(), idx.end(), Index{0});
    Rng rng(opts.seed);
    for (Index k = 0; k < opts.subsample; ++k) {
      const Index pick = k + rng.uniform_int(m - k);
      std::swap(idx[k], idx[pick]);
    }
    idx.resize(opts.subsample);
    std::sort(idx.begin(), idx.end());
    sys.x.resize(opts.subsample);
    sys.y.resize(opts.subsample);
    for (Index k = 0; k < opts.subsample; ++k) {
      sys.x[k] = x_all[idx[k]];
      sys.y[k] = obs.y[idx[k]] - opts.offset;
    }
  } else {
    sys.x = x_all;
    sys.y = obs.y.array() - opts.offset;
  }
  sys.gram = gram_matrix(kernel, sys.x);
  sys.beta = ridge_solve(sys.gram, sys.y, alpha);
  return sys;
}

}  // namespace

LinkFunction phi_sharp(const ObservationSet& obs, const FactorMatrix& z, const KernelSpec& kernel,
                       double alpha, const PhiSharpOptions& opts) {
  SharpSystem sys = solve_sharp(obs, z, kernel, alpha, opts);
  return make_link(kernel, std::move(sys.x), std::move(sys.beta), opts.offset);
}

LinkFunction phi_sharp_objective(const ObservationSet& obs, const FactorMatrix& z,
                                 const KernelSpec& kernel, double alpha,
                                 const PhiSharpOptions& opts) {
  const Index m = obs.M();
  const Index solved = opts.subsample > 0 && opts.subsample < m ? opts.subsample : m;
  return phi_sharp(obs, z, kernel, alpha * static_cast<double>(solved), opts);
}

ResidualBoundReport residual_bound_check(const ObservationSet& obs, const FactorMatrix& z,
                                         const KernelSpec& kernel, double alpha,
                                         double phi_star_norm) {
  PhiSharpOptions opts;  // full sample set, zero offset
  SharpSystem sys = solve_sharp(obs, z, kernel, alpha, opts);
  const Vec e = sys.y - sys.gram * sys.beta;
  const double m = static_cast<double>(sys.y.size());
  const double lam_min = std::max(
      0.0, Eigen::SelfAdjointEigenSolver<Mat>(sys.gram, Eigen::EigenvaluesOnly).eigenvalues().minCoeff());
  ResidualBoundReport out;
  out.lhs = e.norm() / std::sqrt(m);
  out.rhs = alpha * std::sqrt(kernel.b_k()) * phi_star_norm / (alpha + 2.0 * lam_min);
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

LinkFunction as_dictionary(const Link& phi, const KernelSpec& kernel, double lo, double hi, int m) {
  if (const auto* dict = std::get_if<LinkFunction>(&phi)) return *dict;
  const int points = solvable_grid_points(lo, hi, kernel.bandwidth, m);
  return interpolate_analytic(std::get<AnalyticLink>(phi), kernel, lo, hi, points);
}

PotentialReport potential(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
                          const FactorMatrix* z_star, const LinkFunction* phi_star,
                          const KernelSpec& kernel, double alpha, double gamma,
                          const PhiSharpOptions& opts_in) {
  if (!(gamma > 0.0)) throw std::invalid_argument("potential: gamma must be positive");
  PhiSharpOptions opts = opts_in;
  const Vec x = sample_products(obs, z);
  const double pad = kernel.bandwidth;
  LinkFunction phi_dict = as_dictionary(phi, kernel, x.minCoeff() - pad, x.maxCoeff() + pad);
  opts.offset = phi_dict.offset;
  const LinkFunction sharp = phi_sharp_objective(obs, z, kernel, alpha, opts);

  PotentialReport out;
  out.gamma = gamma;
  out.e_t = rkhs_dist_sq(phi_dict, sharp);
  if (z_star != nullptr) {
    const double d = procrustes_align(z, *z_star).delta_fro;
    out.d_t = d * d;
    out.v_t = out.e_t + gamma * *out.d_t;
  }
  if (phi_star != nullptr) out.chi = std::sqrt(rkhs_dist_sq(sharp, *phi_star));
  return out;
}

std::vector<double> regret(const std::vector<std::pair<Link, FactorMatrix>>& iterates,
                           const ObservationSet& obs, const KernelSpec& kernel,
                           const ObjectiveParams& params) {
  std::vector<double> averages;
  averages.reserve(iterates.size());
  double acc = 0.0;
  Index count = 0;
  for (const auto& [phi, z] : iterates) {
    PhiSharpOptions opts;
    if (const auto* dict = std::get_if<LinkFunction>(&phi)) opts.offset = dict->offset;
    const LinkFunction sharp = phi_sharp_objective(obs, z, kernel, params.alpha, opts);
    const double gap = loss(obs, z, phi, params) - loss(obs, z, Link{sharp}, params);
    acc += gap;
    ++count;
    averages.push_back(acc / static_cast<double>(count));
  }
  return averages;
}

double link_error(const Link& phi, const LinkFunction& phi_star, const KernelSpec& kernel) {
  double lo = -1.0, hi = 1.0;
  if (phi_star.size() > 0) {
    lo = phi_star.centers.minCoeff() - kernel.bandwidth;
    hi = phi_star.centers.maxCoeff() + kernel.bandwidth;
  }
  const LinkFunction dict = as_dictionary(phi, kernel, lo, hi);
  return std::sqrt(rkhs_dist_sq(dict, phi_star));
}

}  // namespace nlfm
