#pragma once

#include "nlfm/kernel.hpp"
#include "nlfm/objective.hpp"
#include "nlfm/types.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace nlfm {

/// Alignment of Z to the equivalence class of Z*: the orthogonal Procrustes
/// rotation, the residual Delta = Z - Z* R, and its Frobenius norm.
struct AlignmentResult {
  Mat rotation;
  Mat delta;
  double delta_fro = 0.0;
};

AlignmentResult procrustes_align(const FactorMatrix& z, const FactorMatrix& z_star);

struct PhiSharpOptions {
  Index subsample = 0;  // 0: use all samples
  double offset = 0.0;  // norm-free constant held fixed by the subproblem
  std::uint64_t seed = 0x9e3779b97f4a7c15ull;
};

/// The phi-subproblem stationary point at fixed Z in the form
/// (alpha I + 2K) beta = 2(y - offset) over the sample abscissae. This alpha
/// convention pairs with the unnormalized data term sum g_k^2.
LinkFunction phi_sharp(const ObservationSet& obs, const FactorMatrix& z, const KernelSpec& kernel,
                       double alpha, const PhiSharpOptions& opts = {});

/// The minimizer of the solver objective (1/M) sum g_k^2 + (alpha/2)||.||^2
/// at fixed Z: phi_sharp with alpha scaled by the solved sample count.
LinkFunction phi_sharp_objective(const ObservationSet& obs, const FactorMatrix& z,
                                 const KernelSpec& kernel, double alpha,
                                 const PhiSharpOptions& opts = {});

struct ResidualBoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// Stationary-point residual bound: ||e||_2 / sqrt(M) against
/// alpha sqrt(B_K) ||phi*||_H / (alpha + 2 lambda_min(K)).
ResidualBoundReport residual_bound_check(const ObservationSet& obs, const FactorMatrix& z,
                                         const KernelSpec& kernel, double alpha,
                                         double phi_star_norm);

struct PotentialReport {
  double e_t = 0.0;                  // ||phi - phi_sharp(Z)||_H^2
  std::optional<double> d_t;         // ||Delta(Z)||_F^2 when z_star given
  double gamma = 1.0;
  std::optional<double> v_t;         // e_t + gamma * d_t
  std::optional<double> chi;         // ||phi_sharp(Z) - phi*||_H when phi* given
};

PotentialReport potential(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
                          const FactorMatrix* z_star, const LinkFunction* phi_star,
                          const KernelSpec& kernel, double alpha, double gamma,
                          const PhiSharpOptions& opts = {});

/// Running averages of gap_t = L(phi_t, Z_t) - L(phi_sharp(Z_t), Z_t); one
/// entry per prefix of the iterate list.
std::vector<double> regret(const std::vector<std::pair<Link, FactorMatrix>>& iterates,
                           const ObservationSet& obs, const KernelSpec& kernel,
                           const ObjectiveParams& params);

/// ||phi - phi*||_H via the merged-dictionary quadratic form; a closed-form
/// phi is first interpolated onto a reference grid dictionary.
double link_error(const Link& phi, const LinkFunction& phi_star, const KernelSpec& kernel);

/// Dictionary form of a link for H-norm arithmetic; analytic links are
/// interpolated over [lo, hi].
LinkFunction as_dictionary(const Link& phi, const KernelSpec& kernel, double lo, double hi, int m = 101);

}  // namespace nlfm
