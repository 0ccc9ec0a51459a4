#pragma once

#include "nlfm/kernel.hpp"
#include "nlfm/types.hpp"

#include <utility>

namespace nlfm {

struct ObjectiveParams {
  double lambda = 0.5;  // balance regularizer weight
  double alpha = 1e-3;  // Tikhonov weight

  void validate() const {
    if (!(lambda >= 0.0) || !(alpha >= 0.0))
      throw std::invalid_argument("ObjectiveParams: weights must be finite and >= 0");
  }
};

/// The functional gradient as a dictionary delta: alpha times the current
/// function plus M fresh kernel atoms at the sample abscissae with
/// coefficients -(2/M) g_k.
struct PhiGradient {
  double decay = 0.0;
  Vec new_centers;
  Vec new_coeffs;
};

/// x_k = <A_k, Z Z^T> for every sample, in sample order.
Vec sample_products(const ObservationSet& obs, const FactorMatrix& z);

/// phi evaluated (or differentiated) over a vector of abscissae.
Vec link_values(const Link& phi, const Vec& x);
Vec link_derivs(const Link& phi, const Vec& x);

/// Deterministic chunked (1/M) sum g_k^2.
double mean_square(const Vec& g);

/// (lambda/4) ||Z^T D Z||_F^2 with D = diag(I_n, -I_T).
double balance_term(const FactorMatrix& z, double lambda);

/// (x, g) with g_k = y_k - phi(x_k).
std::pair<Vec, Vec> residuals(const ObservationSet& obs, const FactorMatrix& z, const Link& phi);

struct LossBreakdown {
  double data = 0.0;
  double balance = 0.0;
  double tikhonov = 0.0;
  double total() const { return data + balance + tikhonov; }
};

/// (1/M) sum g_k^2 + (lambda/4) ||Z^T D Z||_F^2 + (alpha/2) ||phi||_H^2.
LossBreakdown loss_terms(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
                         const ObjectiveParams& params);
double loss(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
            const ObjectiveParams& params);

/// Data part of the Z gradient from precomputed residuals and derivatives;
/// per-sample contributions land only on rows i_k and n + t_k.
Mat grad_z_data(const ObservationSet& obs, const FactorMatrix& z, const Vec& g, const Vec& derivs);

/// -(2/M) sum g_k phi'(x_k) (A_k + A_k^T) Z + lambda D Z (Z^T D Z).
Mat grad_z(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
           const ObjectiveParams& params);

PhiGradient grad_phi(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
                     const ObjectiveParams& params);
PhiGradient grad_phi_from(Vec x, const Vec& g, double alpha);

/// Realizes phi - eta * grad: scales coefficients and offset by
/// (1 - eta*decay), appends the atoms, and compresses onto the spacing grid.
LinkFunction apply_phi_step(const LinkFunction& phi, const PhiGradient& grad, double eta,
                            double dict_spacing);

/// ||phi||_H^2 for a dictionary link; a closed-form link carries no
/// dictionary norm and contributes 0.
double tikhonov_sq(const Link& phi);

}  // namespace nlfm
