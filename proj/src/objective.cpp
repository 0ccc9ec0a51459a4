#include "nlfm/objective.hpp"

#include "nlfm/parallel.hpp"

#include <cmath>
#include <vector>

namespace nlfm {

Vec sample_products(const ObservationSet& obs, const FactorMatrix& z) {
  if (obs.n != z.n || obs.T != z.T)
    throw std::invalid_argument("sample_products: observation and factor dimensions differ");
  const Index m = obs.M();
  Vec x(m);
  parallel_chunks(m, reduce_chunk_size(m), [&](Index, Index lo, Index hi) {
    for (Index k = lo; k < hi; ++k)
      x[k] = z.z.row(obs.i[k]).dot(z.z.row(z.n + obs.t[k]));
  });
  return x;
}

namespace {

template <class Fn>
Vec mapped(const Vec& x, const Fn& fn) {
  Vec out(x.size());
  parallel_chunks(x.size(), reduce_chunk_size(x.size()), [&](Index, Index lo, Index hi) {
    for (Index k = lo; k < hi; ++k) out[k] = fn(x[k]);
  });
  return out;
}

}  // namespace

Vec link_values(const Link& phi, const Vec& x) {
  return std::visit([&](const auto& f) { return mapped(x, [&](double v) { return link_eval(f, v); }); }, phi);
}

Vec link_derivs(const Link& phi, const Vec& x) {
  return std::visit([&](const auto& f) { return mapped(x, [&](double v) { return link_deriv(f, v); }); }, phi);
}

double mean_square(const Vec& g) {
  const Index m = g.size();
  if (m == 0) return 0.0;
  const double total = chunked_sum(m, reduce_chunk_size(m), [&](Index lo, Index hi) {
    double acc = 0.0;
    for (Index k = lo; k < hi; ++k) acc += g[k] * g[k];
    return acc;
  });
  return total / static_cast<double>(m);
}

double balance_term(const FactorMatrix& z, double lambda) {
  if (lambda == 0.0) return 0.0;
  const Mat core = z.u().transpose() * z.u() - z.v().transpose() * z.v();
  return lambda / 4.0 * core.squaredNorm();
}

std::pair<Vec, Vec> residuals(const ObservationSet& obs, const FactorMatrix& z, const Link& phi) {
  Vec x = sample_products(obs, z);
  Vec g = obs.y - link_values(phi, x);
  return {std::move(x), std::move(g)};
}

double tikhonov_sq(const Link& phi) {
  if (const auto* dict = std::get_if<LinkFunction>(&phi)) return rkhs_norm_sq(*dict);
  return 0.0;
}

LossBreakdown loss_terms(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
                         const ObjectiveParams& params) {
  params.validate();
  auto [x, g] = residuals(obs, z, phi);
  LossBreakdown out;
  out.data = mean_square(g);
  out.balance = balance_term(z, params.lambda);
  out.tikhonov = params.alpha / 2.0 * tikhonov_sq(phi);
  return out;
}

double loss(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
            const ObjectiveParams& params) {
  return loss_terms(obs, z, phi, params).total();
}

Mat grad_z_data(const ObservationSet& obs, const FactorMatrix& z, const Vec& g, const Vec& derivs) {
  const Index m = obs.M();
  const Index rows = z.n + z.T;
  const double scale = -2.0 / static_cast<double>(m);
  const Index chunk = reduce_chunk_size(m);
  const Index n_chunks = (m + chunk - 1) / chunk;

  // chunk-local accumulators combined in chunk order: bit-identical results
  // for any thread count
  std::vector<Mat> partials(n_chunks);
  parallel_chunks(m, chunk, [&](Index c, Index lo, Index hi) {
    Mat acc = Mat::Zero(rows, z.r);
    for (Index k = lo; k < hi; ++k) {
      const double w = scale * g[k] * derivs[k];
      const Index a = obs.i[k];
      const Index b = z.n + obs.t[k];
      acc.row(a) += w * z.z.row(b);
      acc.row(b) += w * z.z.row(a);
    }
    partials[c] = std::move(acc);
  });
  Mat grad = Mat::Zero(rows, z.r);
  for (Index c = 0; c < n_chunks; ++c) grad += partials[c];
  return grad;
}

Mat grad_z(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
           const ObjectiveParams& params) {
  params.validate();
  auto [x, g] = residuals(obs, z, phi);
  Mat grad = grad_z_data(obs, z, g, link_derivs(phi, x));
  if (params.lambda > 0.0) {
    // D Z (Z^T D Z) through the r x r core; the (n+T)^2 matrix never exists
    const Mat core = z.u().transpose() * z.u() - z.v().transpose() * z.v();
    grad.topRows(z.n).noalias() += params.lambda * (z.u() * core);
    grad.bottomRows(z.T).noalias() -= params.lambda * (z.v() * core);
  }
  return grad;
}

PhiGradient grad_phi_from(Vec x, const Vec& g, double alpha) {
  PhiGradient out;
  out.decay = alpha;
  out.new_centers = std::move(x);
  out.new_coeffs = -2.0 / static_cast<double>(g.size()) * g;
  return out;
}

PhiGradient grad_phi(const ObservationSet& obs, const FactorMatrix& z, const Link& phi,
                     const ObjectiveParams& params) {
  params.validate();
  auto [x, g] = residuals(obs, z, phi);
  return grad_phi_from(std::move(x), g, params.alpha);
}

LinkFunction apply_phi_step(const LinkFunction& phi, const PhiGradient& grad, double eta,
                            double dict_spacing) {
  const double keep = 1.0 - eta * grad.decay;
  const Index m_old = phi.size();
  const Index m_new = grad.new_centers.size();
  Vec centers(m_old + m_new), coeffs(m_old + m_new);
  centers << phi.centers, grad.new_centers;
  coeffs << keep * phi.coeffs, -eta * grad.new_coeffs;
  LinkFunction stepped = make_link(phi.kernel, std::move(centers), std::move(coeffs), keep * phi.offset);
  return compress_dictionary(stepped, dict_spacing);
}

}  // namespace nlfm
