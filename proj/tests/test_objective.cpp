#include "nlfm/objective.hpp"

#include "nlfm/parallel.hpp"
#include "nlfm/rng.hpp"

#include <doctest.h>

#include <Eigen/QR>

#include <cmath>

using namespace nlfm;

namespace {

struct Instance {
  ObservationSet obs;
  FactorMatrix z;
  LinkFunction phi;
};

Instance random_instance(Rng& rng, Index n, Index T, Index r, Index m, Index dict = 5) {
  Instance inst;
  inst.obs.n = n;
  inst.obs.T = T;
  inst.obs.i.resize(m);
  inst.obs.t.resize(m);
  inst.obs.y.resize(m);
  for (Index k = 0; k < m; ++k) {
    inst.obs.i[k] = static_cast<int>(rng.uniform_int(n));
    inst.obs.t[k] = static_cast<int>(rng.uniform_int(T));
    inst.obs.y[k] = rng.uniform(-1.5, 1.5);
  }
  inst.z.n = n;
  inst.z.T = T;
  inst.z.r = r;
  inst.z.z.resize(n + T, r);
  for (Index a = 0; a < n + T; ++a)
    for (Index b = 0; b < r; ++b) inst.z.z(a, b) = rng.normal() * 0.5;
  Vec centers(dict), coeffs(dict);
  for (Index j = 0; j < dict; ++j) {
    centers[j] = rng.uniform(-2.0, 2.0);
    coeffs[j] = rng.uniform(-0.7, 0.7);
  }
  inst.phi = make_link(KernelSpec{KernelFamily::gaussian, 1.0}, centers, coeffs, 0.1);
  return inst;
}

Mat random_rotation(Rng& rng, Index r) {
  Mat g(r, r);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b) g(a, b) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(r, r);
  return q;
}

/// Definitional recomputation with explicit matrices; the D matrix is
/// materialized, unlike the production path.
double brute_force_loss(const Instance& inst, const ObjectiveParams& p) {
  double data = 0.0;
  for (Index k = 0; k < inst.obs.M(); ++k) {
    double x = 0.0;
    for (Index c = 0; c < inst.z.r; ++c)
      x += inst.z.z(inst.obs.i[k], c) * inst.z.z(inst.z.n + inst.obs.t[k], c);
    const double g = inst.obs.y[k] - link_eval(inst.phi, x);
    data += g * g;
  }
  data /= static_cast<double>(inst.obs.M());
  Mat d = Mat::Zero(inst.z.n + inst.z.T, inst.z.n + inst.z.T);
  d.topLeftCorner(inst.z.n, inst.z.n).setIdentity();
  d.bottomRightCorner(inst.z.T, inst.z.T) = -Mat::Identity(inst.z.T, inst.z.T);
  const double balance = p.lambda / 4.0 * (inst.z.z.transpose() * d * inst.z.z).squaredNorm();
  const double tik = p.alpha / 2.0 * rkhs_norm_sq(inst.phi);
  return data + balance + tik;
}

}  // namespace

TEST_CASE("residuals") {
  SUBCASE("zero link leaves the raw responses") {
    Rng rng(7);
    Instance inst = random_instance(rng, 4, 3, 2, 10);
    LinkFunction zero;
    zero.kernel = inst.phi.kernel;
    auto [x, g] = residuals(inst.obs, inst.z, Link{zero});
    CHECK(g == inst.obs.y);
  }

  SUBCASE("perfect fit gives zero residuals") {
    Rng rng(8);
    Instance inst = random_instance(rng, 4, 3, 2, 10);
    for (Index k = 0; k < inst.obs.M(); ++k)
      inst.obs.y[k] = link_eval(inst.phi, sample_inner_product(inst.z, inst.obs.i[k], inst.obs.t[k]));
    auto [x, g] = residuals(inst.obs, inst.z, Link{inst.phi});
    for (Index k = 0; k < g.size(); ++k) CHECK(g[k] == 0.0);
  }

  SUBCASE("two-sample hand instance") {
    ObservationSet obs;
    obs.n = 2;
    obs.T = 2;
    obs.i.resize(2);
    obs.t.resize(2);
    obs.y.resize(2);
    obs.i << 0, 1;
    obs.t << 1, 0;
    obs.y << 2.0, -1.0;
    FactorMatrix z;
    z.n = 2;
    z.T = 2;
    z.r = 1;
    z.z.resize(4, 1);
    z.z << 1.0, 2.0, 3.0, 0.5;  // x_0 = <row0,row3> = 0.5, x_1 = <row1,row2> = 6
    auto [x, g] = residuals(obs, z, Link{AnalyticLink::identity});
    CHECK(x[0] == doctest::Approx(0.5));
    CHECK(x[1] == doctest::Approx(6.0));
    CHECK(g[0] == doctest::Approx(1.5));
    CHECK(g[1] == doctest::Approx(-7.0));
  }
}

TEST_CASE("loss") {
  ObjectiveParams params;

  SUBCASE("perfect fit with no regularization is zero") {
    Rng rng(9);
    Instance inst = random_instance(rng, 4, 3, 2, 10);
    for (Index k = 0; k < inst.obs.M(); ++k)
      inst.obs.y[k] = link_eval(inst.phi, sample_inner_product(inst.z, inst.obs.i[k], inst.obs.t[k]));
    CHECK(loss(inst.obs, inst.z, Link{inst.phi}, {0.0, 0.0}) == 0.0);
  }

  SUBCASE("balanced blocks kill the balance term for any lambda") {
    Rng rng(10);
    Instance inst = random_instance(rng, 3, 3, 2, 8);
    inst.z.z.bottomRows(3) = inst.z.z.topRows(3);  // U = V so U^T U = V^T V
    const LossBreakdown a = loss_terms(inst.obs, inst.z, Link{inst.phi}, {0.0, 0.0});
    const LossBreakdown b = loss_terms(inst.obs, inst.z, Link{inst.phi}, {7.5, 0.0});
    CHECK(b.balance == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(a.total() == doctest::Approx(b.total()).epsilon(1e-12));
  }

  SUBCASE("matches the brute-force definitional oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      Instance inst = random_instance(rng, 5, 4, 2, 12);
      CHECK(loss(inst.obs, inst.z, Link{inst.phi}, params) ==
            doctest::Approx(brute_force_loss(inst, params)).epsilon(1e-12));
    }
  }
}

TEST_CASE("grad_z") {
  ObjectiveParams params{0.4, 2e-3};

  SUBCASE("stationary at a perfect balanced fit") {
    Rng rng(12);
    Instance inst = random_instance(rng, 3, 3, 2, 9);
    inst.z.z.bottomRows(3) = inst.z.z.topRows(3);
    for (Index k = 0; k < inst.obs.M(); ++k)
      inst.obs.y[k] = link_eval(inst.phi, sample_inner_product(inst.z, inst.obs.i[k], inst.obs.t[k]));
    const Mat g = grad_z(inst.obs, inst.z, Link{inst.phi}, params);
    CHECK(g.cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("single sample touches exactly two rows") {
    Rng rng(13);
    Instance inst = random_instance(rng, 4, 3, 2, 1);
    const Mat g = grad_z(inst.obs, inst.z, Link{inst.phi}, {0.0, 0.0});
    for (Index a = 0; a < g.rows(); ++a) {
      const bool touched = a == inst.obs.i[0] || a == inst.z.n + inst.obs.t[0];
      if (!touched) CHECK(g.row(a).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("entries match central finite differences") {
    Rng rng(14);
    for (int trial = 0; trial < 3; ++trial) {
      Instance inst = random_instance(rng, 4, 2, 2, 12);
      const Mat g = grad_z(inst.obs, inst.z, Link{inst.phi}, params);
      for (Index a = 0; a < inst.z.z.rows(); ++a) {
        for (Index b = 0; b < inst.z.r; ++b) {
          const double h = 1e-6 * std::max(1.0, std::abs(inst.z.z(a, b)));
          Instance up = inst, dn = inst;
          up.z.z(a, b) += h;
          dn.z.z(a, b) -= h;
          const double fd = (loss(up.obs, up.z, Link{up.phi}, params) -
                             loss(dn.obs, dn.z, Link{dn.phi}, params)) /
                            (2 * h);
          const double denom = std::max({std::abs(g(a, b)), std::abs(fd), 1e-6});
          CHECK(std::abs(g(a, b) - fd) / denom <= 1e-5);
        }
      }
    }
  }
}

TEST_CASE("grad_phi") {
  SUBCASE("zero residuals and zero alpha vanish") {
    Rng rng(15);
    Instance inst = random_instance(rng, 4, 3, 2, 10);
    for (Index k = 0; k < inst.obs.M(); ++k)
      inst.obs.y[k] = link_eval(inst.phi, sample_inner_product(inst.z, inst.obs.i[k], inst.obs.t[k]));
    const PhiGradient g = grad_phi(inst.obs, inst.z, Link{inst.phi}, {0.5, 0.0});
    CHECK(g.decay == 0.0);
    CHECK(g.new_coeffs.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("one unit residual yields the -2 atom") {
    ObservationSet obs;
    obs.n = 1;
    obs.T = 1;
    obs.i.resize(1);
    obs.t.resize(1);
    obs.y.resize(1);
    obs.i << 0;
    obs.t << 0;
    obs.y << 1.0;
    FactorMatrix z;
    z.n = 1;
    z.T = 1;
    z.r = 1;
    z.z = Mat::Zero(2, 1);  // x_1 = 0, phi(0) = 0 under the zero link
    LinkFunction zero;
    zero.kernel = KernelSpec{};
    const PhiGradient g = grad_phi(obs, z, Link{zero}, {0.0, 0.0});
    CHECK(g.new_centers[0] == 0.0);
    CHECK(g.new_coeffs[0] == doctest::Approx(-2.0));
  }

  SUBCASE("directional derivative matches functional finite differences") {
    Rng rng(16);
    ObjectiveParams params{0.3, 5e-3};
    for (int trial = 0; trial < 3; ++trial) {
      Instance inst = random_instance(rng, 4, 3, 2, 10);
      const PhiGradient g = grad_phi(inst.obs, inst.z, Link{inst.phi}, params);

      // random test direction psi in the same RKHS
      Vec dirs(4), dcoef(4);
      for (Index j = 0; j < 4; ++j) {
        dirs[j] = rng.uniform(-2.0, 2.0);
        dcoef[j] = rng.uniform(-0.5, 0.5);
      }
      const LinkFunction psi = make_link(inst.phi.kernel, dirs, dcoef);

      // <grad, psi>_H = alpha <phi, psi> + sum_k c_k psi(x_k)
      double ip = 0.0;
      for (Index a = 0; a < inst.phi.size(); ++a)
        for (Index b = 0; b < psi.size(); ++b)
          ip += params.alpha * inst.phi.coeffs[a] * psi.coeffs[b] *
                kernel_eval(psi.kernel, inst.phi.centers[a], psi.centers[b]);
      for (Index k = 0; k < g.new_centers.size(); ++k)
        ip += g.new_coeffs[k] * (link_eval(psi, g.new_centers[k]) - psi.offset);

      const double eps = 1e-5;
      auto shifted = [&](double scale) {
        Vec centers(inst.phi.size() + psi.size()), coeffs(inst.phi.size() + psi.size());
        centers << inst.phi.centers, psi.centers;
        coeffs << inst.phi.coeffs, scale * psi.coeffs;
        return make_link(inst.phi.kernel, centers, coeffs, inst.phi.offset);
      };
      const double fd = (loss(inst.obs, inst.z, Link{shifted(eps)}, params) -
                         loss(inst.obs, inst.z, Link{shifted(-eps)}, params)) /
                        (2 * eps);
      const double denom = std::max({std::abs(ip), std::abs(fd), 1e-6});
      CHECK(std::abs(ip - fd) / denom <= 1e-5);
    }
  }
}

TEST_CASE("apply_phi_step realizes the gradient update") {
  Rng rng(18);
  Instance inst = random_instance(rng, 4, 3, 2, 8);
  const ObjectiveParams params{0.2, 1e-2};
  const double eta = 1e-2;
  const PhiGradient g = grad_phi(inst.obs, inst.z, Link{inst.phi}, params);
  const LinkFunction next = apply_phi_step(inst.phi, g, eta, 1e-9);

  // with negligible snapping, next(x) = (1 - eta alpha) phi(x) + (2 eta / M) sum g_k K(x_k, x)
  auto [x, res] = residuals(inst.obs, inst.z, Link{inst.phi});
  for (int probe = 0; probe < 10; ++probe) {
    const double pt = rng.uniform(-2, 2);
    double expect = (1 - eta * params.alpha) * link_eval(inst.phi, pt);
    for (Index k = 0; k < x.size(); ++k)
      expect += 2 * eta / static_cast<double>(x.size()) * res[k] * kernel_eval(inst.phi.kernel, x[k], pt);
    CHECK(link_eval(next, pt) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("rotation invariance of the loss") {
  Rng rng(19);
  ObjectiveParams params{0.6, 3e-3};
  for (int trial = 0; trial < 5; ++trial) {
    Instance inst = random_instance(rng, 5, 4, 3, 14);
    const double base = loss(inst.obs, inst.z, Link{inst.phi}, params);
    Instance rotated = inst;
    rotated.z.z = inst.z.z * random_rotation(rng, inst.z.r);
    const double after = loss(rotated.obs, rotated.z, Link{rotated.phi}, params);
    CHECK(std::abs(after - base) <= 1e-10 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("rank-1 rescaling symmetry of the data term") {
  Rng rng(20);
  Instance inst = random_instance(rng, 5, 4, 1, 12);
  const double c = 1.7;
  Instance scaled = inst;
  scaled.z.z.topRows(5) *= c;
  scaled.z.z.bottomRows(4) /= c;

  const double base = loss(inst.obs, inst.z, Link{inst.phi}, {0.0, 0.0});
  const double after = loss(scaled.obs, scaled.z, Link{scaled.phi}, {0.0, 0.0});
  CHECK(std::abs(after - base) <= 1e-10 * std::max(1.0, std::abs(base)));

  // with lambda > 0 the balance term strictly penalizes the imbalance
  const double reg_base = loss(inst.obs, inst.z, Link{inst.phi}, {0.5, 0.0});
  const double reg_after = loss(scaled.obs, scaled.z, Link{scaled.phi}, {0.5, 0.0});
  CHECK(reg_after > reg_base);
}

TEST_CASE("objective results are bit-identical across thread counts") {
  Rng rng(21);
  Instance inst = random_instance(rng, 40, 30, 3, 6000, 8);
  const ObjectiveParams params{0.5, 1e-3};

  set_num_threads(1);
  const double loss1 = loss(inst.obs, inst.z, Link{inst.phi}, params);
  const Mat gz1 = grad_z(inst.obs, inst.z, Link{inst.phi}, params);
  const PhiGradient gp1 = grad_phi(inst.obs, inst.z, Link{inst.phi}, params);

  set_num_threads(4);
  const double loss4 = loss(inst.obs, inst.z, Link{inst.phi}, params);
  const Mat gz4 = grad_z(inst.obs, inst.z, Link{inst.phi}, params);
  const PhiGradient gp4 = grad_phi(inst.obs, inst.z, Link{inst.phi}, params);
  set_num_threads(1);

  CHECK(loss1 == loss4);
  CHECK(gz1 == gz4);
  CHECK(gp1.new_coeffs == gp4.new_coeffs);
}
