#include "nlfm/diagnostics.hpp"

#include "nlfm/rng.hpp"
#include "nlfm/synthetic.hpp"

#include <doctest.h>

#include <Eigen/QR>

#include <cmath>

using namespace nlfm;

namespace {

FactorMatrix random_factors(Rng& rng, Index n, Index T, Index r, double scale = 1.0) {
  FactorMatrix z;
  z.n = n;
  z.T = T;
  z.r = r;
  z.z.resize(n + T, r);
  for (Index a = 0; a < n + T; ++a)
    for (Index b = 0; b < r; ++b) z.z(a, b) = scale * rng.normal();
  return z;
}

Mat random_rotation(Rng& rng, Index r) {
  Mat g(r, r);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b) g(a, b) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  return qr.householderQ() * Mat::Identity(r, r);
}

/// Noiseless observations from a dictionary ground-truth link.
struct RkhsInstance {
  ObservationSet obs;
  FactorMatrix z;
  LinkFunction phi_star;
};

RkhsInstance rkhs_instance(Rng& rng, Index n, Index T, Index r, Index m) {
  RkhsInstance inst;
  inst.z = random_factors(rng, n, T, r, 0.6);
  Vec centers(4), coeffs(4);
  for (Index j = 0; j < 4; ++j) {
    centers[j] = rng.uniform(-1.5, 1.5);
    coeffs[j] = rng.uniform(-0.8, 0.8);
  }
  inst.phi_star = make_link(KernelSpec{}, centers, coeffs, 0.0);
  inst.obs.n = n;
  inst.obs.T = T;
  inst.obs.i.resize(m);
  inst.obs.t.resize(m);
  inst.obs.y.resize(m);
  for (Index k = 0; k < m; ++k) {
    inst.obs.i[k] = static_cast<int>(rng.uniform_int(n));
    inst.obs.t[k] = static_cast<int>(rng.uniform_int(T));
    inst.obs.y[k] = link_eval(inst.phi_star, sample_inner_product(inst.z, inst.obs.i[k], inst.obs.t[k]));
  }
  return inst;
}

}  // namespace

TEST_CASE("procrustes_align") {
  Rng rng(51);

  SUBCASE("identical inputs align exactly") {
    const FactorMatrix z = random_factors(rng, 6, 4, 3);
    const AlignmentResult res = procrustes_align(z, z);
    CHECK(res.delta_fro == doctest::Approx(0.0).epsilon(1e-14));
    CHECK((res.rotation - Mat::Identity(3, 3)).norm() <= 1e-12);
  }

  SUBCASE("the equivalence class has zero distance") {
    for (int trial = 0; trial < 5; ++trial) {
      const FactorMatrix z_star = random_factors(rng, 6, 4, 3);
      FactorMatrix z = z_star;
      z.z = z_star.z * random_rotation(rng, 3);
      CHECK(procrustes_align(z, z_star).delta_fro <= 1e-10);
    }
  }

  SUBCASE("r=1 matches the sign-flip oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      const FactorMatrix z_star = random_factors(rng, 5, 3, 1);
      const FactorMatrix z = random_factors(rng, 5, 3, 1);
      const double expect = std::min((z.z - z_star.z).norm(), (z.z + z_star.z).norm());
      CHECK(procrustes_align(z, z_star).delta_fro == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("r=2 matches a dense rotation grid search") {
    for (int trial = 0; trial < 3; ++trial) {
      const FactorMatrix z_star = random_factors(rng, 5, 4, 2);
      const FactorMatrix z = random_factors(rng, 5, 4, 2);
      double best = std::numeric_limits<double>::infinity();
      for (int sign = -1; sign <= 1; sign += 2) {
        for (int step = 0; step < 20000; ++step) {
          const double a = 2.0 * 3.14159265358979323846 * step / 20000.0;
          Mat rot(2, 2);
          rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
          if (sign < 0) rot.col(1) *= -1.0;  // reflection branch
          best = std::min(best, (z.z - z_star.z * rot).norm());
        }
      }
      CHECK(procrustes_align(z, z_star).delta_fro == doctest::Approx(best).epsilon(1e-6));
    }
  }

  SUBCASE("the metric is rotation invariant") {
    const FactorMatrix z_star = random_factors(rng, 6, 4, 3);
    const FactorMatrix z = random_factors(rng, 6, 4, 3);
    FactorMatrix rotated = z;
    rotated.z = z.z * random_rotation(rng, 3);
    CHECK(procrustes_align(rotated, z_star).delta_fro ==
          doctest::Approx(procrustes_align(z, z_star).delta_fro).epsilon(1e-10));
  }
}

TEST_CASE("phi_sharp") {
  KernelSpec kernel;

  SUBCASE("single-sample closed form") {
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
    z.z = Mat::Zero(2, 1);  // x_1 = 0
    const double alpha = 0.3;
    const LinkFunction sharp = phi_sharp(obs, z, kernel, alpha);
    CHECK(sharp.size() == 1);
    CHECK(sharp.coeffs[0] == doctest::Approx(2.0 / (alpha + 2.0)).epsilon(1e-12));
    CHECK(link_eval(sharp, 0.0) == doctest::Approx(2.0 / (alpha + 2.0)).epsilon(1e-12));
  }

  SUBCASE("huge alpha shrinks the fit to zero") {
    Rng rng(52);
    RkhsInstance inst = rkhs_instance(rng, 5, 4, 2, 25);
    const LinkFunction sharp = phi_sharp(inst.obs, inst.z, kernel, 1e9);
    CHECK(rkhs_norm_sq(sharp) <= 1e-12);
    auto [x, g] = residuals(inst.obs, inst.z, Link{sharp});
    CHECK((g - inst.obs.y).cwiseAbs().maxCoeff() <= 1e-6);
  }

  SUBCASE("stationarity: the functional gradient vanishes at phi_sharp") {
    Rng rng(53);
    for (int trial = 0; trial < 5; ++trial) {
      RkhsInstance inst = rkhs_instance(rng, 5, 4, 2, 20);
      const double alpha = 0.05;
      const LinkFunction sharp = phi_sharp_objective(inst.obs, inst.z, kernel, alpha);
      const PhiGradient grad = grad_phi(inst.obs, inst.z, Link{sharp}, {0.0, alpha});
      // realize the gradient as a dictionary and take its H-norm
      Vec centers(sharp.size() + grad.new_centers.size());
      Vec coeffs(sharp.size() + grad.new_coeffs.size());
      centers << sharp.centers, grad.new_centers;
      coeffs << alpha * sharp.coeffs, grad.new_coeffs;
      const LinkFunction as_dict = make_link(kernel, centers, coeffs);
      CHECK(std::sqrt(rkhs_norm_sq(as_dict)) <= 1e-6 * (1.0 + inst.obs.y.norm()));
    }
  }
}

TEST_CASE("residual identity and stationary-point bound") {
  KernelSpec kernel;
  Rng rng(54);

  SUBCASE("identity e = alpha (alpha I + 2K)^{-1} y and the bound hold") {
    for (int trial = 0; trial < 20; ++trial) {
      RkhsInstance inst = rkhs_instance(rng, 4 + trial % 3, 3 + trial % 2, 2, 15 + trial);
      const double alpha = std::pow(10.0, rng.uniform(-3.0, 0.0));
      const LinkFunction sharp = phi_sharp(inst.obs, inst.z, kernel, alpha);
      auto [x, e] = residuals(inst.obs, inst.z, Link{sharp});

      const Mat gram = gram_matrix(kernel, x);
      Mat sys = 2.0 * gram;
      sys.diagonal().array() += alpha;
      const Vec expect = alpha * sys.ldlt().solve(inst.obs.y);
      CHECK((e - expect).norm() <= 1e-8 * std::max(1.0, expect.norm()));

      const ResidualBoundReport report =
          residual_bound_check(inst.obs, inst.z, kernel, alpha, std::sqrt(rkhs_norm_sq(inst.phi_star)));
      CHECK(report.holds);
      CHECK(report.lhs == doctest::Approx(e.norm() / std::sqrt(static_cast<double>(e.size()))).epsilon(1e-8));
    }
  }

  SUBCASE("alpha to zero drives the residual to zero") {
    // separated abscissae keep lambda_min(K) well away from zero
    ObservationSet obs;
    obs.n = 6;
    obs.T = 1;
    obs.i.resize(6);
    obs.t.resize(6);
    obs.y.resize(6);
    for (int k = 0; k < 6; ++k) {
      obs.i[k] = k;
      obs.t[k] = 0;
      obs.y[k] = 0.3 * k - 0.7;
    }
    FactorMatrix z;
    z.n = 6;
    z.T = 1;
    z.r = 1;
    z.z.resize(7, 1);
    z.z << -2.0, -1.2, -0.4, 0.4, 1.2, 2.0, 1.0;  // x_k = first six values
    const ResidualBoundReport tiny = residual_bound_check(obs, z, kernel, 1e-8, 10.0);
    CHECK(tiny.lhs <= 1e-6);
    const ResidualBoundReport coarse = residual_bound_check(obs, z, kernel, 1e-2, 10.0);
    CHECK(tiny.lhs < coarse.lhs);
  }

  SUBCASE("two-sample hand solve") {
    ObservationSet obs;
    obs.n = 2;
    obs.T = 1;
    obs.i.resize(2);
    obs.t.resize(2);
    obs.y.resize(2);
    obs.i << 0, 1;
    obs.t << 0, 0;
    obs.y << 1.0, 2.0;
    FactorMatrix z;
    z.n = 2;
    z.T = 1;
    z.r = 1;
    z.z.resize(3, 1);
    z.z << 1.0, 2.0, 0.5;  // x = (0.5, 1.0)
    const double alpha = 0.4;
    const double k01 = kernel_eval(kernel, 0.5, 1.0);
    Mat sys(2, 2);
    sys << alpha + 2.0, 2.0 * k01, 2.0 * k01, alpha + 2.0;
    const Vec e_hand = alpha * sys.inverse() * obs.y;
    const ResidualBoundReport report = residual_bound_check(obs, z, kernel, alpha, 10.0);
    CHECK(report.lhs == doctest::Approx(e_hand.norm() / std::sqrt(2.0)).epsilon(1e-10));
  }
}

TEST_CASE("potential") {
  KernelSpec kernel;
  Rng rng(55);
  RkhsInstance inst = rkhs_instance(rng, 5, 4, 2, 20);
  const double alpha = 0.05;

  SUBCASE("E vanishes at the subproblem minimizer") {
    const LinkFunction sharp = phi_sharp_objective(inst.obs, inst.z, kernel, alpha);
    const PotentialReport report =
        potential(inst.obs, inst.z, Link{sharp}, &inst.z, &inst.phi_star, kernel, alpha, 1.0);
    CHECK(report.e_t <= 1e-10);
    CHECK(*report.d_t == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(*report.v_t <= 1e-10);
    CHECK(report.chi.has_value());
  }

  SUBCASE("V composes E and D with the gamma weight") {
    const FactorMatrix other = random_factors(rng, 5, 4, 2, 0.6);
    const double gamma = 2.0;
    const PotentialReport report =
        potential(inst.obs, other, Link{inst.phi_star}, &inst.z, nullptr, kernel, alpha, gamma);
    CHECK(report.d_t.has_value());
    CHECK(*report.v_t == report.e_t + gamma * *report.d_t);
  }

  SUBCASE("D is omitted without ground truth") {
    const PotentialReport report =
        potential(inst.obs, inst.z, Link{inst.phi_star}, nullptr, nullptr, kernel, alpha, 1.0);
    CHECK(!report.d_t.has_value());
    CHECK(!report.v_t.has_value());
  }
}

TEST_CASE("regret") {
  KernelSpec kernel;
  Rng rng(56);
  RkhsInstance inst = rkhs_instance(rng, 5, 4, 2, 18);
  const ObjectiveParams params{0.3, 0.05};

  SUBCASE("gaps vanish when every iterate is the minimizer") {
    std::vector<std::pair<Link, FactorMatrix>> iterates;
    for (int t = 0; t < 4; ++t)
      iterates.emplace_back(Link{phi_sharp_objective(inst.obs, inst.z, kernel, params.alpha)}, inst.z);
    const auto averages = regret(iterates, inst.obs, kernel, params);
    for (double avg : averages) CHECK(std::abs(avg) <= 1e-10);
  }

  SUBCASE("gaps are nonnegative and averages are prefix means") {
    std::vector<std::pair<Link, FactorMatrix>> iterates;
    for (int t = 0; t < 5; ++t) {
      Vec centers(3), coeffs(3);
      for (Index j = 0; j < 3; ++j) {
        centers[j] = rng.uniform(-1.5, 1.5);
        coeffs[j] = rng.uniform(-0.5, 0.5);
      }
      iterates.emplace_back(Link{make_link(kernel, centers, coeffs)}, random_factors(rng, 5, 4, 2, 0.6));
    }
    const auto averages = regret(iterates, inst.obs, kernel, params);
    REQUIRE(averages.size() == iterates.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < iterates.size(); ++t) {
      const auto& [phi, z] = iterates[t];
      const double gap =
          loss(inst.obs, z, phi, params) -
          loss(inst.obs, z, Link{phi_sharp_objective(inst.obs, z, kernel, params.alpha)}, params);
      CHECK(gap >= -1e-10);
      acc += gap;
      CHECK(averages[t] == doctest::Approx(acc / static_cast<double>(t + 1)).epsilon(1e-10));
    }
  }
}

TEST_CASE("link_error") {
  KernelSpec kernel;

  SUBCASE("identical dictionaries have zero error") {
    Vec centers(3), coeffs(3);
    centers << -1.0, 0.0, 1.0;
    coeffs << 0.5, -0.2, 0.8;
    const LinkFunction phi = make_link(kernel, centers, coeffs);
    CHECK(link_error(Link{phi}, phi, kernel) <= 1e-12);
  }

  SUBCASE("against the zero function the error is the atom norm") {
    LinkFunction zero;
    zero.kernel = kernel;
    const LinkFunction single = make_link(kernel, Vec::Zero(1), Vec::Constant(1, -3.0));
    CHECK(link_error(Link{single}, zero, kernel) == doctest::Approx(3.0).epsilon(1e-12));
  }

  SUBCASE("two hand dictionaries match the quadratic-form expansion") {
    Vec c1(2), b1(2), c2(1), b2(1);
    c1 << 0.0, 1.0;
    b1 << 1.0, -0.5;
    c2 << 0.5;
    b2 << 0.25;
    const LinkFunction f1 = make_link(kernel, c1, b1);
    const LinkFunction f2 = make_link(kernel, c2, b2);
    // || f1 - f2 ||^2 expanded over the merged atoms by hand
    double expect = 0.0;
    Vec mc(3), mb(3);
    mc << 0.0, 1.0, 0.5;
    mb << 1.0, -0.5, -0.25;
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 3; ++b) expect += mb[a] * mb[b] * kernel_eval(kernel, mc[a], mc[b]);
    CHECK(link_error(Link{f1}, f2, kernel) == doctest::Approx(std::sqrt(expect)).epsilon(1e-12));
  }
}
