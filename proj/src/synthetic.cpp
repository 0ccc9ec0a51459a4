#include "nlfm/synthetic.hpp"

#include "nlfm/rng.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nlfm {

namespace {

/// Orthonormal columns from a QR of a standard-normal draw.
Mat random_orthonormal(Index rows, Index cols, Rng& rng) {
  Mat g(rows, cols);
  for (Index a = 0; a < rows; ++a)
    for (Index b = 0; b < cols; ++b) g(a, b) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(rows, cols);
  return q;
}

Vec default_spectrum(Index n, Index T, Index r) {
  // X* entries come out O(1); condition number 2 when r > 1
  const double top = std::sqrt(static_cast<double>(n) * static_cast<double>(T) / static_cast<double>(r));
  Vec s(r);
  for (Index a = 0; a < r; ++a)
    s[a] = top * (1.0 - 0.5 * static_cast<double>(a) / static_cast<double>(std::max<Index>(r - 1, 1)));
  return s;
}

}  // namespace

std::pair<ObservationSet, GroundTruth> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n <= 0 || cfg.T <= 0 || cfg.r < 1) throw std::invalid_argument("generate_synthetic: bad dimensions");
  if (cfg.r > std::min(cfg.n, cfg.T)) throw std::invalid_argument("generate_synthetic: rank exceeds min(n, T)");
  const Index cells = cfg.n * cfg.T;
  if (cells / cfg.T != cfg.n) throw std::overflow_error("generate_synthetic: n*T overflows");

  Index m = cfg.M;
  if (cfg.sampling == SamplingScheme::complete) {
    if (m != 0 && m != cells) throw std::invalid_argument("generate_synthetic: complete sampling forces M = n*T");
    m = cells;
  } else {
    if (m < 1) throw std::invalid_argument("generate_synthetic: M must be >= 1");
    if (cfg.sampling == SamplingScheme::without_replacement && m > cells)
      throw std::invalid_argument("generate_synthetic: M > n*T under without-replacement sampling");
  }

  Rng rng(cfg.seed);

  Vec spectrum = cfg.factor_scale.size() > 0 ? cfg.factor_scale : default_spectrum(cfg.n, cfg.T, cfg.r);
  if (spectrum.size() != cfg.r) throw std::invalid_argument("generate_synthetic: factor_scale length != r");
  for (Index a = 0; a + 1 < cfg.r; ++a)
    if (spectrum[a] < spectrum[a + 1]) throw std::invalid_argument("generate_synthetic: spectrum must be non-increasing");
  if (!(spectrum[cfg.r - 1] > 0.0)) throw std::invalid_argument("generate_synthetic: spectrum must be positive");

  GroundTruth truth;
  truth.link = cfg.link;
  truth.sigma = cfg.noise == NoiseKind::none ? 0.0 : cfg.sigma;
  truth.sigma_star = spectrum;

  const Mat u = random_orthonormal(cfg.n, cfg.r, rng);
  const Mat v = random_orthonormal(cfg.T, cfg.r, rng);
  const Vec root = spectrum.cwiseSqrt();
  truth.z_star.n = cfg.n;
  truth.z_star.T = cfg.T;
  truth.z_star.r = cfg.r;
  truth.z_star.z.resize(cfg.n + cfg.T, cfg.r);
  truth.z_star.z.topRows(cfg.n) = u * root.asDiagonal();
  truth.z_star.z.bottomRows(cfg.T) = v * root.asDiagonal();

  ObservationSet obs;
  obs.n = cfg.n;
  obs.T = cfg.T;
  obs.i.resize(m);
  obs.t.resize(m);
  obs.y.resize(m);

  switch (cfg.sampling) {
    case SamplingScheme::with_replacement:
      for (Index k = 0; k < m; ++k) {
        obs.i[k] = static_cast<int>(rng.uniform_int(cfg.n));
        obs.t[k] = static_cast<int>(rng.uniform_int(cfg.T));
      }
      break;
    case SamplingScheme::without_replacement: {
      std::vector<Index> cells_flat(cells);
      std::iota(cells_flat.begin(), cells_flat.end(), Index{0});
      for (Index k = 0; k < m; ++k) {
        const Index pick = k + rng.uniform_int(cells - k);
        std::swap(cells_flat[k], cells_flat[pick]);
        obs.i[k] = static_cast<int>(cells_flat[k] / cfg.T);
        obs.t[k] = static_cast<int>(cells_flat[k] % cfg.T);
      }
      break;
    }
    case SamplingScheme::complete: {
      Index k = 0;
      for (Index a = 0; a < cfg.n; ++a)
        for (Index b = 0; b < cfg.T; ++b, ++k) {
          obs.i[k] = static_cast<int>(a);
          obs.t[k] = static_cast<int>(b);
        }
      break;
    }
  }

  const double bound = truth.sigma * std::sqrt(3.0);
  for (Index k = 0; k < m; ++k) {
    const double x = sample_inner_product(truth.z_star, obs.i[k], obs.t[k]);
    double noise = 0.0;
    if (cfg.noise == NoiseKind::gaussian && truth.sigma > 0.0) noise = truth.sigma * rng.normal();
    else if (cfg.noise == NoiseKind::subgaussian_bounded && truth.sigma > 0.0) noise = rng.uniform(-bound, bound);
    obs.y[k] = link_eval(truth.link, x) + noise;
  }

  return {std::move(obs), std::move(truth)};
}

Mat zero_filled_matrix(const ObservationSet& obs, bool rescale) {
  Mat sum = Mat::Zero(obs.n, obs.T);
  Mat count = Mat::Zero(obs.n, obs.T);
  for (Index k = 0; k < obs.M(); ++k) {
    sum(obs.i[k], obs.t[k]) += obs.y[k];
    count(obs.i[k], obs.t[k]) += 1.0;
  }
  const double scale = rescale
      ? static_cast<double>(obs.n) * static_cast<double>(obs.T) / static_cast<double>(obs.M())
      : 1.0;
  Mat out = Mat::Zero(obs.n, obs.T);
  for (Index a = 0; a < obs.n; ++a)
    for (Index b = 0; b < obs.T; ++b)
      if (count(a, b) > 0.0) out(a, b) = scale * sum(a, b) / count(a, b);
  return out;
}

}  // namespace nlfm
