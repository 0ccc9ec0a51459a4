#pragma once

#include "nlfm/kernel.hpp"
#include "nlfm/types.hpp"

#include <cstdint>
#include <utility>

namespace nlfm {

enum class SamplingScheme { with_replacement, without_replacement, complete };
enum class NoiseKind { none, gaussian, subgaussian_bounded };

struct SyntheticConfig {
  Index n = 0;
  Index T = 0;
  Index r = 1;
  Index M = 0;  // ignored (forced to n*T) under complete sampling; 0 means n*T
  SamplingScheme sampling = SamplingScheme::with_replacement;
  NoiseKind noise = NoiseKind::none;
  double sigma = 0.0;
  AnalyticLink link = AnalyticLink::identity;
  Vec factor_scale;  // requested spectrum of X*; empty selects the default
  std::uint64_t seed = 0;
};

/// Ground truth of a generated instance: Z* = [U sqrt(S); V sqrt(S)] with
/// orthonormal U, V and the requested spectrum S, plus the true link and
/// noise level. kappa and mu are derived quantities.
struct GroundTruth {
  FactorMatrix z_star;
  Link link = AnalyticLink::identity;
  double sigma = 0.0;
  Vec sigma_star;  // spectrum of X*, descending

  double kappa() const { return sigma_star[0] / sigma_star[sigma_star.size() - 1]; }
  double mu() const { return incoherence(z_star.z); }
};

std::pair<ObservationSet, GroundTruth> generate_synthetic(const SyntheticConfig& cfg);

/// n x T matrix with observed cells filled by the mean of their samples and
/// zeros elsewhere; rescale multiplies observed entries by nT/M.
Mat zero_filled_matrix(const ObservationSet& obs, bool rescale);

}  // namespace nlfm
