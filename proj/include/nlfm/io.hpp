#pragma once

#include "nlfm/kernel.hpp"
#include "nlfm/types.hpp"

#include <string>

namespace nlfm {

/// Observation CSV: a "# n=<n> T=<T>" comment, an "i,t,y" header, then one
/// sample per row in sample order.
void save_observations(const ObservationSet& obs, const std::string& path);
ObservationSet load_observations(const std::string& path);

/// Factor CSV: a "# n=<n> T=<T> r=<r>" comment, then one row of r values per
/// stacked row of Z.
void save_factors(const FactorMatrix& z, const std::string& path);
FactorMatrix load_factors(const std::string& path);

/// Link JSON: {"kernel": {"family", "bandwidth"}, "offset", "centers",
/// "coeffs"} for a dictionary, {"analytic": name} for a closed-form link.
void save_link(const Link& phi, const std::string& path);
Link load_link(const std::string& path);

}  // namespace nlfm
