#pragma once

#include "nlfm/kernel.hpp"
#include "nlfm/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nlfm {

/// Ratings with densely reindexed user/item ids; original ids kept for
/// reporting. Duplicate (user, item) pairs resolve to the last occurrence.
struct RatingsDataset {
  std::vector<std::int64_t> user_ids;  // dense id -> original id
  std::vector<std::int64_t> item_ids;
  IndexVec users;
  IndexVec items;
  Vec values;
  Index n_users = 0;
  Index n_items = 0;
  Index dropped_users = 0;  // jester rows with no valid rating

  Index size() const { return values.size(); }
};

enum class RatingsFormat { movielens_csv, jester_dense };

RatingsDataset load_ratings(const std::string& path, RatingsFormat format);

struct SplitSpec {
  double holdout_fraction = 0.1;
  enum class Strategy { row_stratified, uniform } strategy = Strategy::row_stratified;
  std::uint64_t seed = 0;
};

/// Train/validation split. Row-stratified moves floor(fraction * count)
/// ratings per user to validation, never a user's last rating.
std::pair<ObservationSet, ObservationSet> split(const RatingsDataset& ds, const SplitSpec& spec);

ObservationSet to_observations(const RatingsDataset& ds);

/// sqrt((1/M) sum (y_k - phi(<A_k, ZZ^T>))^2).
double rmse(const ObservationSet& obs, const FactorMatrix& z, const Link& phi);

}  // namespace nlfm
