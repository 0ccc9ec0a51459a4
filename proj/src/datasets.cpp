#include "nlfm/datasets.hpp"

#include "nlfm/objective.hpp"
#include "nlfm/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace nlfm {

namespace {

struct RawRating {
  std::int64_t user;
  std::int64_t item;
  double value;
};

double parse_number(const std::string& s, Index line_no, const char* what) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{})
    throw std::runtime_error(std::string("load_ratings: malformed ") + what + " at line " +
                             std::to_string(line_no));
  return v;
}

RatingsDataset reindex(const std::vector<RawRating>& raw, Index dropped_users) {
  if (raw.empty()) throw std::runtime_error("load_ratings: empty dataset");
  std::map<std::int64_t, Index> user_map, item_map;
  for (const auto& r : raw) {
    user_map.emplace(r.user, 0);
    item_map.emplace(r.item, 0);
  }
  RatingsDataset ds;
  ds.dropped_users = dropped_users;
  ds.user_ids.reserve(user_map.size());
  for (auto& [orig, dense] : user_map) {
    dense = static_cast<Index>(ds.user_ids.size());
    ds.user_ids.push_back(orig);
  }
  ds.item_ids.reserve(item_map.size());
  for (auto& [orig, dense] : item_map) {
    dense = static_cast<Index>(ds.item_ids.size());
    ds.item_ids.push_back(orig);
  }
  ds.n_users = static_cast<Index>(ds.user_ids.size());
  ds.n_items = static_cast<Index>(ds.item_ids.size());

  // duplicates resolve to the last occurrence
  std::map<std::pair<Index, Index>, double> cells;
  for (const auto& r : raw)
    cells[{user_map[r.user], item_map[r.item]}] = r.value;

  const Index m = static_cast<Index>(cells.size());
  ds.users.resize(m);
  ds.items.resize(m);
  ds.values.resize(m);
  Index k = 0;
  for (const auto& [cell, value] : cells) {
    ds.users[k] = static_cast<int>(cell.first);
    ds.items[k] = static_cast<int>(cell.second);
    ds.values[k] = value;
    ++k;
  }
  return ds;
}

RatingsDataset load_movielens(std::istream& in) {
  std::vector<RawRating> raw;
  std::string line;
  Index line_no = 0;
  bool header_skipped = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!header_skipped) {  // userId,movieId,rating,timestamp
      header_skipped = true;
      continue;
    }
    std::istringstream ss(line);
    std::string user, item, rating;
    if (!std::getline(ss, user, ',') || !std::getline(ss, item, ',') || !std::getline(ss, rating, ','))
      throw std::runtime_error("load_ratings: malformed row at line " + std::to_string(line_no));
    RawRating r;
    r.user = static_cast<std::int64_t>(parse_number(user, line_no, "user id"));
    r.item = static_cast<std::int64_t>(parse_number(item, line_no, "movie id"));
    r.value = parse_number(rating, line_no, "rating");
    raw.push_back(r);
  }
  return reindex(raw, 0);
}

RatingsDataset load_jester(std::istream& in) {
  std::vector<RawRating> raw;
  std::string line;
  Index line_no = 0;
  std::int64_t user = 0;
  Index dropped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    if (!std::getline(ss, field, ','))
      throw std::runtime_error("load_ratings: malformed row at line " + std::to_string(line_no));
    // first field is the user's rating count; ratings follow, 99 = missing
    Index kept = 0;
    for (Index joke = 0; joke < 100; ++joke) {
      if (!std::getline(ss, field, ','))
        throw std::runtime_error("load_ratings: short jester row at line " + std::to_string(line_no));
      const double v = parse_number(field, line_no, "rating");
      if (v == 99.0) continue;
      raw.push_back({user, joke, v});
      ++kept;
    }
    if (kept == 0) ++dropped;
    ++user;
  }
  return reindex(raw, dropped);
}

}  // namespace

RatingsDataset load_ratings(const std::string& path, RatingsFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_ratings: cannot open " + path);
  switch (format) {
    case RatingsFormat::movielens_csv: return load_movielens(in);
    case RatingsFormat::jester_dense: return load_jester(in);
  }
  throw std::invalid_argument("load_ratings: unknown format");
}

std::pair<ObservationSet, ObservationSet> split(const RatingsDataset& ds, const SplitSpec& spec) {
  if (!(spec.holdout_fraction > 0.0) || !(spec.holdout_fraction < 1.0))
    throw std::invalid_argument("split: holdout_fraction must lie in (0, 1)");
  const Index m = ds.size();
  std::vector<char> in_val(m, 0);
  Rng rng(spec.seed);

  if (spec.strategy == SplitSpec::Strategy::row_stratified) {
    // samples are sorted by user, so each user's ratings are contiguous
    Index begin = 0;
    while (begin < m) {
      Index end = begin;
      while (end < m && ds.users[end] == ds.users[begin]) ++end;
      const Index count = end - begin;
      const Index take = static_cast<Index>(std::floor(spec.holdout_fraction * static_cast<double>(count)));
      std::vector<Index> idx(count);
      for (Index a = 0; a < count; ++a) idx[a] = begin + a;
      for (Index a = 0; a < take; ++a) {
        const Index pick = a + rng.uniform_int(count - a);
        std::swap(idx[a], idx[pick]);
        in_val[idx[a]] = 1;
      }
      begin = end;
    }
  } else {
    const Index take = static_cast<Index>(std::floor(spec.holdout_fraction * static_cast<double>(m)));
    std::vector<Index> idx(m);
    for (Index a = 0; a < m; ++a) idx[a] = a;
    for (Index a = 0; a < take; ++a) {
      const Index pick = a + rng.uniform_int(m - a);
      std::swap(idx[a], idx[pick]);
      in_val[idx[a]] = 1;
    }
  }

  ObservationSet train, val;
  train.n = val.n = ds.n_users;
  train.T = val.T = ds.n_items;
  const Index n_val = static_cast<Index>(std::count(in_val.begin(), in_val.end(), 1));
  train.i.resize(m - n_val);
  train.t.resize(m - n_val);
  train.y.resize(m - n_val);
  val.i.resize(n_val);
  val.t.resize(n_val);
  val.y.resize(n_val);
  Index a = 0, b = 0;
  for (Index k = 0; k < m; ++k) {
    if (in_val[k]) {
      val.i[b] = ds.users[k];
      val.t[b] = ds.items[k];
      val.y[b] = ds.values[k];
      ++b;
    } else {
      train.i[a] = ds.users[k];
      train.t[a] = ds.items[k];
      train.y[a] = ds.values[k];
      ++a;
    }
  }
  return {std::move(train), std::move(val)};
}

ObservationSet to_observations(const RatingsDataset& ds) {
  ObservationSet obs;
  obs.n = ds.n_users;
  obs.T = ds.n_items;
  obs.i = ds.users;
  obs.t = ds.items;
  obs.y = ds.values;
  return obs;
}

double rmse(const ObservationSet& obs, const FactorMatrix& z, const Link& phi) {
  auto [x, g] = residuals(obs, z, phi);
  return std::sqrt(mean_square(g));
}

}  // namespace nlfm
