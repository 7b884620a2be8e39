#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"

namespace cfdx {

/// Largest-remainder apportionment of round(train_frac * N) train slots across
/// strata. Ties among equal remainders are broken by a seeded permutation.
/// Strata with at least two members keep one member on each side; the total
/// is restored afterwards whenever the clamped strata leave room for it.
inline std::vector<std::size_t> apportion(std::span<const std::size_t> counts, double train_frac,
                                          std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    fail(ErrorCode::InvalidArgument, "train fraction must lie in (0, 1)");
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(total)));

  const std::size_t s = counts.size();
  std::vector<double> quota(s);
  std::vector<std::size_t> alloc(s);
  std::vector<double> remainder(s);
  for (std::size_t i = 0; i < s; ++i) {
    quota[i] = train_frac * static_cast<double>(counts[i]);
    double whole = std::round(quota[i]);
    if (std::abs(quota[i] - whole) < 1e-9) quota[i] = whole;  // snap representation noise
    alloc[i] = static_cast<std::size_t>(std::floor(quota[i]));
    remainder[i] = quota[i] - std::floor(quota[i]);
  }

  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> tie_key(s);
  for (auto& k : tie_key) k = rng();
  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(remainder[a] - remainder[b]) > 1e-9) return remainder[a] > remainder[b];
    return tie_key[a] < tie_key[b];
  });
  std::size_t assigned = std::accumulate(alloc.begin(), alloc.end(), std::size_t{0});
  for (std::size_t k = 0; assigned < target && k < s; ++k) {
    if (alloc[order[k]] < counts[order[k]]) {
      ++alloc[order[k]];
      ++assigned;
    }
  }

  auto lo = [&](std::size_t i) { return counts[i] >= 2 ? std::size_t{1} : std::size_t{0}; };
  auto hi = [&](std::size_t i) { return counts[i] >= 2 ? counts[i] - 1 : counts[i]; };
  for (std::size_t i = 0; i < s; ++i) alloc[i] = std::clamp(alloc[i], lo(i), hi(i));

  auto sum = [&] { return std::accumulate(alloc.begin(), alloc.end(), std::size_t{0}); };
  while (sum() > target) {
    std::size_t best = s;
    for (std::size_t i : order)
      if (alloc[i] > lo(i) && (best == s || alloc[i] - quota[i] > alloc[best] - quota[best])) best = i;
    if (best == s) break;
    --alloc[best];
  }
  while (sum() < target) {
    std::size_t best = s;
    for (std::size_t i : order)
      if (alloc[i] < hi(i) && (best == s || quota[i] - alloc[i] > quota[best] - alloc[best])) best = i;
    if (best == s) break;
    ++alloc[best];
  }
  return alloc;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Splits each stratum (a list of row indices) with the apportioned counts.
/// Members are shuffled with the seed; output indices are sorted.
inline SplitIndices split_strata(const std::vector<std::vector<std::size_t>>& strata, double train_frac,
                                 std::uint64_t seed) {
  std::vector<std::size_t> counts;
  for (const auto& s : strata) counts.push_back(s.size());
  const auto alloc = apportion(counts, train_frac, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  SplitIndices out;
  for (std::size_t k = 0; k < strata.size(); ++k) {
    auto members = strata[k];
    std::shuffle(members.begin(), members.end(), rng);
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(alloc[k]));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(alloc[k]), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline SplitIndices stratified_split_indices(const Dataset& data, double train_frac, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> strata(data.schema().class_count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    if (!r.label) fail(ErrorCode::UnknownLabel, "cannot stratify an UNKNOWN-labelled record", r.id);
    strata[*r.label].push_back(i);
  }
  for (std::size_t c = 0; c < strata.size(); ++c) {
    if (!strata[c].empty() && strata[c].size() < 2)
      fail(ErrorCode::ClassTooSmall, "class needs at least two records to split",
           data.schema().class_name(c));
  }
  return split_strata(strata, train_frac, seed);
}

inline std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double train_frac, std::uint64_t seed) {
  auto idx = stratified_split_indices(data, train_frac, seed);
  return {data.subset(idx.train), data.subset(idx.test)};
}

}  // namespace cfdx
