#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/rng.hpp"
#include "vib/eval/manifest.hpp"
#include "vib/training/config.hpp"

namespace vib::training {

/// Per-class quotas for keeping `pct` percent of `class_sizes`. Every
/// non-empty class keeps at least one example; the remaining budget of
/// round(pct% * N) goes out by largest remainder, so the total is
/// max(target, sum of the per-class floors).
inline std::vector<std::size_t> apportion(const std::vector<std::size_t>& class_sizes,
                                          int pct) {
  const std::size_t n = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * pct / 100.0));
  std::vector<std::size_t> quota(class_sizes.size());
  std::vector<double> rem(class_sizes.size(), -1.0);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    const double exact = static_cast<double>(class_sizes[c]) * pct / 100.0;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    if (quota[c] == 0 && class_sizes[c] > 0) {
      quota[c] = 1;  // already above its exact share
    } else {
      rem[c] = exact - static_cast<double>(quota[c]);
    }
    assigned += quota[c];
  }
  std::vector<std::size_t> order(class_sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    const std::size_t c = order[i];
    if (rem[c] > 0.0 && quota[c] < class_sizes[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  return quota;
}

/// Stratified subsample of the training rows; validation and test rows are
/// kept as they are. The selection depends only on (manifest, pct, seed) and
/// preserves the original row order.
inline eval::Manifest subsample(const eval::Manifest& m, int pct, std::uint64_t seed) {
  if (!is_allowed_pct(pct)) {
    throw UsageError("subsample: pct " + std::to_string(pct) +
                     " not in {5, 10, 30, 50, 100}");
  }
  if (pct == 100) return m;
  std::vector<std::vector<std::size_t>> rows_of(m.class_count);
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i].split == eval::Split::train) rows_of.at(m.rows[i].label).push_back(i);
  }
  std::vector<std::size_t> sizes(m.class_count);
  for (std::size_t c = 0; c < m.class_count; ++c) {
    if (rows_of[c].empty()) {
      throw DataError("subsample: class " + std::to_string(c) + " has no training examples");
    }
    sizes[c] = rows_of[c].size();
  }
  const auto quota = apportion(sizes, pct);
  std::vector<char> keep(m.rows.size(), 0);
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i].split != eval::Split::train) keep[i] = 1;
  }
  for (std::size_t c = 0; c < m.class_count; ++c) {
    auto idx = rows_of[c];
    Rng rng = make_rng(seed, "subsample", c);
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(idx[i - 1], idx[pick(rng)]);
    }
    for (std::size_t k = 0; k < quota[c]; ++k) keep[idx[k]] = 1;
  }
  eval::Manifest out = m;
  out.rows.clear();
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (keep[i]) out.rows.push_back(m.rows[i]);
  }
  return out;
}

}  // namespace vib::training
