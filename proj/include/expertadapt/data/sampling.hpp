#pragma once

#include <vector>

#include "expertadapt/data/dataset.hpp"

namespace expertadapt::data {

/// Deterministic plan for drawing `count` consecutive cases (with wraparound)
/// out of `cardinality` available ones, beginning at 1-based `start_index`.
struct SamplingPlan {
  int start_index = 1;
  int count = 0;
  int cardinality = 0;

  void validate() const {
    if (cardinality < 1) throw DataError("sampling cardinality must be >= 1");
    if (start_index < 1 || start_index > cardinality)
      throw DataError(detail::strprintf("start index %d out of range [1, %d]", start_index,
                                        cardinality));
    if (count < 1 || count > cardinality)
      throw DataError(detail::strprintf("sample count %d out of range [1, %d]", count,
                                        cardinality));
  }
};

/// The `count` consecutive 1-based indices starting at `plan.start_index`,
/// wrapping past `cardinality` back to 1. Smaller counts with the same start
/// are prefixes of larger ones.
inline std::vector<int> sample_indices(const SamplingPlan& plan) {
  plan.validate();
  std::vector<int> out(static_cast<size_t>(plan.count));
  for (int j = 0; j < plan.count; ++j)
    out[static_cast<size_t>(j)] = (plan.start_index - 1 + j) % plan.cardinality + 1;
  return out;
}

/// Evenly strided start indices for `n_ways` repeated sampling runs:
/// 1, 1+s, 1+2s, ... with s = floor(cardinality / n_ways).
inline std::vector<int> starting_indices(int cardinality, int n_ways) {
  if (cardinality < 1) throw DataError("sampling cardinality must be >= 1");
  if (n_ways < 1) throw DataError("number of sampling ways must be >= 1");
  if (cardinality < n_ways)
    throw DataError(detail::strprintf("cannot derive %d start indices from %d cases", n_ways,
                                      cardinality));
  int stride = cardinality / n_ways;
  std::vector<int> out(static_cast<size_t>(n_ways));
  for (int i = 0; i < n_ways; ++i) out[static_cast<size_t>(i)] = 1 + i * stride;
  return out;
}

/// All size-`k` subsets of `roster` in lexicographic order.
inline std::vector<ExpertCombination> expert_combinations(const std::vector<ExpertId>& roster,
                                                          int k) {
  int n = static_cast<int>(roster.size());
  for (int i = 1; i < n; ++i)
    if (!(roster[static_cast<size_t>(i - 1)] < roster[static_cast<size_t>(i)]))
      throw DataError("expert roster must be strictly increasing");
  if (k < 1 || k > n)
    throw DataError(detail::strprintf("combination size %d out of range [1, %d]", k, n));

  std::vector<ExpertCombination> out;
  std::vector<int> pick(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) pick[static_cast<size_t>(i)] = i;
  while (true) {
    std::vector<ExpertId> members;
    members.reserve(static_cast<size_t>(k));
    for (int i : pick) members.push_back(roster[static_cast<size_t>(i)]);
    out.emplace_back(std::move(members));

    int i = k - 1;
    while (i >= 0 && pick[static_cast<size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++pick[static_cast<size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      pick[static_cast<size_t>(j)] = pick[static_cast<size_t>(j - 1)] + 1;
  }
  return out;
}

}  // namespace expertadapt::data
