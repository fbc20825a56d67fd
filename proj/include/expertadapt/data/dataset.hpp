#pragma once

#include <algorithm>
#include <compare>
#include <map>
#include <set>
#include <vector>

#include "expertadapt/data/grid.hpp"

namespace expertadapt::data {

/// Identity of an annotating expert. In the reference dataset ids 1..5 are
/// annotation experts and 6, 7 are the new experts the model adapts to.
struct ExpertId {
  int value = 0;

  ExpertId() = default;
  explicit ExpertId(int v) : value(v) {
    if (v < 1) throw DataError(detail::strprintf("expert id must be >= 1, got %d", v));
  }

  auto operator<=>(const ExpertId&) const = default;
};

/// One image together with the mask each expert drew for it.
struct AnnotatedCase {
  int case_index = 0;  // 1-based, unique within a dataset
  ImageGrid image;
  std::map<ExpertId, BinaryMask> masks;

  const BinaryMask& mask(ExpertId expert) const {
    auto it = masks.find(expert);
    if (it == masks.end())
      throw DataError(detail::strprintf("case %d: no mask for expert %d", case_index, expert.value));
    return it->second;
  }

  void validate() const {
    if (case_index < 1) throw DataError("case_index must be >= 1");
    image.validate();
    for (const auto& [expert, mask] : masks) {
      if (mask.height() != image.height() || mask.width() != image.width())
        throw DataError(detail::strprintf(
            "case %d: mask of expert %d has shape %dx%d, image is %dx%d", case_index,
            expert.value, mask.height(), mask.width(), image.height(), image.width()));
      mask.validate();
    }
  }
};

/// A dataset in which every case carries one mask per roster expert.
/// Immutable after construction; operations below return copies.
struct MultiExpertDataset {
  std::vector<AnnotatedCase> cases;
  std::set<ExpertId> expert_roster;
  PixelSpacing spacing;

  int size() const { return static_cast<int>(cases.size()); }

  const AnnotatedCase& case_by_index(int case_index) const {
    for (const auto& c : cases)
      if (c.case_index == case_index) return c;
    throw DataError(detail::strprintf("unknown case index %d", case_index));
  }

  bool has_case(int case_index) const {
    return std::any_of(cases.begin(), cases.end(),
                       [&](const AnnotatedCase& c) { return c.case_index == case_index; });
  }

  void validate() const {
    std::set<int> seen;
    for (const auto& c : cases) {
      c.validate();
      if (!seen.insert(c.case_index).second)
        throw DataError(detail::strprintf("duplicate case index %d", c.case_index));
      for (ExpertId expert : expert_roster)
        if (!c.masks.count(expert))
          throw DataError(detail::strprintf("case %d: missing mask for expert %d",
                                            c.case_index, expert.value));
    }
  }
};

/// Ordered, duplicate-free subset of experts used jointly in one training run.
struct ExpertCombination {
  std::vector<ExpertId> members;

  ExpertCombination() = default;
  explicit ExpertCombination(std::vector<ExpertId> m) : members(std::move(m)) { validate(); }

  int size() const { return static_cast<int>(members.size()); }

  void validate() const {
    if (members.empty()) throw DataError("expert combination must be non-empty");
    for (size_t i = 1; i < members.size(); ++i)
      if (!(members[i - 1] < members[i]))
        throw DataError("expert combination must be strictly increasing");
  }

  bool operator==(const ExpertCombination&) const = default;
};

/// Copy of `dataset` containing only the named cases (in the given order)
/// and only the masks of `combo` members.
inline MultiExpertDataset restrict(const MultiExpertDataset& dataset,
                                   const ExpertCombination& combo,
                                   const std::vector<int>& case_indices) {
  combo.validate();
  for (ExpertId expert : combo.members)
    if (!dataset.expert_roster.count(expert))
      throw DataError(detail::strprintf("unknown expert %d in restriction", expert.value));

  MultiExpertDataset out;
  out.spacing = dataset.spacing;
  out.expert_roster.insert(combo.members.begin(), combo.members.end());
  out.cases.reserve(case_indices.size());
  for (int idx : case_indices) {
    const AnnotatedCase& src = dataset.case_by_index(idx);  // throws on unknown index
    AnnotatedCase dst;
    dst.case_index = src.case_index;
    dst.image = src.image;
    for (ExpertId expert : combo.members) dst.masks.emplace(expert, src.mask(expert));
    out.cases.push_back(std::move(dst));
  }
  return out;
}

}  // namespace expertadapt::data
