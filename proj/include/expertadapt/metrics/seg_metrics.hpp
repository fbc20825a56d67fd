#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "expertadapt/core/edt.hpp"
#include "expertadapt/data/grid.hpp"

namespace expertadapt::metrics {

using data::BinaryMask;
using data::PixelSpacing;

struct SurfacePoint {
  int r = 0;
  int c = 0;
};

/// Foreground pixels with at least one background 4-neighbor; positions
/// outside the grid count as background, so blobs touching the border
/// contribute their border pixels.
inline std::vector<SurfacePoint> surface_pixels(const BinaryMask& mask) {
  std::vector<SurfacePoint> out;
  const int h = mask.height(), w = mask.width();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      bool boundary = r == 0 || c == 0 || r == h - 1 || c == w - 1 || !mask.at(r - 1, c) ||
                      !mask.at(r + 1, c) || !mask.at(r, c - 1) || !mask.at(r, c + 1);
      if (boundary) out.push_back({r, c});
    }
  }
  return out;
}

/// Dice overlap 2|A∩B| / (|A|+|B|); two empty masks agree perfectly (1.0).
inline double dice_score(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw DataError("dice_score: mask shapes differ");
  long inter = 0, total = 0;
  for (size_t i = 0; i < a.pixels().size(); ++i) {
    inter += a.pixels()[i] & b.pixels()[i];
    total += a.pixels()[i] + b.pixels()[i];
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

/// Average symmetric surface distance and 95th-percentile Hausdorff distance
/// in one result; `defined` is false when either mask has no foreground, in
/// which case the distance fields are meaningless and must not be averaged.
struct SurfaceDistanceResult {
  double assd = 0.0;
  double hd95 = 0.0;
  bool defined = false;
};

namespace detail {

/// Linear-interpolation percentile at rank h = q*(n-1) of ascending `v`.
inline double percentile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v[lo];
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline SurfaceDistanceResult assemble(std::vector<double> d_ab, std::vector<double> d_ba) {
  SurfaceDistanceResult out;
  out.defined = true;
  double sum = 0.0;
  for (double d : d_ab) sum += d;
  for (double d : d_ba) sum += d;
  out.assd = sum / static_cast<double>(d_ab.size() + d_ba.size());
  out.hd95 = std::max(percentile(d_ab, 0.95), percentile(d_ba, 0.95));
  return out;
}

}  // namespace detail

/// Distance-transform route: one exact EDT per direction, then the directed
/// distances are read off at the opposing surface pixels.
inline SurfaceDistanceResult surface_distances(const BinaryMask& a, const BinaryMask& b,
                                               const PixelSpacing& spacing = {}) {
  if (!a.same_shape(b)) throw DataError("surface_distances: mask shapes differ");
  if (a.is_empty_mask() || b.is_empty_mask()) return {};

  const int h = a.height(), w = a.width();
  auto surf_a = surface_pixels(a);
  auto surf_b = surface_pixels(b);

  auto directed = [&](const std::vector<SurfacePoint>& from,
                      const std::vector<SurfacePoint>& to) {
    std::vector<std::uint8_t> site(static_cast<size_t>(h) * w, 0);
    for (const auto& p : to) site[static_cast<size_t>(p.r) * w + p.c] = 1;
    std::vector<double> d2 = squared_edt(site.data(), h, w, spacing.row, spacing.col);
    std::vector<double> out(from.size());
    for (size_t i = 0; i < from.size(); ++i)
      out[i] = std::sqrt(d2[static_cast<size_t>(from[i].r) * w + from[i].c]);
    return out;
  };

  return detail::assemble(directed(surf_a, surf_b), directed(surf_b, surf_a));
}

inline double assd(const BinaryMask& a, const BinaryMask& b, const PixelSpacing& spacing = {}) {
  SurfaceDistanceResult r = surface_distances(a, b, spacing);
  if (!r.defined) throw NumericError("assd undefined: a mask has no foreground");
  return r.assd;
}

inline double hd95(const BinaryMask& a, const BinaryMask& b, const PixelSpacing& spacing = {}) {
  SurfaceDistanceResult r = surface_distances(a, b, spacing);
  if (!r.defined) throw NumericError("hd95 undefined: a mask has no foreground");
  return r.hd95;
}

/// All per-case quantities for one (prediction, ground truth) pair.
struct MetricTriple {
  double dice = 0.0;
  double assd = 0.0;
  double hd95 = 0.0;
  bool surface_defined = false;
};

inline MetricTriple evaluate_case(const BinaryMask& prediction, const BinaryMask& truth,
                                  const PixelSpacing& spacing = {}) {
  MetricTriple out;
  out.dice = dice_score(prediction, truth);
  SurfaceDistanceResult sd = surface_distances(prediction, truth, spacing);
  out.surface_defined = sd.defined;
  out.assd = sd.assd;
  out.hd95 = sd.hd95;
  return out;
}

/// Independent all-pairs route for cross-checking the transform-based one.
namespace reference {

inline SurfaceDistanceResult surface_distances(const BinaryMask& a, const BinaryMask& b,
                                               const PixelSpacing& spacing = {}) {
  if (!a.same_shape(b)) throw DataError("surface_distances: mask shapes differ");
  if (a.is_empty_mask() || b.is_empty_mask()) return {};

  auto surf_a = surface_pixels(a);
  auto surf_b = surface_pixels(b);

  auto directed = [&](const std::vector<SurfacePoint>& from,
                      const std::vector<SurfacePoint>& to) {
    std::vector<double> out(from.size());
    for (size_t i = 0; i < from.size(); ++i) {
      double best = kEdtNoSite;
      for (const auto& q : to) {
        const double dr = (from[i].r - q.r) * spacing.row;
        const double dc = (from[i].c - q.c) * spacing.col;
        best = std::min(best, dr * dr + dc * dc);
      }
      out[i] = std::sqrt(best);
    }
    return out;
  };

  return detail::assemble(directed(surf_a, surf_b), directed(surf_b, surf_a));
}

}  // namespace reference

}  // namespace expertadapt::metrics
