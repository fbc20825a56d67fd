#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace expertadapt {

/// Sentinel for "no site reachable"; kept finite so parabola intersections
/// never produce inf - inf.
inline constexpr double kEdtNoSite = 1e30;

namespace detail {

// 1-D squared distance transform under the lower-envelope-of-parabolas
// construction (Felzenszwalb & Huttenlocher). `step` is the physical
// spacing between adjacent samples.
inline void edt_1d(const double* f, int n, double step, double* d,
                   int* hull, double* bound) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  hull[0] = 0;
  bound[0] = -inf;
  bound[1] = inf;
  for (int q = 1; q < n; ++q) {
    const double uq = step * q;
    const double fq = f[q];
    double s;
    for (;;) {
      const int p = hull[k];
      const double up = step * p;
      s = ((fq + uq * uq) - (f[p] + up * up)) / (2.0 * (uq - up));
      if (s <= bound[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    hull[k] = q;
    bound[k] = s;
    bound[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    const double uq = step * q;
    while (bound[k + 1] < uq) ++k;
    const double up = step * hull[k];
    d[q] = (uq - up) * (uq - up) + f[hull[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance transform on a 2-D grid.
/// `site[r*width + c] != 0` marks a site; the result holds, per pixel, the
/// squared distance to the nearest site under the given row/column spacing.
/// Pixels farther than any site (no site at all) hold >= kEdtNoSite.
inline std::vector<double> squared_edt(const std::uint8_t* site, int height, int width,
                                       double spacing_row = 1.0, double spacing_col = 1.0) {
  std::vector<double> dist(static_cast<size_t>(height) * width);
  const int nmax = height > width ? height : width;
  std::vector<double> f(nmax), d(nmax), bound(nmax + 1);
  std::vector<int> hull(nmax);

  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) f[c] = site[r * width + c] ? 0.0 : kEdtNoSite;
    detail::edt_1d(f.data(), width, spacing_col, d.data(), hull.data(), bound.data());
    for (int c = 0; c < width; ++c) dist[r * width + c] = d[c];
  }
  for (int c = 0; c < width; ++c) {
    for (int r = 0; r < height; ++r) f[r] = dist[r * width + c];
    detail::edt_1d(f.data(), height, spacing_row, d.data(), hull.data(), bound.data());
    for (int r = 0; r < height; ++r) dist[r * width + c] = d[r];
  }
  return dist;
}

}  // namespace expertadapt
