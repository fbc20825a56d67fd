#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "expertadapt/core/rng.hpp"
#include "expertadapt/metrics/seg_metrics.hpp"

using namespace expertadapt;
using data::BinaryMask;
using data::PixelSpacing;

namespace {

BinaryMask rect(int h, int w, int r0, int c0, int r1, int c1) {
  BinaryMask m(h, w, 0);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) m.at(r, c) = 1;
  return m;
}

BinaryMask random_mask(Rng& rng, int h, int w, double density) {
  BinaryMask m(h, w, 0);
  for (auto& p : m.pixels()) p = rng.uniform() < density ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("dice equals the pixel-count formula") {
  const BinaryMask a = rect(10, 10, 2, 2, 5, 5);  // 16 px
  const BinaryMask b = rect(10, 10, 4, 4, 7, 7);  // 16 px, overlap 2x2
  REQUIRE(metrics::dice_score(a, b) == 2.0 * 4.0 / (16.0 + 16.0));
  REQUIRE(metrics::dice_score(a, a) == 1.0);
}

TEST_CASE("dice of two empty masks is perfect agreement") {
  const BinaryMask e1(6, 6, 0), e2(6, 6, 0);
  REQUIRE(metrics::dice_score(e1, e2) == 1.0);
  const BinaryMask full = rect(6, 6, 0, 0, 5, 5);
  REQUIRE(metrics::dice_score(e1, full) == 0.0);
}

TEST_CASE("surface pixels are foreground with a 4-neighbor background") {
  const BinaryMask solid = rect(8, 8, 2, 2, 5, 5);  // 4x4 block
  const auto surf = metrics::surface_pixels(solid);
  REQUIRE(surf.size() == 12);  // 16 px minus the 2x2 interior
  // A full-grid mask is boundary exactly on the image border; the 2x2
  // interior of a 4x4 grid has foreground on all four sides.
  const BinaryMask full = rect(4, 4, 0, 0, 3, 3);
  REQUIRE(metrics::surface_pixels(full).size() == 12);
}

TEST_CASE("identical masks have zero surface distances") {
  const BinaryMask a = rect(9, 9, 3, 2, 6, 6);
  const auto sd = metrics::surface_distances(a, a);
  REQUIRE(sd.defined);
  REQUIRE(sd.assd == 0.0);
  REQUIRE(sd.hd95 == 0.0);
}

TEST_CASE("known shifted squares give hand-computed distances") {
  // Two 1-pixel points at distance 3 along a row.
  BinaryMask a(7, 7, 0), b(7, 7, 0);
  a.at(3, 1) = 1;
  b.at(3, 4) = 1;
  const auto sd = metrics::surface_distances(a, b);
  REQUIRE(sd.defined);
  REQUIRE(sd.assd == Catch::Approx(3.0));
  REQUIRE(sd.hd95 == Catch::Approx(3.0));
}

TEST_CASE("spacing scales physical distances") {
  BinaryMask a(6, 6, 0), b(6, 6, 0);
  a.at(1, 1) = 1;
  b.at(4, 1) = 1;  // 3 rows apart
  const PixelSpacing sp{2.0, 1.0};
  REQUIRE(metrics::assd(a, b, sp) == Catch::Approx(6.0));
  REQUIRE(metrics::hd95(a, b, sp) == Catch::Approx(6.0));
}

TEST_CASE("empty mask flags the result instead of going infinite") {
  const BinaryMask empty(6, 6, 0);
  const BinaryMask a = rect(6, 6, 1, 1, 3, 3);
  const auto sd = metrics::surface_distances(a, empty);
  REQUIRE(!sd.defined);
  REQUIRE(std::isfinite(sd.assd));
  REQUIRE(std::isfinite(sd.hd95));
  REQUIRE_THROWS_AS(metrics::assd(a, empty), NumericError);
  REQUIRE_THROWS_AS(metrics::hd95(a, empty), NumericError);
}

TEST_CASE("fast route matches the all-pairs oracle on 50 random pairs") {
  Rng rng(777);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 32, w = 32;
    BinaryMask a = random_mask(rng, h, w, 0.12);
    BinaryMask b = random_mask(rng, h, w, 0.12);
    a.at(static_cast<int>(rng.next_below(h)), static_cast<int>(rng.next_below(w))) = 1;
    b.at(static_cast<int>(rng.next_below(h)), static_cast<int>(rng.next_below(w))) = 1;
    const PixelSpacing sp{trial % 2 ? 1.0 : 1.5, trial % 3 ? 1.0 : 0.75};

    const auto fast = metrics::surface_distances(a, b, sp);
    const auto oracle = metrics::reference::surface_distances(a, b, sp);
    REQUIRE(fast.defined == oracle.defined);
    REQUIRE(fast.assd == Catch::Approx(oracle.assd).margin(1e-9));
    REQUIRE(fast.hd95 == Catch::Approx(oracle.hd95).margin(1e-9));
  }
}

TEST_CASE("percentile interpolates linearly") {
  std::vector<double> v{4.0, 1.0, 3.0, 2.0};  // sorted: 1 2 3 4
  REQUIRE(metrics::detail::percentile(v, 0.5) == Catch::Approx(2.5));
  std::vector<double> w{10.0};
  REQUIRE(metrics::detail::percentile(w, 0.95) == Catch::Approx(10.0));
  std::vector<double> x{0.0, 100.0};
  REQUIRE(metrics::detail::percentile(x, 0.95) == Catch::Approx(95.0));
}

TEST_CASE("hd95 clips outliers that the maximum would keep") {
  // 15 boundary points at distance 1 plus one far outlier: the 95th
  // percentile of the 16 directed distances lands between the two, so the
  // outlier is damped but not erased.
  BinaryMask a(60, 60, 0), b(60, 60, 0);
  for (int c = 5; c < 20; ++c) {
    a.at(5, c) = 1;
    b.at(6, c) = 1;  // distance 1 vertically
  }
  a.at(50, 5) = 1;  // nearest b-point is far away
  const auto sd = metrics::surface_distances(a, b);
  REQUIRE(sd.defined);
  REQUIRE(sd.hd95 < 50.0);
  REQUIRE(sd.hd95 > 1.0);
}

TEST_CASE("evaluate_case bundles all three metrics") {
  const BinaryMask truth = rect(12, 12, 3, 3, 8, 8);
  const BinaryMask pred = rect(12, 12, 3, 3, 8, 7);  // one column short
  const auto m = metrics::evaluate_case(pred, truth, {});
  REQUIRE(m.surface_defined);
  REQUIRE(m.dice > 0.8);
  REQUIRE(m.dice < 1.0);
  REQUIRE(m.assd > 0.0);
  REQUIRE(m.hd95 >= m.assd);
}

TEST_CASE("surface distances are symmetric") {
  Rng rng(31);
  const BinaryMask a = random_mask(rng, 20, 20, 0.2);
  const BinaryMask b = random_mask(rng, 20, 20, 0.2);
  if (!a.is_empty_mask() && !b.is_empty_mask()) {
    const auto ab = metrics::surface_distances(a, b);
    const auto ba = metrics::surface_distances(b, a);
    REQUIRE(ab.assd == Catch::Approx(ba.assd).margin(1e-12));
    REQUIRE(ab.hd95 == Catch::Approx(ba.hd95).margin(1e-12));
  }
}
