#include <doctest.h>

#include "fsvos/metrics.hpp"
#include "fsvos/rng.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace fsvos;

namespace {

MaskGrid block(int w, int h, int x0, int y0, int bw, int bh) {
  MaskGrid m = MaskGrid::zeros(w, h);
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x) m.v[(size_t)y * w + x] = 1;
  return m;
}

MaskGrid random_mask(int w, int h, Rng& rng, double p = 0.5) {
  MaskGrid m = MaskGrid::zeros(w, h);
  for (auto& v : m.v) v = rng.coin(p) ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("region similarity hand values") {
  MaskGrid gt = block(10, 10, 1, 1, 8, 8);
  MaskGrid pred = block(10, 10, 2, 2, 6, 6);
  CHECK(region_j(pred, gt) == doctest::Approx(0.5625).epsilon(1e-12));
  CHECK(region_j(gt, gt) == 1.0);
  CHECK(region_j(block(10, 10, 0, 0, 2, 2), block(10, 10, 5, 5, 2, 2)) == 0.0);
  CHECK(region_j(MaskGrid::zeros(5, 5), MaskGrid::zeros(5, 5)) == 1.0);
  // symmetry on random pairs
  Rng rng(101);
  for (int i = 0; i < 20; ++i) {
    MaskGrid a = random_mask(4, 4, rng), b = random_mask(4, 4, rng);
    CHECK(region_j(a, b) == region_j(b, a));
  }
}

TEST_CASE("contour similarity hand values") {
  MaskGrid a = block(12, 12, 2, 2, 8, 8);
  MaskGrid b = block(12, 12, 3, 2, 8, 8);  // same square shifted right by 1
  CHECK(contour_f(a, a, 1.0) == 1.0);
  CHECK(contour_f(b, a, 1.0) == 1.0);  // all boundary pixels within tolerance 1
  // tolerance 0 only matches coincident pixels: top and bottom rows overlap
  // on 7 pixels each, so 14 of the 28 boundary pixels pair up
  CHECK(contour_f(b, a, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(contour_f(MaskGrid::zeros(6, 6), MaskGrid::zeros(6, 6), 1.0) == 1.0);
  CHECK(contour_f(MaskGrid::zeros(6, 6), block(6, 6, 1, 1, 3, 3), 1.0) == 0.0);
  CHECK(contour_f(block(6, 6, 1, 1, 3, 3), MaskGrid::zeros(6, 6), 1.0) == 0.0);
}

TEST_CASE("interior pixels are not boundary") {
  MaskGrid m = block(8, 8, 1, 1, 5, 5);
  auto bp = boundary_pixels(m);
  CHECK(bp.size() == 16);  // 5x5 block: perimeter only
  for (auto [x, y] : bp) {
    bool edge = x == 1 || x == 5 || y == 1 || y == 5;
    CHECK(edge);
  }
  // mask touching the image border is still bounded by the outside
  MaskGrid full = block(4, 4, 0, 0, 4, 4);
  CHECK(boundary_pixels(full).size() == 12);
}

TEST_CASE("video consistency hand case over two windows") {
  // 8 frames, n=7 -> windows [0..6] and [1..7]; gt static 2-pixel bar
  int W = 4, H = 1;
  std::vector<MaskGrid> gts(8, block(W, H, 0, 0, 2, 1));
  std::vector<MaskGrid> preds = gts;
  CHECK(video_consistency(preds, gts, 7) == 1.0);

  // frame 0 prediction loses one pixel: window 1 intact
  preds[0] = block(W, H, 0, 0, 1, 1);
  CHECK(video_consistency(preds, gts, 7) == doctest::Approx(0.75));  // (0.5+1)/2

  // one empty prediction annihilates both windows
  preds = gts;
  preds[4] = MaskGrid::zeros(W, H);
  CHECK(video_consistency(preds, gts, 7) == 0.0);
}

TEST_CASE("video consistency skips empty-gt windows and short videos") {
  int W = 3, H = 1;
  std::vector<MaskGrid> gts(3, MaskGrid::zeros(W, H));
  std::vector<MaskGrid> preds(3, block(W, H, 0, 0, 2, 1));
  CHECK(video_consistency(preds, gts, 7) == 1.0);  // nothing persistent: vacuous

  // video shorter than the window: single whole-video window
  std::vector<MaskGrid> g2(3, block(W, H, 0, 0, 2, 1));
  std::vector<MaskGrid> p2 = g2;
  p2[1] = block(W, H, 0, 0, 1, 1);
  CHECK(video_consistency(p2, g2, 7) == 0.5);
}

TEST_CASE("metrics agree with brute-force oracles on random small grids") {
  Rng rng(102);
  for (int it = 0; it < 60; ++it) {
    MaskGrid a = random_mask(4, 4, rng, 0.4);
    MaskGrid b = random_mask(4, 4, rng, 0.4);
    CHECK(std::abs(region_j(a, b) - oracle::region_j(a, b)) <= 1e-12);
    for (double tol : {0.0, 1.0, 1.5})
      CHECK(std::abs(contour_f(a, b, tol) - oracle::contour_f(a, b, tol)) <= 1e-12);
  }
  for (int it = 0; it < 15; ++it) {
    int n = 3 + (int)rng.randint(8);
    std::vector<MaskGrid> preds, gts;
    for (int i = 0; i < n; ++i) {
      preds.push_back(random_mask(3, 3, rng, 0.6));
      gts.push_back(random_mask(3, 3, rng, 0.6));
    }
    for (int win : {2, 7})
      CHECK(std::abs(video_consistency(preds, gts, win) -
                     oracle::video_consistency(preds, gts, win)) <= 1e-12);
  }
}

TEST_CASE("score_video aggregates per-frame and consistency scores") {
  Rng rng(103);
  std::vector<MaskGrid> preds, gts;
  for (int i = 0; i < 5; ++i) {
    gts.push_back(block(8, 8, 1, 1, 4, 4));
    preds.push_back(i == 0 ? block(8, 8, 1, 1, 4, 3) : block(8, 8, 1, 1, 4, 4));
  }
  VideoScore s = score_video(preds, gts, 1.0, 7);
  CHECK(s.frames == 5);
  double j0 = region_j(preds[0], gts[0]);
  CHECK(s.j == doctest::Approx((j0 + 4.0) / 5.0).epsilon(1e-12));
  CHECK(s.f > 0.9);
  CHECK(s.vc7 == doctest::Approx(0.75));  // 12/16 surviving persistent pixels
  CHECK(s.j >= 0.0);
  CHECK(s.j <= 1.0);
  CHECK_THROWS(score_video({}, {}, 1.0, 7));
}
