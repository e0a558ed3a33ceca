#include <doctest.h>

#include "fsvos/nn.hpp"
#include "fsvos/quality.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <set>

using namespace fsvos;
using testutil::rand_t;

TEST_CASE("mask_iou exact cases") {
  MaskGrid a = MaskGrid::zeros(4, 4), b = MaskGrid::zeros(4, 4);
  CHECK(mask_iou(a, b) == 1.0);  // both empty
  a.v[0] = a.v[1] = 1;
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, b) == 0.0);
  b.v[1] = b.v[2] = 1;
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, b) == mask_iou(b, a));
  MaskGrid c = MaskGrid::zeros(3, 3);
  CHECK_THROWS(mask_iou(a, c));
}

TEST_CASE("morphology primitives behave on a point") {
  MaskGrid m = MaskGrid::zeros(9, 9);
  m.v[4 * 9 + 4] = 1;
  MaskGrid d = dilate_mask(m, 1);
  CHECK(d.count() == 9);  // square window
  MaskGrid back = erode_mask(d, 1);
  CHECK(back.count() == 1);
  CHECK(back.v[4 * 9 + 4] == 1);
  MaskGrid t = translate_mask(m, 2, -1);
  CHECK(t.count() == 1);
  CHECK(t.v[3 * 9 + 6] == 1);
  // translation off the edge clips
  MaskGrid gone = translate_mask(m, 20, 0);
  CHECK(gone.count() == 0);
}

TEST_CASE("corrupt_mask reports the exact IoU and spreads it") {
  Rng rng(81);
  MaskGrid gt = MaskGrid::zeros(48, 48);
  for (int y = 12; y < 36; ++y)
    for (int x = 10; x < 30; ++x) gt.v[(size_t)y * 48 + x] = 1;

  std::set<int> deciles;
  int exact_one = 0;
  for (int i = 0; i < 400; ++i) {
    Corrupted c = corrupt_mask(gt, rng);
    CHECK(c.true_iou == mask_iou(c.mask, gt));  // reported IoU is the real one
    deciles.insert(std::min(9, (int)(c.true_iou * 10)));
    exact_one += c.true_iou == 1.0;
  }
  CHECK(deciles.size() >= 5);  // corruption spectrum is not collapsed
  CHECK(exact_one > 0);        // identity draws exist for the top of the range
}

TEST_CASE("select_reliable is strictly above threshold") {
  std::vector<double> s{0.1, 0.8, 0.80001, 0.95, 0.5};
  auto r = select_reliable(s, 0.8);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == 2);
  CHECK(r[1] == 3);
  CHECK(select_reliable({}, 0.5).empty());
}

TEST_CASE("structural maps match the brute-force oracle") {
  Rng rng(82);
  int M = 6, Ms = 8, C = 5;
  for (int it = 0; it < 25; ++it) {
    Tensor x4 = rand_t({M, C}, rng);
    Tensor xs = rand_t({Ms, C}, rng);
    Eigen::ArrayXd pm(M), sm(Ms);
    for (int i = 0; i < M; ++i) pm[i] = rng.coin(0.5) ? 1.0 : 0.0;
    for (int i = 0; i < Ms; ++i) sm[i] = rng.coin(0.5) ? 1.0 : 0.0;
    Tensor pred = from_array({M, 1}, pm);
    Tensor sup = from_array({Ms, 1}, sm);
    SimilarityMaps maps = structural_maps(x4, xs, pred, sup);
    auto ref = oracle::structural_maps(oracle::vals(x4), oracle::vals(xs),
                                       oracle::vals(pred), oracle::vals(sup), M, Ms, C);
    for (int i = 0; i < M; ++i) {
      CHECK(std::abs(maps.s_fb[i] - ref.s_fb[i]) <= 1e-6);
      CHECK(std::abs(maps.s_bf[i] - ref.s_bf[i]) <= 1e-6);
      CHECK(std::abs(maps.s_fs[i] - ref.s_fs[i]) <= 1e-6);
      CHECK(std::abs(maps.s_bs[i] - ref.s_bs[i]) <= 1e-6);
    }
  }
}

TEST_CASE("degenerate structural maps collapse to zeros") {
  int M = 4, C = 3;
  Tensor x4 = zeros({M, C});  // all dot products zero
  Tensor xs = zeros({M, C});
  Tensor pred = full({M, 1}, 1.0);
  Tensor sup = full({M, 1}, 1.0);
  SimilarityMaps maps = structural_maps(x4, xs, pred, sup);
  CHECK(maps.degenerate);
  for (int i = 0; i < M; ++i) {
    CHECK(maps.s_fb[i] == 0.0);
    CHECK(maps.s_fs[i] == 0.0);
  }
  SimilarityMaps z = zero_maps(5);
  CHECK(z.s_fb.rows() == 5);
  CHECK(z.s_bs.raw().sum() == 0.0);
}

TEST_CASE("untrained IoU regressor scores one half") {
  Rng rng(83);
  ParamStore ps;
  IouNet net = IouNet::make(ps, 8, rng);
  Tensor rgb = rand_t({3, 16, 16}, rng, 0.0, 1.0);
  FeaturePyramid pyr = net.enc.encode_frame(rgb);
  Tensor mask8 = binarize(rand_t({4, 1}, rng, 0.0, 1.0));
  Tensor s = iou_score(net, pyr, zero_maps(4), mask8);
  CHECK(s.scalar() == 0.5);  // zero-initialized output layer
}

TEST_CASE("IoU regressor learns through all layers after one step") {
  Rng rng(84);
  ParamStore ps;
  IouNet net = IouNet::make(ps, 8, rng);
  Adam opt(1e-2);

  auto loss_once = [&]() {
    Tensor rgb = rand_t({3, 16, 16}, rng, 0.0, 1.0);
    FeaturePyramid pyr = net.enc.encode_frame(rgb);
    Tensor mask8 = full({4, 1}, 1.0);
    Tensor s = iou_score(net, pyr, zero_maps(4), mask8);
    return abs_t(add_scalar(s, -0.9));
  };

  // first step: only the zero-initialized head can receive gradient
  Tensor l0 = loss_once();
  l0.backward();
  CHECK(net.f2.w.has_grad());
  opt.step(ps);
  ps.zero_grads();

  // after f2 moved, gradient reaches the backbone
  Tensor l1 = loss_once();
  l1.backward();
  bool enc_has = false;
  for (auto& [name, t] : ps.items())
    if (name.rfind("enc", 0) == 0 && t.has_grad() && t.grad().abs().maxCoeff() > 0)
      enc_has = true;
  CHECK(enc_has);
  CHECK(net.f1.w.grad().abs().maxCoeff() > 0);
}
