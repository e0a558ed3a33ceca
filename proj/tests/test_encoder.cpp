#include <doctest.h>

#include "fsvos/encoder.hpp"
#include "fsvos/rng.hpp"

#include <cmath>

using namespace fsvos;

namespace {

Tensor rand_t(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Eigen::ArrayXd v(shape_size(s));
  for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return from_array(s, v);
}

}  // namespace

TEST_CASE("masked_avg_pool equals the hand-rolled mean") {
  Rng rng(31);
  int M = 7, C = 5;
  Tensor feats = rand_t({M, C}, rng);
  Eigen::ArrayXd mv(M);
  for (int i = 0; i < M; ++i) mv[i] = (i % 3 == 0) ? 1.0 : 0.0;
  Tensor mask = from_array({M, 1}, mv);
  Tensor avg = masked_avg_pool(feats, mask);
  REQUIRE(avg.rows() == 1);
  REQUIRE(avg.cols() == C);
  for (int c = 0; c < C; ++c) {
    double s = 0, n = 0;
    for (int i = 0; i < M; ++i)
      if (mv[i] > 0) s += feats[i * C + c], n += 1;
    CHECK(avg[c] == doctest::Approx(s / n).epsilon(1e-12));
  }
  CHECK_THROWS(masked_avg_pool(feats, zeros({M, 1})));
}

TEST_CASE("cosine_prior lands in [0,1] and kills constant similarity") {
  Rng rng(32);
  Tensor feats = rand_t({9, 6}, rng);
  Tensor proto = rand_t({1, 6}, rng);
  Tensor prior = cosine_prior(feats, proto);
  REQUIRE(prior.rows() == 9);
  for (int i = 0; i < 9; ++i) {
    CHECK(prior[i] >= 0.0);
    CHECK(prior[i] <= 1.0);
  }
  // rows all equal -> cosine constant -> normalized map is all zero
  Tensor flat = broadcast_rows(rand_t({1, 6}, rng), 9);
  Tensor p2 = cosine_prior(flat, proto);
  for (int i = 0; i < 9; ++i) CHECK(p2[i] == 0.0);
}

TEST_CASE("downsample_mask8 samples at 1/8 grid") {
  int H = 16, W = 16;
  std::vector<uint8_t> ones((size_t)H * W, 1), zero((size_t)H * W, 0);
  auto d1 = downsample_mask8(ones, H, W);
  auto d0 = downsample_mask8(zero, H, W);
  REQUIRE(d1.size() == 4);
  for (auto v : d1) CHECK(v == 1);
  for (auto v : d0) CHECK(v == 0);

  std::vector<uint8_t> top((size_t)H * W, 0);
  for (int y = 0; y < H / 2; ++y)
    for (int x = 0; x < W; ++x) top[(size_t)y * W + x] = 1;
  auto dt = downsample_mask8(top, H, W);
  CHECK(dt[0] == 1);
  CHECK(dt[1] == 1);
  CHECK(dt[2] == 0);
  CHECK(dt[3] == 0);
}

TEST_CASE("encoder produces the documented pyramid shapes") {
  Rng rng(33);
  ParamStore ps;
  int C = 8;
  Encoder enc = Encoder::make(ps, "e", C, rng);
  Tensor rgb = rand_t({3, 16, 16}, rng, 0.0, 1.0);
  FeaturePyramid p = enc.encode_frame(rgb, 5);
  CHECK(p.frame_id == 5);
  CHECK(p.H == 16);
  CHECK(p.W == 16);
  CHECK(p.h() == 2);
  CHECK(p.w() == 2);
  CHECK(p.x1.dim(0) == C / 2);
  CHECK(p.x1.dim(1) == 4);  // 1/4 scale
  CHECK(p.x4.dim(0) == C);
  CHECK(p.x4.dim(1) == 2);  // 1/8 scale
  Tensor fused = enc.fuse_backbone(p);
  CHECK(fused.rows() == 4);
  CHECK(fused.cols() == C);
}

TEST_CASE("pa_initialize wires supports, prior, and projected features") {
  Rng rng(34);
  ParamStore ps;
  int C = 8, H = 16, W = 16;
  Encoder enc = Encoder::make(ps, "e", C, rng);
  PaModule pa = PaModule::make(ps, "pa", C, rng);

  auto mk_support = [&](bool fg) {
    SupportInput s;
    s.pyr = enc.encode_frame(rand_t({3, H, W}, rng, 0.0, 1.0));
    s.mask.assign((size_t)H * W, 0);
    if (fg)
      for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) s.mask[(size_t)y * W + x] = 1;
    return s;
  };

  std::vector<SupportInput> sup{mk_support(true), mk_support(true)};
  std::vector<FeaturePyramid> qry{enc.encode_frame(rand_t({3, H, W}, rng, 0.0, 1.0)),
                                  enc.encode_frame(rand_t({3, H, W}, rng, 0.0, 1.0))};
  InitializedEpisode ep = pa_initialize(enc, pa, sup, qry);
  CHECK(ep.K == 2);
  CHECK(ep.h == 2);
  CHECK(ep.w == 2);
  CHECK(ep.H == H);
  CHECK(ep.support_feats.rows() == 2 * 4);
  CHECK(ep.support_mask.rows() == 2 * 4);
  REQUIRE(ep.frames.size() == 2);
  for (const auto& f : ep.frames) {
    CHECK(f.f0.rows() == 4);
    CHECK(f.f0.cols() == C);
    CHECK(f.fused.rows() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(f.m0[i] >= 0.0);
      CHECK(f.m0[i] <= 1.0);
    }
  }
  for (int c = 0; c < C; ++c) CHECK(ep.g0[c] == pa.g0[c]);

  // all-background supports must be rejected
  std::vector<SupportInput> bad{mk_support(false)};
  CHECK_THROWS_WITH(pa_initialize(enc, pa, bad, qry),
                    doctest::Contains("support foreground"));
}
