#include <doctest.h>

#include "fsvos/attention.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace fsvos;

namespace {

Tensor rand_t(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Eigen::ArrayXd v(shape_size(s));
  for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return from_array(s, v);
}

Tensor rand_mask(int M, Rng& rng, bool force_fg = true) {
  Eigen::ArrayXd v(M);
  int fg = 0;
  for (int i = 0; i < M; ++i) {
    v[i] = rng.coin(0.5) ? 1.0 : 0.0;
    fg += v[i] > 0;
  }
  if (force_fg && fg == 0) v[(int)rng.randint(M)] = 1.0;
  return from_array({M, 1}, v);
}

}  // namespace

TEST_CASE("masked_attention matches the brute-force form") {
  Rng rng(21);
  ParamStore ps;
  int C = 6, M = 10;
  MAttSet att = MAttSet::make(ps, "a", C, rng);
  for (int it = 0; it < 25; ++it) {
    Tensor g = rand_t({1, C}, rng);
    Tensor feats = rand_t({M, C}, rng);
    Tensor mask = rand_mask(M, rng);
    MAttResult r = masked_attention(att, g, feats, mask);
    REQUIRE_FALSE(r.empty);
    auto ref = oracle::masked_attention(att, oracle::vals(g), oracle::vals(feats),
                                        oracle::vals(mask), M, C);
    for (int c = 0; c < C; ++c) CHECK(std::abs(r.g[c] - ref[c]) <= 1e-6);
  }
}

TEST_CASE("empty mask short-circuits to a zero prototype") {
  Rng rng(22);
  ParamStore ps;
  MAttSet att = MAttSet::make(ps, "a", 4, rng);
  MAttResult r = masked_attention(att, rand_t({1, 4}, rng), rand_t({6, 4}, rng),
                                  zeros({6, 1}));
  CHECK(r.empty);
  for (int c = 0; c < 4; ++c) CHECK(r.g[c] == 0.0);
}

TEST_CASE("masked-out features cannot influence the output") {
  // replace every masked-out feature row by garbage; bit-identical result
  Rng rng(23);
  ParamStore ps;
  int C = 5, M = 12;
  MAttSet att = MAttSet::make(ps, "a", C, rng);
  for (int it = 0; it < 20; ++it) {
    Tensor g = rand_t({1, C}, rng);
    Tensor feats = rand_t({M, C}, rng);
    Tensor mask = rand_mask(M, rng);
    Tensor poisoned = from_array(feats.shape(), feats.raw());
    for (int j = 0; j < M; ++j)
      if (mask[j] == 0.0)
        for (int c = 0; c < C; ++c) poisoned.raw()[j * C + c] = 1e6 * (1 + j + c);
    Tensor a = masked_attention(att, g, feats, mask).g;
    Tensor b = masked_attention(att, g, poisoned, mask).g;
    for (int c = 0; c < C; ++c) CHECK(a[c] == b[c]);
  }
}

TEST_CASE("post-softmax weight on masked positions vanishes") {
  Rng rng(24);
  ParamStore ps;
  int C = 4, M = 8;
  MAttSet att = MAttSet::make(ps, "a", C, rng);
  for (int it = 0; it < 50; ++it) {
    Tensor g = rand_t({1, C}, rng);
    Tensor feats = rand_t({M, C}, rng);
    Tensor mask = rand_mask(M, rng);
    auto w = oracle::attention_weights(att, oracle::vals(g), oracle::vals(feats),
                                       oracle::vals(mask), M, C);
    for (int j = 0; j < M; ++j)
      if (mask[j] == 0.0) CHECK(w[j] < 1e-30);
  }
}

TEST_CASE("mask_generate matches the brute-force form and stays in (0,1)") {
  Rng rng(25);
  ParamStore ps;
  int C = 6, M = 9;
  MgHead mg = MgHead::make(ps, "m", C, rng);
  for (int it = 0; it < 25; ++it) {
    Tensor g = rand_t({1, C}, rng);
    Tensor feats = rand_t({M, C}, rng);
    Tensor pred = mask_generate(mg, g, feats);
    REQUIRE(pred.rows() == M);
    REQUIRE(pred.cols() == 1);
    auto ref = oracle::mask_generate(mg, oracle::vals(g), oracle::vals(feats), M, C);
    for (int j = 0; j < M; ++j) {
      CHECK(std::abs(pred[j] - ref[j]) <= 1e-6);
      CHECK(pred[j] > 0.0);
      CHECK(pred[j] < 1.0);
    }
  }
}

TEST_CASE("query_activate keeps grid shape and is non-negative") {
  Rng rng(26);
  ParamStore ps;
  int C = 8, h = 3, w = 4;
  QaNet qa = QaNet::make(ps, "q", C, rng);
  Tensor g = rand_t({1, C}, rng);
  Tensor feats = rand_t({h * w, C}, rng);
  Tensor out = query_activate(qa, g, feats, h, w);
  REQUIRE(out.rows() == h * w);
  REQUIRE(out.cols() == C);
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] >= 0.0);  // relu head
  CHECK_THROWS(query_activate(qa, g, feats, h, w + 1));
}

TEST_CASE("attention mask/feature row mismatch is rejected") {
  Rng rng(27);
  ParamStore ps;
  MAttSet att = MAttSet::make(ps, "a", 4, rng);
  CHECK_THROWS(masked_attention(att, rand_t({1, 4}, rng), rand_t({6, 4}, rng),
                                zeros({5, 1})));
}
