#pragma once

#include "fsvos/nn.hpp"
#include "fsvos/tensor.hpp"

#include <cstdint>
#include <vector>

namespace fsvos {

// Multi-scale features for one frame: x1 at 1/4, x2..x4 at 1/8.
struct FeaturePyramid {
  Tensor x1, x2, x3, x4;
  int H = 0, W = 0;
  int frame_id = 0;
  int h() const { return H / 8; }
  int w() const { return W / 8; }
};

// Four-block strided trainable encoder; widths scale off the model width C:
// x1 carries C/2 channels, x2..x4 carry C.
class Encoder {
 public:
  static Encoder make(ParamStore& ps, const std::string& name, int C, Rng& rng);

  FeaturePyramid encode_frame(const Tensor& rgb, int frame_id = 0) const;
  // 1/4-scale x1 pooled to 1/8 and joined with x2 through a learned 1x1
  // projection; {h*w, C} rows.
  Tensor fuse_backbone(const FeaturePyramid& p) const;

  int width() const { return c_; }

 private:
  int c_ = 0;
  Conv2dLayer b1a_, b1b_, b2_, b3_, b4_;
  LinearLayer fuse_;
};

struct SupportInput {
  FeaturePyramid pyr;
  std::vector<uint8_t> mask;  // 0/1 at full H x W
};

struct QueryFrameInit {
  Tensor fused;  // {h*w, C} backbone space (memory bank / CCDS features)
  Tensor f0;     // {h*w, C} projected F^q_0
  Tensor m0;     // {h*w, 1} prior mask
};

struct InitializedEpisode {
  Tensor support_feats;  // {K*h*w, C}
  Tensor support_mask;   // {K*h*w, 1} binary
  std::vector<QueryFrameInit> frames;
  Tensor g0;  // {1, C}
  int K = 0, h = 0, w = 0, H = 0, W = 0;
};

// Learned pieces of the prototype-activation init: the F^q_0 projection and G_0.
struct PaModule {
  LinearLayer proj;  // (2C+1) -> C
  Tensor g0;         // {1, C}
  static PaModule make(ParamStore& ps, const std::string& name, int C, Rng& rng);
};

// Σ(feats ⊙ mask) / Σmask. The mask must carry no gradient.
Tensor masked_avg_pool(const Tensor& feats, const Tensor& mask);

// Min-max-normalized cosine similarity of each feature row against proto {1,C}.
Tensor cosine_prior(const Tensor& feats, const Tensor& proto);

std::vector<uint8_t> downsample_mask8(const std::vector<uint8_t>& m, int H, int W);

Tensor mask_to_tensor(const std::vector<uint8_t>& m);  // {n, 1}

InitializedEpisode pa_initialize(const Encoder& enc, const PaModule& pa,
                                 const std::vector<SupportInput>& support,
                                 const std::vector<FeaturePyramid>& query);

}  // namespace fsvos
