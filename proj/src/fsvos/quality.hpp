#pragma once

#include "fsvos/encoder.hpp"
#include "fsvos/nn.hpp"
#include "fsvos/rng.hpp"
#include "fsvos/tensor.hpp"

#include <cstdint>
#include <vector>

namespace fsvos {

// Four structural similarity maps between predicted foreground/background
// regions and each other / the support regions; each {h*w, 1} in [0,1].
struct SimilarityMaps {
  Tensor s_fb, s_bf, s_fs, s_bs;
  bool degenerate = false;  // some map had an all-zero pre-norm matrix
};

// pred_mask and support_mask binary columns. Masking broadcasts across
// channels; similarities are raw dot products, row-max, then min-max per map.
SimilarityMaps structural_maps(const Tensor& x4, const Tensor& x4_support,
                               const Tensor& pred_mask,
                               const Tensor& support_mask);

SimilarityMaps zero_maps(int M);  // stand-in when the maps are disabled

// Frame-quality regressor with its own small backbone. The 1/4-scale x1 is
// brought to 1/8 by a strided conv and joined with x2..x4 (4C channels),
// plus the four maps and the mask itself; 4 convs, global mean, 2 FC.
// The last layer starts at zero so an untrained net scores 0.5 everywhere.
struct IouNet {
  int C = 0;
  Encoder enc;
  Conv2dLayer x1_down, c1, c2, c3, c4;
  LinearLayer f1, f2;

  static IouNet make(ParamStore& ps, int C, Rng& rng);
};

// {1,1} probability in (0,1)
Tensor iou_score(const IouNet& net, const FeaturePyramid& pyr,
                 const SimilarityMaps& maps, const Tensor& mask8);

// binary mask on a W x H grid, row-major y*w+x
struct MaskGrid {
  int w = 0, h = 0;
  std::vector<uint8_t> v;

  static MaskGrid zeros(int w, int h) { return {w, h, std::vector<uint8_t>((size_t)w * h, 0)}; }
  int count() const;
};

double mask_iou(const MaskGrid& a, const MaskGrid& b);  // exact; empty/empty = 1

// corruption primitives (exposed for direct tests)
MaskGrid dilate_mask(const MaskGrid& m, int r);
MaskGrid erode_mask(const MaskGrid& m, int r);
MaskGrid translate_mask(const MaskGrid& m, int dx, int dy);
MaskGrid delete_blob(const MaskGrid& m, Rng& rng);     // drop one 4-connected blob
MaskGrid insert_ellipse(const MaskGrid& m, Rng& rng);  // paint a random ellipse

struct Corrupted {
  MaskGrid mask;
  double true_iou = 0;  // exact vs the source ground truth
};

// random composition of the primitives; tuned to spread true_iou across [0,1]
Corrupted corrupt_mask(const MaskGrid& gt, Rng& rng);

// indices of frames with score strictly above the threshold
std::vector<int> select_reliable(const std::vector<double>& scores,
                                 double threshold);

}  // namespace fsvos
