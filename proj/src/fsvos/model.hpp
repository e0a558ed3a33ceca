#pragma once

#include "fsvos/attention.hpp"
#include "fsvos/encoder.hpp"
#include "fsvos/nn.hpp"

namespace fsvos {

struct ModelConfig {
  int C = 64;
  int L = 5;
  int Tc = 5;
  int Tm = 5;
  bool bidirectional = true;  // mean over frame prototypes vs one-way pass-through
  bool ssm = true;            // structural maps into the IoU regressor
  double iou_threshold = 0.8;
};

// The episodic segmentation model: encoder + PA init + the three masked
// attention roles + shared MG/QA + the two prototype MLPs + the final head.
class VipmtModel {
 public:
  VipmtModel(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& cfg() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // two-convolution prediction head on F^c_L; returns 1/8-scale logits {1,h,w}
  Tensor head_logits(const Tensor& feat, int h, int w) const;

  Encoder encoder;
  PaModule pa;
  MAttSet att_sm;     // shared for support and memory
  MAttSet att_clip;
  MAttSet att_frame;
  MgHead mg;
  QaNet qa;
  Mlp mlp_ci;     // clip-prototype update
  Mlp mlp_frame;  // frame-prototype update
  Conv2dLayer head1;
  Conv2dLayer head2;

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace fsvos
