#pragma once

#include "fsvos/attention.hpp"
#include "fsvos/engine.hpp"
#include "fsvos/tensor.hpp"

#include <vector>

namespace fsvos {

// all loss terms return {1,1} graph tensors so they can be combined and
// backpropagated together

Tensor bce_mean(const Tensor& pred, const Tensor& gt);  // probs clamped at 1e-7

Tensor dice_loss(const Tensor& pred, const Tensor& gt);      // eps = 1
Tensor soft_iou_loss(const Tensor& pred, const Tensor& gt);  // min/max, eps = 1

// sum over pixels of mask * -log(1 - pred): BCE of the mask-gated prediction
// against an all-zero target. Pixels outside the mask contribute exactly 0.
Tensor masked_zero_bce_sum(const Tensor& pred, const Tensor& mask);

struct IterationBce {
  Tensor support, clip, frame, memory;  // memory invalid when no bank was used
  bool has_memory = false;
};

// mean BCE per mask family, averaged over the iterations in the trace.
// frame_gts: per clip frame, {h*w,1} binary. memory_gt: {Tm*h*w,1} binary
// ground-truth masks of the memory frames (pass default Tensor when no bank).
IterationBce iteration_bce(const IterationTrace& trace, const Tensor& support_gt,
                           const std::vector<Tensor>& frame_gts,
                           const Tensor& memory_gt);

// cross-category discriminative loss over a batch of B samples with distinct
// categories: prototypes of sample b must predict nothing inside sample j's
// foreground. protos[b] holds the per-iteration combined prototypes {1,C}.
Tensor ccds_loss(const MgHead& mg, const std::vector<std::vector<Tensor>>& protos,
                 const std::vector<Tensor>& feats, const std::vector<Tensor>& gts);

struct LossWeights {
  double dice = 1.0, iou = 1.0;
  double bce_support = 1.0, bce_clip = 1.0, bce_frame = 1.0, bce_memory = 1.0;
  double ccds = 1.0;
};

struct LossReport {
  double dice = 0, iou = 0;
  double bce_support = 0, bce_clip = 0, bce_frame = 0, bce_memory = 0;
  double ccds = 0;
  double total = 0;
};

}  // namespace fsvos
