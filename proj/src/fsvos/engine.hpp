#pragma once

#include "fsvos/model.hpp"
#include "fsvos/rng.hpp"

#include <functional>
#include <vector>

namespace fsvos {

struct ClipState {
  std::vector<Tensor> feats;        // per frame {h*w, C}
  std::vector<Tensor> frame_masks;  // per frame {h*w, 1}, probabilities
  int l = 0;
  int h = 0, w = 0;
  int tc() const { return (int)feats.size(); }
};

struct MemoryBank {
  Tensor feats;  // {Tm*h*w, C}
  Tensor masks;  // {Tm*h*w, 1}, binary
  std::vector<int> frame_ids;
  bool from_gt = false;
  bool empty() const { return frame_ids.empty(); }
};

struct IterationRecord {
  Tensor g_s, g_c, g_m, g_ci, g_out;  // g_m defined only with a non-empty bank
  std::vector<Tensor> g_f;            // empty when the frame stage is skipped
  Tensor support_pred;                // {K*h*w, 1}
  std::vector<Tensor> clip_pred;      // per frame {h*w, 1}
  std::vector<Tensor> frame_pred;     // per frame {h*w, 1}
  Tensor memory_pred;                 // {Tm*h*w, 1} when bank non-empty
};

struct IterationTrace {
  std::vector<IterationRecord> iters;
};

struct EngineOut {
  std::vector<Tensor> full_masks;  // per frame {1, H, W} probabilities
  std::vector<Tensor> masks8;      // per frame {h*w, 1} probabilities
  IterationTrace trace;
  ClipState state;  // final features F^c_L
};

// One L-iteration pass over the clip given by frame indices into ep.frames.
EngineOut run_clip(const VipmtModel& m, const InitializedEpisode& ep,
                   const std::vector<int>& frame_idx, const MemoryBank& bank);

MemoryBank make_bank(const std::vector<Tensor>& feats,
                     const std::vector<Tensor>& masks, std::vector<int> frame_ids,
                     bool from_gt);

struct VideoResult {
  std::vector<Tensor> full_masks;  // per frame {1, H, W}
  std::vector<Tensor> masks8;      // per frame {h*w, 1}
  std::vector<double> scores;      // IoU estimate per frame
};

// Sequential clip processing with reliable-memory selection between clips.
// score_fn(frame_idx, binarized 1/8 mask) -> estimated IoU; frames scoring
// above cfg.iou_threshold join the reliable pool, and each later clip draws
// up to T_m of them uniformly (seeded).
VideoResult run_video(const VipmtModel& m, const InitializedEpisode& ep,
                      const std::function<double(int, const Tensor&)>& score_fn,
                      Rng& rng);

}  // namespace fsvos
