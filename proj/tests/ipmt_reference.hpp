#pragma once

// Direct transcription of the single-frame prototype recurrence (clip length 1,
// no memory, no similarity maps), assembled from the model's building blocks
// but independent of the engine's clip/state plumbing. Used to pin the engine
// to the plain update rule bitwise.

#include "fsvos/engine.hpp"

#include <vector>

namespace refimpl {

struct RefStep {
  fsvos::Tensor g_s, g_c, g_ci, g_out;
  fsvos::Tensor clip_pred, support_pred;
};

struct RefOut {
  std::vector<RefStep> steps;
  fsvos::Tensor mask8, full;
};

// One frame, L iterations: g <- MLP(attn_s(g) + attn_c(g) + g), features
// re-activated and the working mask replaced by the fresh prediction each pass.
inline RefOut single_frame_recurrence(const fsvos::VipmtModel& m,
                                      const fsvos::InitializedEpisode& ep,
                                      int frame) {
  using namespace fsvos;
  const ModelConfig& cfg = m.cfg();

  Tensor f = ep.frames.at(frame).f0;
  Tensor mask = ep.frames.at(frame).m0;
  Tensor g = ep.g0;

  RefOut out;
  for (int l = 0; l < cfg.L; ++l) {
    RefStep s;
    MAttResult rs = masked_attention(m.att_sm, g, ep.support_feats, ep.support_mask);
    if (rs.empty) throw std::runtime_error("reference: empty support foreground");
    s.g_s = rs.g;
    s.g_c = masked_attention(m.att_clip, g, f, binarize(mask)).g;
    Tensor sum = add(add(s.g_s, s.g_c), g);
    s.g_ci = m.mlp_ci.forward(sum);
    s.clip_pred = mask_generate(m.mg, s.g_ci, f);
    s.g_out = s.g_ci;
    f = query_activate(m.qa, s.g_ci, f, ep.h, ep.w);
    mask = s.clip_pred;
    s.support_pred = mask_generate(m.mg, s.g_out, ep.support_feats);
    g = s.g_out;
    out.steps.push_back(std::move(s));
  }
  Tensor logits8 = m.head_logits(f, ep.h, ep.w);
  out.mask8 = sigmoid(chw_to_mc(logits8));
  out.full = sigmoid(bilinear_resize(logits8, ep.H, ep.W));
  return out;
}

}  // namespace refimpl
