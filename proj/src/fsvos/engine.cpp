#include "fsvos/engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace fsvos {

MemoryBank make_bank(const std::vector<Tensor>& feats,
                     const std::vector<Tensor>& masks, std::vector<int> frame_ids,
                     bool from_gt) {
  MemoryBank b;
  if (feats.empty()) return b;
  if (feats.size() != masks.size() || feats.size() != frame_ids.size())
    throw std::runtime_error("make_bank length mismatch");
  b.feats = feats.size() == 1 ? feats[0] : concat_rows(feats);
  b.masks = masks.size() == 1 ? masks[0] : concat_rows(masks);
  b.frame_ids = std::move(frame_ids);
  b.from_gt = from_gt;
  return b;
}

EngineOut run_clip(const VipmtModel& m, const InitializedEpisode& ep,
                   const std::vector<int>& frame_idx, const MemoryBank& bank) {
  if (frame_idx.empty()) throw std::runtime_error("run_clip with no frames");
  const ModelConfig& cfg = m.cfg();

  ClipState st;
  st.h = ep.h;
  st.w = ep.w;
  for (int idx : frame_idx) {
    st.feats.push_back(ep.frames.at(idx).f0);
    st.frame_masks.push_back(ep.frames.at(idx).m0);
  }
  int tc = st.tc();

  Tensor g_prev = ep.g0;
  IterationTrace trace;
  for (int l = 1; l <= cfg.L; ++l) {
    IterationRecord rec;

    MAttResult rs =
        masked_attention(m.att_sm, g_prev, ep.support_feats, ep.support_mask);
    if (rs.empty) throw std::runtime_error("empty support foreground");
    rec.g_s = rs.g;

    Tensor fc = tc == 1 ? st.feats[0] : concat_rows(st.feats);
    Tensor of_bin =
        binarize(tc == 1 ? st.frame_masks[0] : concat_rows(st.frame_masks));
    rec.g_c = masked_attention(m.att_clip, g_prev, fc, of_bin).g;

    // fixed summation order; the memory term is absent (not a zero add)
    // when the bank is empty, so memory-off reduces to the plain update bitwise.
    Tensor sum = add(rec.g_s, rec.g_c);
    if (!bank.empty()) {
      rec.g_m = masked_attention(m.att_sm, g_prev, bank.feats, bank.masks).g;
      sum = add(sum, rec.g_m);
    }
    sum = add(sum, g_prev);
    rec.g_ci = m.mlp_ci.forward(sum);

    for (int i = 0; i < tc; ++i)
      rec.clip_pred.push_back(mask_generate(m.mg, rec.g_ci, st.feats[i]));

    Tensor g_next;
    if (tc > 1) {
      for (int i = 0; i < tc; ++i) {
        MAttResult rf = masked_attention(m.att_frame, rec.g_ci, st.feats[i],
                                         binarize(rec.clip_pred[i]));
        rec.g_f.push_back(m.mlp_frame.forward(add(rf.g, rec.g_ci)));
      }
      std::vector<Tensor> nf, nm;
      for (int i = 0; i < tc; ++i) {
        nm.push_back(mask_generate(m.mg, rec.g_f[i], st.feats[i]));
        nf.push_back(query_activate(m.qa, rec.g_f[i], st.feats[i], st.h, st.w));
      }
      if (cfg.bidirectional) {
        Tensor acc = rec.g_f[0];
        for (int i = 1; i < tc; ++i) acc = add(acc, rec.g_f[i]);
        g_next = mul_scalar(acc, 1.0 / tc);
      } else {
        g_next = rec.g_ci;
      }
      rec.frame_pred = nm;
      st.feats = std::move(nf);
      st.frame_masks = std::move(nm);
    } else {
      // single-frame clip: the IPMT recurrence, no frame refinement stage
      g_next = rec.g_ci;
      rec.frame_pred = rec.clip_pred;
      st.feats[0] = query_activate(m.qa, rec.g_ci, st.feats[0], st.h, st.w);
      st.frame_masks[0] = rec.clip_pred[0];
    }
    rec.g_out = g_next;
    rec.support_pred = mask_generate(m.mg, g_next, ep.support_feats);
    if (!bank.empty())
      rec.memory_pred = mask_generate(m.mg, rec.g_ci, bank.feats);

    trace.iters.push_back(std::move(rec));
    g_prev = g_next;
    st.l = l;
  }

  EngineOut out;
  for (int i = 0; i < tc; ++i) {
    Tensor logits8 = m.head_logits(st.feats[i], st.h, st.w);
    out.masks8.push_back(sigmoid(chw_to_mc(logits8)));
    out.full_masks.push_back(sigmoid(bilinear_resize(logits8, ep.H, ep.W)));
  }
  out.trace = std::move(trace);
  out.state = std::move(st);
  return out;
}

VideoResult run_video(const VipmtModel& m, const InitializedEpisode& ep,
                      const std::function<double(int, const Tensor&)>& score_fn,
                      Rng& rng) {
  int n = (int)ep.frames.size();
  int Tc = m.cfg().Tc;
  int Tm = m.cfg().Tm;

  VideoResult out;
  out.scores.assign(n, 0.0);
  out.full_masks.resize(n);
  out.masks8.resize(n);

  struct PoolEntry {
    int id;
    Tensor mask_bin;  // {h*w, 1}
  };
  std::vector<PoolEntry> pool;

  for (int start = 0; start < n; start += Tc) {
    std::vector<int> idx;
    for (int i = start; i < std::min(n, start + Tc); ++i) idx.push_back(i);

    MemoryBank bank;
    if (start > 0 && Tm > 0 && !pool.empty()) {
      int take = std::min<int>(Tm, (int)pool.size());
      std::vector<int> picks = rng.sample_indices((int)pool.size(), take);
      std::sort(picks.begin(), picks.end());
      std::vector<Tensor> bf, bm;
      std::vector<int> ids;
      for (int p : picks) {
        bf.push_back(ep.frames[pool[p].id].fused);
        bm.push_back(pool[p].mask_bin);
        ids.push_back(pool[p].id);
      }
      bank = make_bank(bf, bm, ids, false);
    }

    EngineOut res = run_clip(m, ep, idx, bank);
    for (size_t j = 0; j < idx.size(); ++j) {
      int fi = idx[j];
      if (Tm > 0) {  // scores only feed the reliable pool
        Tensor mb = binarize(res.masks8[j]);
        double score = score_fn(fi, mb);
        out.scores[fi] = score;
        if (score > m.cfg().iou_threshold) pool.push_back({fi, mb});
      }
      out.full_masks[fi] = res.full_masks[j];
      out.masks8[fi] = res.masks8[j];
    }
  }
  return out;
}

}  // namespace fsvos
