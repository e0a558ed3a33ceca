#include "fsvos/losses.hpp"

#include <iostream>
#include <stdexcept>

namespace fsvos {

namespace {
constexpr double kEps = 1e-7;

Tensor one_minus(const Tensor& t) { return add_scalar(neg(t), 1.0); }
}  // namespace

Tensor bce_mean(const Tensor& pred, const Tensor& gt) {
  if (pred.size() != gt.size()) throw std::runtime_error("bce shape mismatch");
  Tensor p = clamp(pred, kEps, 1.0 - kEps);
  Tensor ll = add(mul(gt, log_t(p)), mul(one_minus(gt), log_t(one_minus(p))));
  return neg(mean_all(ll));
}

Tensor dice_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.size() != gt.size()) throw std::runtime_error("dice shape mismatch");
  Tensor num = add_scalar(mul_scalar(sum_all(mul(pred, gt)), 2.0), 1.0);
  Tensor den = add_scalar(add(sum_all(pred), sum_all(gt)), 1.0);
  return add_scalar(neg(div(num, den)), 1.0);
}

Tensor soft_iou_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.size() != gt.size()) throw std::runtime_error("iou shape mismatch");
  Tensor num = add_scalar(sum_all(minimum(pred, gt)), 1.0);
  Tensor den = add_scalar(sum_all(maximum(pred, gt)), 1.0);
  return add_scalar(neg(div(num, den)), 1.0);
}

Tensor masked_zero_bce_sum(const Tensor& pred, const Tensor& mask) {
  if (pred.size() != mask.size())
    throw std::runtime_error("masked bce shape mismatch");
  // clamp 1-p away from 0 so log stays finite; mask gating keeps outside
  // pixels at exactly zero contribution
  Tensor nl = neg(log_t(clamp(one_minus(pred), kEps, 1.0)));
  return sum_all(mul(mask, nl));
}

IterationBce iteration_bce(const IterationTrace& trace, const Tensor& support_gt,
                           const std::vector<Tensor>& frame_gts,
                           const Tensor& memory_gt) {
  if (trace.iters.empty()) throw std::runtime_error("empty trace");
  int L = (int)trace.iters.size();
  double inv_l = 1.0 / L;

  IterationBce out;
  out.has_memory = memory_gt.node != nullptr;

  Tensor acc_s, acc_c, acc_f, acc_m;
  for (const IterationRecord& it : trace.iters) {
    Tensor s = bce_mean(it.support_pred, support_gt);
    acc_s = acc_s.node ? add(acc_s, s) : s;

    if (it.clip_pred.size() != frame_gts.size())
      throw std::runtime_error("frame gt count mismatch");
    Tensor cp = it.clip_pred.size() == 1 ? it.clip_pred[0]
                                         : concat_rows(it.clip_pred);
    Tensor fp = it.frame_pred.size() == 1 ? it.frame_pred[0]
                                          : concat_rows(it.frame_pred);
    Tensor gt_all =
        frame_gts.size() == 1 ? frame_gts[0] : concat_rows(frame_gts);
    Tensor c = bce_mean(cp, gt_all);
    Tensor f = bce_mean(fp, gt_all);
    acc_c = acc_c.node ? add(acc_c, c) : c;
    acc_f = acc_f.node ? add(acc_f, f) : f;

    if (out.has_memory) {
      if (!it.memory_pred.node)
        throw std::runtime_error("trace lacks memory predictions");
      Tensor m = bce_mean(it.memory_pred, memory_gt);
      acc_m = acc_m.node ? add(acc_m, m) : m;
    }
  }
  out.support = mul_scalar(acc_s, inv_l);
  out.clip = mul_scalar(acc_c, inv_l);
  out.frame = mul_scalar(acc_f, inv_l);
  if (out.has_memory) out.memory = mul_scalar(acc_m, inv_l);
  return out;
}

Tensor ccds_loss(const MgHead& mg, const std::vector<std::vector<Tensor>>& protos,
                 const std::vector<Tensor>& feats,
                 const std::vector<Tensor>& gts) {
  size_t B = protos.size();
  if (feats.size() != B || gts.size() != B)
    throw std::runtime_error("ccds batch size mismatch");
  if (B <= 1) {
    std::cerr << "warning: ccds needs a batch of at least 2, returning 0\n";
    return zeros({1, 1});
  }

  Tensor acc;
  for (size_t b = 0; b < B; ++b) {
    for (size_t j = 0; j < B; ++j) {
      if (j == b) continue;
      double oj_sum = gts[j].raw().sum();
      if (oj_sum <= 0.0) continue;  // no foreground to protect
      Tensor pair;
      for (const Tensor& g : protos[b]) {
        Tensor pred = mask_generate(mg, g, feats[j]);
        Tensor term = masked_zero_bce_sum(pred, gts[j]);
        pair = pair.node ? add(pair, term) : term;
      }
      pair = mul_scalar(pair, 1.0 / oj_sum);
      acc = acc.node ? add(acc, pair) : pair;
    }
  }
  if (!acc.node) return zeros({1, 1});
  return mul_scalar(acc, 1.0 / ((double)(B - 1) * (double)B));
}

}  // namespace fsvos
