#include "fsvos/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace fsvos {

MAttSet MAttSet::make(ParamStore& ps, const std::string& name, int C, Rng& rng) {
  MAttSet s;
  s.q = LinearLayer::make(ps, name + ".q", C, C, rng);
  s.k = LinearLayer::make(ps, name + ".k", C, C, rng);
  s.v = LinearLayer::make(ps, name + ".v", C, C, rng);
  // attention temperature folded into the init so the formula stays bare qk^T
  double t = std::pow((double)C, -0.25);
  s.q.w.raw() *= t;
  s.k.w.raw() *= t;
  return s;
}

MAttResult masked_attention(const MAttSet& att, const Tensor& g, const Tensor& feats,
                            const Tensor& mask) {
  if (feats.rows() != mask.rows() || mask.cols() != 1)
    throw std::runtime_error("masked_attention mask/feature row mismatch");
  if (mask.raw().sum() <= 0.0) return {zeros({1, g.cols()}), true};
  Tensor logits = matmul_nt(att.q.forward(g), att.k.forward(feats));  // {1,M}
  Tensor delta = mul_scalar(add_scalar(neg(transpose(mask)), 1.0), -1e9);
  Tensor attn = softmax_rows(add(logits, delta));
  return {matmul(attn, att.v.forward(feats)), false};
}

MgHead MgHead::make(ParamStore& ps, const std::string& name, int C, Rng& rng) {
  MgHead h;
  h.fg = LinearLayer::make(ps, name + ".fg", C, C, rng);
  return h;
}

Tensor mask_generate(const MgHead& mg, const Tensor& g, const Tensor& feats) {
  return sigmoid(matmul_nt(feats, mg.fg.forward(g)));  // {M,1}
}

QaNet QaNet::make(ParamStore& ps, const std::string& name, int C, Rng& rng) {
  QaNet n;
  n.c1 = Conv2dLayer::make(ps, name + ".c1", 2 * C, C, 3, 1, 1, rng);
  n.c2 = Conv2dLayer::make(ps, name + ".c2", C, C, 3, 1, 1, rng);
  return n;
}

Tensor query_activate(const QaNet& qa, const Tensor& g, const Tensor& feats, int h,
                      int w) {
  if (feats.rows() != h * w)
    throw std::runtime_error("query_activate grid/row mismatch");
  Tensor cat = concat_cols(broadcast_rows(g, feats.rows()), feats);
  Tensor x = mc_to_chw(cat, h, w);
  return chw_to_mc(relu(qa.c2.forward(relu(qa.c1.forward(x)))));
}

}  // namespace fsvos
