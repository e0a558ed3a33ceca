#include "fsvos/encoder.hpp"

#include "fsvos/image.hpp"

#include <stdexcept>

namespace fsvos {

Encoder Encoder::make(ParamStore& ps, const std::string& name, int C, Rng& rng) {
  if (C % 4 != 0) throw std::runtime_error("encoder width must be divisible by 4");
  Encoder e;
  e.c_ = C;
  int c1 = C / 2;
  e.b1a_ = Conv2dLayer::make(ps, name + ".b1a", 3, C / 4, 3, 2, 1, rng);
  e.b1b_ = Conv2dLayer::make(ps, name + ".b1b", C / 4, c1, 3, 2, 1, rng);
  e.b2_ = Conv2dLayer::make(ps, name + ".b2", c1, C, 3, 2, 1, rng);
  e.b3_ = Conv2dLayer::make(ps, name + ".b3", C, C, 3, 1, 1, rng);
  e.b4_ = Conv2dLayer::make(ps, name + ".b4", C, C, 3, 1, 1, rng);
  e.fuse_ = LinearLayer::make(ps, name + ".fuse", c1 + C, C, rng);
  return e;
}

FeaturePyramid Encoder::encode_frame(const Tensor& rgb, int frame_id) const {
  if (rgb.shape().size() != 3 || rgb.dim(0) != 3)
    throw std::runtime_error("encode_frame wants a {3,H,W} image");
  int H = rgb.dim(1), W = rgb.dim(2);
  if (H % 8 != 0 || W % 8 != 0)
    throw std::runtime_error("frame dimensions must be divisible by 8");
  FeaturePyramid p;
  p.H = H;
  p.W = W;
  p.frame_id = frame_id;
  p.x1 = relu(b1b_.forward(relu(b1a_.forward(rgb))));
  p.x2 = relu(b2_.forward(p.x1));
  p.x3 = relu(b3_.forward(p.x2));
  p.x4 = relu(b4_.forward(p.x3));
  return p;
}

Tensor Encoder::fuse_backbone(const FeaturePyramid& p) const {
  Tensor x1d = avg_pool2(p.x1);  // to 1/8
  Tensor cat = concat_cols(chw_to_mc(x1d), chw_to_mc(p.x2));
  return relu(fuse_.forward(cat));
}

PaModule PaModule::make(ParamStore& ps, const std::string& name, int C, Rng& rng) {
  PaModule m;
  m.proj = LinearLayer::make(ps, name + ".proj", 2 * C + 1, C, rng);
  Eigen::ArrayXd g(C);
  Rng r = rng.child(0x67300);
  for (int i = 0; i < C; ++i) g[i] = 0.02 * r.normal();
  m.g0 = ps.add(name + ".g0", {1, C}, std::move(g));
  return m;
}

Tensor masked_avg_pool(const Tensor& feats, const Tensor& mask) {
  if (mask.requires_grad())
    throw std::runtime_error("masked_avg_pool mask must be constant");
  double s = mask.raw().sum();
  if (s <= 0.0) throw std::runtime_error("masked_avg_pool over empty mask");
  return mul_scalar(sum_rows(scale_rows(feats, mask)), 1.0 / s);
}

Tensor cosine_prior(const Tensor& feats, const Tensor& proto) {
  Tensor dots = matmul_nt(feats, proto);                          // {M,1}
  Tensor qn = sqrt_t(sum_cols(mul(feats, feats)));                // {M,1}
  Tensor pn = sqrt_t(reshape(sum_all(mul(proto, proto)), {1, 1}));  // {1,1}
  Tensor denom = add_scalar(mul(qn, broadcast_rows(pn, feats.rows())), 1e-8);
  return minmax_norm(div(dots, denom));
}

std::vector<uint8_t> downsample_mask8(const std::vector<uint8_t>& m, int H, int W) {
  return nearest_resize_mask(m, H, W, H / 8, W / 8);
}

Tensor mask_to_tensor(const std::vector<uint8_t>& m) {
  Eigen::ArrayXd v(m.size());
  for (size_t i = 0; i < m.size(); ++i) v[i] = m[i] ? 1.0 : 0.0;
  return from_array({(int)m.size(), 1}, std::move(v));
}

InitializedEpisode pa_initialize(const Encoder& enc, const PaModule& pa,
                                 const std::vector<SupportInput>& support,
                                 const std::vector<FeaturePyramid>& query) {
  if (support.empty() || query.empty())
    throw std::runtime_error("pa_initialize needs support and query frames");
  InitializedEpisode ep;
  ep.K = (int)support.size();
  ep.H = support[0].pyr.H;
  ep.W = support[0].pyr.W;
  ep.h = support[0].pyr.h();
  ep.w = support[0].pyr.w();

  std::vector<Tensor> fused_s, x4_s, masks;
  for (const auto& s : support) {
    fused_s.push_back(enc.fuse_backbone(s.pyr));
    x4_s.push_back(chw_to_mc(s.pyr.x4));
    masks.push_back(mask_to_tensor(downsample_mask8(s.mask, s.pyr.H, s.pyr.W)));
  }
  ep.support_feats = concat_rows(fused_s);
  ep.support_mask = concat_rows(masks);
  if (ep.support_mask.raw().sum() <= 0.0)
    throw std::runtime_error("empty support foreground");

  Tensor proto = masked_avg_pool(ep.support_feats, ep.support_mask);
  Tensor x4_proto = masked_avg_pool(concat_rows(x4_s), ep.support_mask);

  for (const auto& q : query) {
    QueryFrameInit f;
    f.fused = enc.fuse_backbone(q);
    f.m0 = cosine_prior(chw_to_mc(q.x4), x4_proto);
    int m = f.fused.rows();
    Tensor cat = concat_cols(concat_cols(f.fused, broadcast_rows(proto, m)), f.m0);
    f.f0 = relu(pa.proj.forward(cat));
    ep.frames.push_back(std::move(f));
  }
  ep.g0 = pa.g0;
  return ep;
}

}  // namespace fsvos
