#include "fsvos/model.hpp"

namespace fsvos {

VipmtModel::VipmtModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(splitmix64(seed ^ 0x5eedf00dull));
  int C = cfg.C;
  encoder = Encoder::make(params_, "encoder", C, rng);
  pa = PaModule::make(params_, "pa", C, rng);
  att_sm = MAttSet::make(params_, "att_sm", C, rng);
  att_clip = MAttSet::make(params_, "att_clip", C, rng);
  att_frame = MAttSet::make(params_, "att_frame", C, rng);
  mg = MgHead::make(params_, "mg", C, rng);
  qa = QaNet::make(params_, "qa", C, rng);
  mlp_ci = Mlp::make(params_, "mlp_ci", C, rng);
  mlp_frame = Mlp::make(params_, "mlp_frame", C, rng);
  head1 = Conv2dLayer::make(params_, "head.c1", C, C, 3, 1, 1, rng);
  head2 = Conv2dLayer::make(params_, "head.c2", C, 1, 1, 1, 0, rng);
}

Tensor VipmtModel::head_logits(const Tensor& feat, int h, int w) const {
  Tensor x = mc_to_chw(feat, h, w);
  return head2.forward(relu(head1.forward(x)));
}

}  // namespace fsvos
