#pragma once

#include "fsvos/nn.hpp"
#include "fsvos/tensor.hpp"

namespace fsvos {

// f_Q / f_K / f_V for one masked-attention role (support+memory, clip, frame).
struct MAttSet {
  LinearLayer q, k, v;
  static MAttSet make(ParamStore& ps, const std::string& name, int C, Rng& rng);
};

struct MAttResult {
  Tensor g;    // {1, C}
  bool empty;  // all-zero mask: g is the zero vector
};

// softmax(f_Q(g) f_K(F)^T + Δ) f_V(F), Δ = (1 - O^T)·(-1e9). The mask must be
// binary; a fully masked-out input yields the zero-contribution fallback.
MAttResult masked_attention(const MAttSet& att, const Tensor& g, const Tensor& feats,
                            const Tensor& mask);

struct MgHead {
  LinearLayer fg;
  static MgHead make(ParamStore& ps, const std::string& name, int C, Rng& rng);
};

// Sigmoid(f_G(g) F^T) as a column {M, 1}; values strictly inside (0,1).
Tensor mask_generate(const MgHead& mg, const Tensor& g, const Tensor& feats);

// Two-convolution activation network for QA.
struct QaNet {
  Conv2dLayer c1, c2;
  static QaNet make(ParamStore& ps, const std::string& name, int C, Rng& rng);
};

// F_actv(g ⊚ F): prototype broadcast-concatenated onto each row, run through
// the conv pair on the h×w grid; rows come back in the same order.
Tensor query_activate(const QaNet& qa, const Tensor& g, const Tensor& feats, int h,
                      int w);

}  // namespace fsvos
