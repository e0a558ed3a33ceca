#pragma once

// Independent brute-force reference computations, written against raw double
// buffers with plain loops. They deliberately share no code with the library
// ops they check (only layer weights are read out).

#include "fsvos/attention.hpp"
#include "fsvos/metrics.hpp"
#include "fsvos/quality.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

using fsvos::LinearLayer;
using fsvos::MaskGrid;
using fsvos::Tensor;

inline std::vector<double> vals(const Tensor& t) {
  const double* d = t.data();
  return std::vector<double>(d, d + t.size());
}

// y = W x + b with W {out,in} row-major
inline std::vector<double> lin(const LinearLayer& l, const std::vector<double>& x) {
  std::vector<double> w = vals(l.w), b = vals(l.b);
  int out = (int)l.w.dim(0), in = (int)l.w.dim(1);
  std::vector<double> y(out);
  for (int o = 0; o < out; ++o) {
    double s = b[o];
    for (int i = 0; i < in; ++i) s += w[o * in + i] * x[i];
    y[o] = s;
  }
  return y;
}

inline std::vector<double> row(const std::vector<double>& m, int cols, int r) {
  return std::vector<double>(m.begin() + (size_t)r * cols,
                             m.begin() + (size_t)(r + 1) * cols);
}

// softmax(f_Q(g) f_K(F)^T + delta) f_V(F); mask must have foreground
inline std::vector<double> masked_attention(const fsvos::MAttSet& att,
                                            const std::vector<double>& g,
                                            const std::vector<double>& feats,
                                            const std::vector<double>& mask,
                                            int M, int C) {
  std::vector<double> q = lin(att.q, g);
  std::vector<double> logits(M);
  for (int j = 0; j < M; ++j) {
    std::vector<double> k = lin(att.k, row(feats, C, j));
    double dot = 0;
    for (int c = 0; c < C; ++c) dot += q[c] * k[c];
    logits[j] = dot + (mask[j] > 0 ? 0.0 : -1e9);
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> w(M);
  double z = 0;
  for (int j = 0; j < M; ++j) {
    w[j] = std::exp(logits[j] - mx);
    z += w[j];
  }
  std::vector<double> out(C, 0.0);
  for (int j = 0; j < M; ++j) {
    std::vector<double> v = lin(att.v, row(feats, C, j));
    for (int c = 0; c < C; ++c) out[c] += (w[j] / z) * v[c];
  }
  return out;
}

// per-position post-softmax weights, for the masking-exactness check
inline std::vector<double> attention_weights(const fsvos::MAttSet& att,
                                             const std::vector<double>& g,
                                             const std::vector<double>& feats,
                                             const std::vector<double>& mask,
                                             int M, int C) {
  std::vector<double> q = lin(att.q, g);
  std::vector<double> logits(M);
  for (int j = 0; j < M; ++j) {
    std::vector<double> k = lin(att.k, row(feats, C, j));
    double dot = 0;
    for (int c = 0; c < C; ++c) dot += q[c] * k[c];
    logits[j] = dot + (mask[j] > 0 ? 0.0 : -1e9);
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0;
  std::vector<double> w(M);
  for (int j = 0; j < M; ++j) {
    w[j] = std::exp(logits[j] - mx);
    z += w[j];
  }
  for (double& v : w) v /= z;
  return w;
}

inline std::vector<double> mask_generate(const fsvos::MgHead& mg,
                                         const std::vector<double>& g,
                                         const std::vector<double>& feats,
                                         int M, int C) {
  std::vector<double> p = lin(mg.fg, g);
  std::vector<double> out(M);
  for (int j = 0; j < M; ++j) {
    double dot = 0;
    for (int c = 0; c < C; ++c) dot += p[c] * feats[(size_t)j * C + c];
    out[j] = 1.0 / (1.0 + std::exp(-dot));
  }
  return out;
}

struct StructMaps {
  std::vector<double> s_fb, s_bf, s_fs, s_bs;
};

inline std::vector<double> minmax(std::vector<double> v) {
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi - lo == 0.0) return std::vector<double>(v.size(), 0.0);
  for (double& x : v) x = (x - lo) / (hi - lo);
  return v;
}

inline StructMaps structural_maps(const std::vector<double>& x4,
                                  const std::vector<double>& xs,
                                  const std::vector<double>& pred,
                                  const std::vector<double>& smask, int M,
                                  int Ms, int C) {
  auto scale = [C](const std::vector<double>& f, const std::vector<double>& m,
                   bool invert) {
    std::vector<double> out(f.size());
    for (size_t i = 0; i < f.size(); ++i) {
      double w = m[i / C];
      out[i] = f[i] * (invert ? 1.0 - w : w);
    }
    return out;
  };
  std::vector<double> xf = scale(x4, pred, false), xb = scale(x4, pred, true);
  std::vector<double> xsf = scale(xs, smask, false), xsb = scale(xs, smask, true);
  auto build = [C](const std::vector<double>& a, int Ma,
                   const std::vector<double>& b, int Mb) {
    std::vector<double> out(Ma);
    for (int i = 0; i < Ma; ++i) {
      double best = -1e300;
      for (int j = 0; j < Mb; ++j) {
        double dot = 0;
        for (int c = 0; c < C; ++c) dot += a[(size_t)i * C + c] * b[(size_t)j * C + c];
        best = std::max(best, dot);
      }
      out[i] = best;
    }
    return minmax(out);
  };
  StructMaps sm;
  sm.s_fb = build(xf, M, xb, M);
  sm.s_bf = build(xb, M, xf, M);
  sm.s_fs = build(xf, M, xsf, Ms);
  sm.s_bs = build(xb, M, xsb, Ms);
  return sm;
}

inline double region_j(const MaskGrid& a, const MaskGrid& b) {
  int inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    if (a.v[i] && b.v[i]) ++inter;
    if (a.v[i] || b.v[i]) ++uni;
  }
  return uni == 0 ? 1.0 : (double)inter / uni;
}

inline std::vector<std::pair<int, int>> boundary(const MaskGrid& m) {
  std::vector<std::pair<int, int>> out;
  auto at = [&m](int x, int y) {
    if (x < 0 || y < 0 || x >= m.w || y >= m.h) return 0;
    return (int)m.v[(size_t)y * m.w + x];
  };
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (at(x, y) && (!at(x - 1, y) || !at(x + 1, y) || !at(x, y - 1) ||
                       !at(x, y + 1)))
        out.push_back({x, y});
  return out;
}

// exhaustive maximum bipartite matching by bitmask DP over the gt side
inline int max_match(const std::vector<std::pair<int, int>>& p,
                     const std::vector<std::pair<int, int>>& g, double tol) {
  int np = (int)p.size(), ng = (int)g.size();
  std::vector<uint32_t> adj(np, 0);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < ng; ++j) {
      double dx = p[i].first - g[j].first, dy = p[i].second - g[j].second;
      if (dx * dx + dy * dy <= tol * tol + 1e-12) adj[i] |= 1u << j;
    }
  std::vector<int8_t> memo((size_t)(np + 1) << ng, -1);
  // f(i, used) = best additional matches using pred pixels i..np-1
  std::function<int(int, uint32_t)> f = [&](int i, uint32_t used) -> int {
    if (i == np) return 0;
    int8_t& m = memo[((size_t)i << ng) | used];
    if (m >= 0) return m;
    int best = f(i + 1, used);
    uint32_t avail = adj[i] & ~used;
    while (avail) {
      uint32_t bit = avail & (~avail + 1);
      avail ^= bit;
      best = std::max(best, 1 + f(i + 1, used | bit));
    }
    return m = (int8_t)best;
  };
  return f(0, 0);
}

inline double contour_f(const MaskGrid& pred, const MaskGrid& gt, double tol) {
  auto bp = boundary(pred), bg = boundary(gt);
  if (bp.empty() && bg.empty()) return 1.0;
  if (bp.empty() || bg.empty()) return 0.0;
  int m = max_match(bp, bg, tol);
  double P = (double)m / bp.size(), R = (double)m / bg.size();
  if (P + R == 0) return 0.0;
  return 2 * P * R / (P + R);
}

inline double video_consistency(const std::vector<MaskGrid>& preds,
                                const std::vector<MaskGrid>& gts, int n) {
  int N = (int)preds.size();
  int win = std::min(n, N);
  double acc = 0;
  int kept = 0;
  for (int s = 0; s + win <= N; ++s) {
    size_t px = preds[0].v.size();
    double inter = 0, gsum = 0;
    for (size_t i = 0; i < px; ++i) {
      bool gall = true, pall = true;
      for (int t = s; t < s + win; ++t) {
        if (!gts[t].v[i]) gall = false;
        if (!preds[t].v[i]) pall = false;
      }
      if (gall) {
        gsum += 1;
        if (pall) inter += 1;
      }
    }
    if (gsum == 0) continue;
    acc += inter / gsum;
    ++kept;
  }
  return kept == 0 ? 1.0 : acc / kept;
}

}  // namespace oracle
