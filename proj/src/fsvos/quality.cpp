#include "fsvos/quality.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace fsvos {

namespace {

Tensor one_minus(const Tensor& t) { return add_scalar(neg(t), 1.0); }

bool all_zero(const Tensor& t) { return t.raw().abs().maxCoeff() == 0.0; }

}  // namespace

SimilarityMaps structural_maps(const Tensor& x4, const Tensor& x4_support,
                               const Tensor& pred_mask,
                               const Tensor& support_mask) {
  if (x4.rows() != pred_mask.rows() || pred_mask.cols() != 1)
    throw std::runtime_error("structural_maps: bad query mask shape");
  if (x4_support.rows() != support_mask.rows() || support_mask.cols() != 1)
    throw std::runtime_error("structural_maps: bad support mask shape");
  if (x4.cols() != x4_support.cols())
    throw std::runtime_error("structural_maps: channel mismatch");

  Tensor xf = scale_rows(x4, pred_mask);
  Tensor xb = scale_rows(x4, one_minus(pred_mask));
  Tensor xsf = scale_rows(x4_support, support_mask);
  Tensor xsb = scale_rows(x4_support, one_minus(support_mask));

  SimilarityMaps out;
  auto build = [&out](const Tensor& a, const Tensor& b) {
    Tensor mx = row_max(matmul_nt(a, b));
    if (all_zero(mx)) out.degenerate = true;
    return minmax_norm(mx);
  };
  out.s_fb = build(xf, xb);
  out.s_bf = build(xb, xf);
  out.s_fs = build(xf, xsf);
  out.s_bs = build(xb, xsb);
  return out;
}

SimilarityMaps zero_maps(int M) {
  SimilarityMaps out;
  out.s_fb = zeros({M, 1});
  out.s_bf = zeros({M, 1});
  out.s_fs = zeros({M, 1});
  out.s_bs = zeros({M, 1});
  return out;
}

IouNet IouNet::make(ParamStore& ps, int C, Rng& rng) {
  if (C % 4 != 0) throw std::runtime_error("IouNet width must be divisible by 4");
  IouNet n;
  n.C = C;
  n.enc = Encoder::make(ps, "enc", C, rng);
  n.x1_down = Conv2dLayer::make(ps, "x1down", C / 2, C, 3, 2, 1, rng);
  n.c1 = Conv2dLayer::make(ps, "c1", 4 * C + 5, C, 3, 1, 1, rng);
  n.c2 = Conv2dLayer::make(ps, "c2", C, C, 3, 2, 1, rng);
  n.c3 = Conv2dLayer::make(ps, "c3", C, C, 3, 1, 1, rng);
  n.c4 = Conv2dLayer::make(ps, "c4", C, C, 3, 2, 1, rng);
  n.f1 = LinearLayer::make(ps, "f1", C, C, rng);
  n.f2 = LinearLayer::make(ps, "f2", C, 1, rng);
  n.f2.w.raw().setZero();  // fresh net scores sigmoid(0) = 0.5 on anything
  n.f2.b.raw().setZero();
  return n;
}

Tensor iou_score(const IouNet& net, const FeaturePyramid& pyr,
                 const SimilarityMaps& maps, const Tensor& mask8) {
  int h = pyr.h(), w = pyr.w();
  int M = h * w;
  if (mask8.rows() != M || mask8.cols() != 1)
    throw std::runtime_error("iou_score: mask shape mismatch");
  if (maps.s_fb.rows() != M)
    throw std::runtime_error("iou_score: map shape mismatch");

  Tensor x1d = net.x1_down.forward(pyr.x1);  // {C, h, w}
  auto rows_of = [M](const Tensor& t) { return reshape(t, {t.dim(0), M}); };
  std::vector<Tensor> parts = {
      rows_of(x1d),           rows_of(pyr.x2),        rows_of(pyr.x3),
      rows_of(pyr.x4),        transpose(maps.s_fb),   transpose(maps.s_bf),
      transpose(maps.s_fs),   transpose(maps.s_bs),   transpose(mask8)};
  Tensor stack = reshape(concat_rows(parts), {4 * net.C + 5, h, w});

  Tensor y = relu(net.c1.forward(stack));
  y = relu(net.c2.forward(y));
  y = relu(net.c3.forward(y));
  y = relu(net.c4.forward(y));

  int hw = y.dim(1) * y.dim(2);
  Tensor pooled = mul_scalar(sum_rows(chw_to_mc(y)), 1.0 / hw);  // {1,C}
  Tensor z = relu(net.f1.forward(pooled));
  return sigmoid(net.f2.forward(z));
}

int MaskGrid::count() const {
  int c = 0;
  for (uint8_t b : v) c += b ? 1 : 0;
  return c;
}

double mask_iou(const MaskGrid& a, const MaskGrid& b) {
  if (a.w != b.w || a.h != b.h) throw std::runtime_error("mask_iou size mismatch");
  int inter = 0, uni = 0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    bool fa = a.v[i] != 0, fb = b.v[i] != 0;
    inter += (fa && fb) ? 1 : 0;
    uni += (fa || fb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : (double)inter / (double)uni;
}

namespace {

// separable sliding-window OR (dilate) / AND (erode) over a square window
MaskGrid window_pass(const MaskGrid& m, int r, bool take_max) {
  MaskGrid hz = MaskGrid::zeros(m.w, m.h);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      uint8_t acc = take_max ? 0 : 1;
      for (int dx = -r; dx <= r; ++dx) {
        int xx = x + dx;
        uint8_t val = (xx >= 0 && xx < m.w) ? m.v[(size_t)y * m.w + xx] : 0;
        if (take_max)
          acc = std::max<uint8_t>(acc, val ? 1 : 0);
        else
          acc = std::min<uint8_t>(acc, val ? 1 : 0);
      }
      hz.v[(size_t)y * m.w + x] = acc;
    }
  MaskGrid out = MaskGrid::zeros(m.w, m.h);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      uint8_t acc = take_max ? 0 : 1;
      for (int dy = -r; dy <= r; ++dy) {
        int yy = y + dy;
        uint8_t val = (yy >= 0 && yy < m.h) ? hz.v[(size_t)yy * m.w + x] : 0;
        if (take_max)
          acc = std::max<uint8_t>(acc, val ? 1 : 0);
        else
          acc = std::min<uint8_t>(acc, val ? 1 : 0);
      }
      out.v[(size_t)y * m.w + x] = acc;
    }
  return out;
}

struct Bbox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool empty() const { return x1 < x0; }
  int bw() const { return x1 - x0 + 1; }
  int bh() const { return y1 - y0 + 1; }
};

Bbox bbox_of(const MaskGrid& m) {
  Bbox b{m.w, m.h, -1, -1};
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.v[(size_t)y * m.w + x]) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  return b;
}

}  // namespace

MaskGrid dilate_mask(const MaskGrid& m, int r) { return window_pass(m, r, true); }
MaskGrid erode_mask(const MaskGrid& m, int r) { return window_pass(m, r, false); }

MaskGrid translate_mask(const MaskGrid& m, int dx, int dy) {
  MaskGrid out = MaskGrid::zeros(m.w, m.h);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      int sx = x - dx, sy = y - dy;
      if (sx >= 0 && sx < m.w && sy >= 0 && sy < m.h)
        out.v[(size_t)y * m.w + x] = m.v[(size_t)sy * m.w + sx];
    }
  return out;
}

MaskGrid delete_blob(const MaskGrid& m, Rng& rng) {
  std::vector<int> label((size_t)m.w * m.h, -1);
  int nblobs = 0;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      size_t i = (size_t)y * m.w + x;
      if (!m.v[i] || label[i] >= 0) continue;
      std::deque<std::pair<int, int>> q{{x, y}};
      label[i] = nblobs;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop_front();
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || nx[k] >= m.w || ny[k] < 0 || ny[k] >= m.h) continue;
          size_t j = (size_t)ny[k] * m.w + nx[k];
          if (m.v[j] && label[j] < 0) {
            label[j] = nblobs;
            q.emplace_back(nx[k], ny[k]);
          }
        }
      }
      ++nblobs;
    }
  if (nblobs == 0) return m;
  int victim = (int)rng.randint((uint64_t)nblobs);
  MaskGrid out = m;
  for (size_t i = 0; i < out.v.size(); ++i)
    if (label[i] == victim) out.v[i] = 0;
  return out;
}

MaskGrid insert_ellipse(const MaskGrid& m, Rng& rng) {
  MaskGrid out = m;
  int cx = (int)rng.randint((uint64_t)m.w);
  int cy = (int)rng.randint((uint64_t)m.h);
  int a = 2 + (int)rng.randint((uint64_t)std::max(1, m.w / 6));
  int b = 2 + (int)rng.randint((uint64_t)std::max(1, m.h / 6));
  for (int y = std::max(0, cy - b); y <= std::min(m.h - 1, cy + b); ++y)
    for (int x = std::max(0, cx - a); x <= std::min(m.w - 1, cx + a); ++x) {
      double ex = (double)(x - cx) / a, ey = (double)(y - cy) / b;
      if (ex * ex + ey * ey <= 1.0) out.v[(size_t)y * m.w + x] = 1;
    }
  return out;
}

Corrupted corrupt_mask(const MaskGrid& gt, Rng& rng) {
  if (gt.count() == 0) throw std::runtime_error("corrupt_mask: empty ground truth");
  MaskGrid cur = gt;
  if (rng.uniform() >= 0.08) {  // small identity share anchors the top decile
    int n_ops = 1 + (int)rng.randint(3);
    for (int k = 0; k < n_ops; ++k) {
      switch (rng.randint(4)) {
        case 0:
          cur = dilate_mask(cur, 1 + (int)rng.randint(4));
          break;
        case 1:
          cur = erode_mask(cur, 1 + (int)rng.randint(4));
          break;
        case 2: {
          Bbox b = bbox_of(cur);
          if (b.empty()) break;
          int mx = std::max(1, b.bw() / 5), my = std::max(1, b.bh() / 5);
          int dx = (int)rng.randint((uint64_t)(2 * mx + 1)) - mx;
          int dy = (int)rng.randint((uint64_t)(2 * my + 1)) - my;
          cur = translate_mask(cur, dx, dy);
          break;
        }
        case 3:
          cur = rng.coin(0.5) ? delete_blob(cur, rng) : insert_ellipse(cur, rng);
          break;
      }
    }
  }
  return {cur, mask_iou(cur, gt)};
}

std::vector<int> select_reliable(const std::vector<double>& scores,
                                 double threshold) {
  std::vector<int> out;
  for (size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > threshold) out.push_back((int)i);
  return out;
}

}  // namespace fsvos
