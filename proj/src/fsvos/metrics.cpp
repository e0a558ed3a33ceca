#include "fsvos/metrics.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace fsvos {

double region_j(const MaskGrid& pred, const MaskGrid& gt) {
  return mask_iou(pred, gt);
}

std::vector<std::pair<int, int>> boundary_pixels(const MaskGrid& m) {
  std::vector<std::pair<int, int>> out;
  auto at = [&m](int x, int y) -> bool {
    if (x < 0 || x >= m.w || y < 0 || y >= m.h) return false;
    return m.v[(size_t)y * m.w + x] != 0;
  };
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!at(x, y)) continue;
      if (!at(x - 1, y) || !at(x + 1, y) || !at(x, y - 1) || !at(x, y + 1))
        out.emplace_back(x, y);
    }
  return out;
}

namespace {

// Kuhn augmenting paths; adj[l] lists right-side neighbours of left node l
int max_matching(const std::vector<std::vector<int>>& adj, int n_right) {
  std::vector<int> match_r(n_right, -1);
  std::vector<char> used;
  std::function<bool(int)> try_kuhn = [&](int l) -> bool {
    for (int r : adj[l]) {
      if (used[r]) continue;
      used[r] = 1;
      if (match_r[r] < 0 || try_kuhn(match_r[r])) {
        match_r[r] = l;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (size_t l = 0; l < adj.size(); ++l) {
    used.assign(n_right, 0);
    if (try_kuhn((int)l)) ++matched;
  }
  return matched;
}

}  // namespace

double contour_f(const MaskGrid& pred, const MaskGrid& gt, double tol) {
  if (pred.w != gt.w || pred.h != gt.h)
    throw std::runtime_error("contour_f size mismatch");
  if (tol < 0)
    tol = std::max(1.0, 0.008 * std::sqrt((double)pred.w * pred.w +
                                          (double)pred.h * pred.h));
  auto bp = boundary_pixels(pred);
  auto bg = boundary_pixels(gt);
  if (bp.empty() && bg.empty()) return 1.0;
  if (bp.empty() || bg.empty()) return 0.0;

  double t2 = tol * tol;
  std::vector<std::vector<int>> adj(bp.size());
  for (size_t i = 0; i < bp.size(); ++i)
    for (size_t j = 0; j < bg.size(); ++j) {
      double dx = bp[i].first - bg[j].first;
      double dy = bp[i].second - bg[j].second;
      if (dx * dx + dy * dy <= t2) adj[i].push_back((int)j);
    }
  int matched = max_matching(adj, (int)bg.size());
  double prec = (double)matched / bp.size();
  double rec = (double)matched / bg.size();
  if (prec + rec <= 0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

double video_consistency(const std::vector<MaskGrid>& preds,
                         const std::vector<MaskGrid>& gts, int n) {
  if (preds.size() != gts.size() || preds.empty())
    throw std::runtime_error("video_consistency frame mismatch");
  int N = (int)preds.size();
  int win = std::min(n, N);

  double acc = 0;
  int kept = 0;
  for (int s = 0; s + win <= N; ++s) {
    MaskGrid ig = gts[s], ip = preds[s];
    for (int t = s + 1; t < s + win; ++t) {
      for (size_t i = 0; i < ig.v.size(); ++i) {
        ig.v[i] = ig.v[i] && gts[t].v[i];
        ip.v[i] = ip.v[i] && preds[t].v[i];
      }
    }
    int gsum = 0, isum = 0;
    for (size_t i = 0; i < ig.v.size(); ++i) {
      gsum += ig.v[i] ? 1 : 0;
      isum += (ig.v[i] && ip.v[i]) ? 1 : 0;
    }
    if (gsum == 0) continue;  // nothing persistent to be consistent about
    acc += (double)isum / gsum;
    ++kept;
  }
  return kept == 0 ? 1.0 : acc / kept;
}

VideoScore score_video(const std::vector<MaskGrid>& preds,
                       const std::vector<MaskGrid>& gts, double tol,
                       int vc_window) {
  if (preds.size() != gts.size() || preds.empty())
    throw std::runtime_error("score_video frame mismatch");
  VideoScore s;
  s.frames = (int)preds.size();
  for (size_t i = 0; i < preds.size(); ++i) {
    s.j += region_j(preds[i], gts[i]);
    s.f += contour_f(preds[i], gts[i], tol);
  }
  s.j /= s.frames;
  s.f /= s.frames;
  s.vc7 = video_consistency(preds, gts, vc_window);
  return s;
}

}  // namespace fsvos
