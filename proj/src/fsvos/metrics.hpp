#pragma once

#include "fsvos/quality.hpp"

#include <vector>

namespace fsvos {

// |P ∩ G| / |P ∪ G|; two empty masks count as a perfect 1.0
double region_j(const MaskGrid& pred, const MaskGrid& gt);

// boundary = 4-connected morphological gradient (grid border counts as
// background). Precision/recall from a maximum one-to-one matching of
// boundary pixels within the tolerance radius; tol < 0 picks the default
// max(1, 0.008 * diagonal). Empty/empty -> 1, one-sided empty -> 0.
double contour_f(const MaskGrid& pred, const MaskGrid& gt, double tol = -1.0);

std::vector<std::pair<int, int>> boundary_pixels(const MaskGrid& m);  // (x, y)

// sliding windows of n consecutive frames (the whole video when shorter):
// |⋂gt ∩ ⋂pred| / |⋂gt| per window, skipping windows whose gt intersection
// is empty; mean over kept windows, 1.0 when every window was skipped.
double video_consistency(const std::vector<MaskGrid>& preds,
                         const std::vector<MaskGrid>& gts, int n = 7);

struct VideoScore {
  double j = 0, f = 0, vc7 = 0;
  int frames = 0;
};

VideoScore score_video(const std::vector<MaskGrid>& preds,
                       const std::vector<MaskGrid>& gts, double tol = -1.0,
                       int vc_window = 7);

}  // namespace fsvos
