#pragma once

#include "fsvos/image.hpp"
#include "fsvos/quality.hpp"
#include "fsvos/rng.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fsvos {

// Categories are (shape, texture) pairs. The video corpus uses the first
// 4 shapes x first 3 textures (12 combos); the remaining combos are held
// back for the single-image corpus so the two never share a category.
extern const char* const kShapeNames[6];    // disc square triangle cross ring diamond
extern const char* const kTextureNames[4];  // stripes checker dots gradient

struct SynthConfig {
  int categories = 12;           // <= 12
  int videos_per_category = 8;
  int frames = 20;
  int W = 96, H = 96;
};

std::string category_name(int shape, int texture);

// writes videos/, masks/ and index.json under root; byte-identical per seed
void generate_synthetic(const std::string& root, const SynthConfig& cfg,
                        uint64_t seed);

struct ImageSample {
  PngBuffer rgb;  // 3-channel
  MaskGrid mask;
};

// one frame of a held-back category with 1-2 instances; for regressor training
ImageSample render_image_sample(int W, int H, Rng& rng);

// same, with the category fixed (both halves of a query/reference pair)
std::pair<int, int> pick_reserved_combo(Rng& rng);
ImageSample render_image_category(int shape, int texture, int W, int H,
                                  Rng& rng);

}  // namespace fsvos
