#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fsvos {

struct PngBuffer {
  int w = 0, h = 0, channels = 0;
  std::vector<uint8_t> pixels;  // HWC interleaved
};

PngBuffer read_png_rgb(const std::string& path);
PngBuffer read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, int w, int h, const uint8_t* data);
void write_png_rgb(const std::string& path, int w, int h, const uint8_t* data);

// 0/1 mask from a grayscale buffer: any nonzero byte is foreground.
std::vector<uint8_t> to_mask(const PngBuffer& g);

std::vector<uint8_t> nearest_resize_mask(const std::vector<uint8_t>& m, int h, int w,
                                         int oh, int ow);

// single plane, half-pixel bilinear (same convention as the graph op)
std::vector<double> bilinear_resize_plane(const std::vector<double>& p, int h, int w,
                                          int oh, int ow);

template <typename T>
void hflip_plane(std::vector<T>& p, int h, int w) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x) std::swap(p[y * w + x], p[y * w + (w - 1 - x)]);
}

}  // namespace fsvos
