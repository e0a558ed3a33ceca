#include "fsvos/image.hpp"

#include "fsvos/tensor.hpp"

#include <png.h>

#include <cstring>
#include <stdexcept>

namespace fsvos {

namespace {

PngBuffer read_png(const std::string& path, png_uint_32 format, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw std::runtime_error("cannot read png: " + path + ": " + img.message);
  img.format = format;
  PngBuffer out;
  out.w = (int)img.width;
  out.h = (int)img.height;
  out.channels = channels;
  out.pixels.resize((size_t)out.w * out.h * channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("cannot decode png: " + path + ": " + img.message);
  }
  return out;
}

void write_png(const std::string& path, int w, int h, const uint8_t* data,
               png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = (png_uint_32)w;
  img.height = (png_uint_32)h;
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr))
    throw std::runtime_error("cannot write png: " + path + ": " + img.message);
}

}  // namespace

PngBuffer read_png_rgb(const std::string& path) {
  return read_png(path, PNG_FORMAT_RGB, 3);
}

PngBuffer read_png_gray(const std::string& path) {
  return read_png(path, PNG_FORMAT_GRAY, 1);
}

void write_png_gray(const std::string& path, int w, int h, const uint8_t* data) {
  write_png(path, w, h, data, PNG_FORMAT_GRAY);
}

void write_png_rgb(const std::string& path, int w, int h, const uint8_t* data) {
  write_png(path, w, h, data, PNG_FORMAT_RGB);
}

std::vector<uint8_t> to_mask(const PngBuffer& g) {
  std::vector<uint8_t> m(g.pixels.size() / g.channels);
  for (size_t i = 0; i < m.size(); ++i) m[i] = g.pixels[i * g.channels] ? 1 : 0;
  return m;
}

std::vector<uint8_t> nearest_resize_mask(const std::vector<uint8_t>& m, int h, int w,
                                         int oh, int ow) {
  std::vector<uint8_t> out((size_t)oh * ow);
  for (int y = 0; y < oh; ++y) {
    int sy = (int)((y + 0.5) * h / oh);
    if (sy >= h) sy = h - 1;
    for (int x = 0; x < ow; ++x) {
      int sx = (int)((x + 0.5) * w / ow);
      if (sx >= w) sx = w - 1;
      out[(size_t)y * ow + x] = m[(size_t)sy * w + sx];
    }
  }
  return out;
}

std::vector<double> bilinear_resize_plane(const std::vector<double>& p, int h, int w,
                                          int oh, int ow) {
  LinearSamplePlan py = bilinear_plan(h, oh);
  LinearSamplePlan px = bilinear_plan(w, ow);
  std::vector<double> out((size_t)oh * ow);
  for (int y = 0; y < oh; ++y) {
    int y0 = py.i0[y], y1 = py.i1[y];
    double wy = py.w1[y];
    for (int x = 0; x < ow; ++x) {
      int x0 = px.i0[x], x1 = px.i1[x];
      double wx = px.w1[x];
      double top = (1 - wx) * p[(size_t)y0 * w + x0] + wx * p[(size_t)y0 * w + x1];
      double bot = (1 - wx) * p[(size_t)y1 * w + x0] + wx * p[(size_t)y1 * w + x1];
      out[(size_t)y * ow + x] = (1 - wy) * top + wy * bot;
    }
  }
  return out;
}

}  // namespace fsvos
