#include "fsvos/synth.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fsvos {

const char* const kShapeNames[6] = {"disc",  "square", "triangle",
                                    "cross", "ring",   "diamond"};
const char* const kTextureNames[4] = {"stripes", "checker", "dots", "gradient"};

std::string category_name(int shape, int texture) {
  return std::string(kShapeNames[shape]) + "_" + kTextureNames[texture];
}

namespace {

struct Rgb {
  uint8_t r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  double c = v * s, x = c * (1.0 - std::fabs(std::fmod(h / 60.0, 2.0) - 1.0));
  double m = v - c, r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  auto q = [m](double t) { return (uint8_t)std::lround((t + m) * 255.0); };
  return {q(r), q(g), q(b)};
}

struct Palette {
  Rgb a, b;
};

Palette category_palette(int shape, int texture) {
  int idx = shape * 4 + texture;
  double hue = idx * 360.0 / 24.0;
  return {hsv(hue, 0.85, 0.95), hsv(hue + 150.0, 0.75, 0.55)};
}

// reflecting fold keeps a coordinate inside [lo, hi]
double fold(double p, double lo, double hi) {
  if (hi <= lo) return lo;
  double period = 2.0 * (hi - lo);
  double q = std::fmod(p - lo, period);
  if (q < 0) q += period;
  return q < (hi - lo) ? lo + q : hi - (q - (hi - lo));
}

struct Instance {
  double x0, y0, vx, vy, ax, ay, wx, wy, px, py;
  double r0, ps;
  double cx(double t) const { return x0 + vx * t + ax * std::sin(wx * t + px); }
  double cy(double t) const { return y0 + vy * t + ay * std::sin(wy * t + py); }
  double r(double t) const { return r0 * (1.0 + 0.2 * std::sin(0.45 * t + ps)); }
};

Instance make_instance(int W, int H, Rng& rng) {
  Instance in;
  double scale = std::min(W, H) / 96.0;
  in.r0 = scale * (13.0 + 9.0 * rng.uniform());
  in.x0 = in.r0 + rng.uniform() * (W - 2 * in.r0);
  in.y0 = in.r0 + rng.uniform() * (H - 2 * in.r0);
  in.vx = scale * (rng.uniform() * 3.0 - 1.5);
  in.vy = scale * (rng.uniform() * 3.0 - 1.5);
  in.ax = scale * rng.uniform() * 7.0;
  in.ay = scale * rng.uniform() * 7.0;
  in.wx = 0.1 + 0.4 * rng.uniform();
  in.wy = 0.1 + 0.4 * rng.uniform();
  in.px = rng.uniform() * 6.28318;
  in.py = rng.uniform() * 6.28318;
  in.ps = rng.uniform() * 6.28318;
  return in;
}

bool inside_shape(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::fabs(dx) <= 0.88 * r && std::fabs(dy) <= 0.88 * r;
    case 2: {  // apex-up triangle
      if (dy < -r || dy > r) return false;
      double half = (dy + r) / 2.0;
      return std::fabs(dx) <= half;
    }
    case 3:
      return (std::fabs(dx) <= 0.34 * r && std::fabs(dy) <= r) ||
             (std::fabs(dy) <= 0.34 * r && std::fabs(dx) <= r);
    case 4: {
      double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.55 * 0.55 * r * r;
    }
    default: return std::fabs(dx) + std::fabs(dy) <= r;
  }
}

Rgb texture_color(int texture, const Palette& pal, double dx, double dy, double r) {
  switch (texture) {
    case 0:
      return ((int64_t)std::floor((dx + dy) / 4.0) & 1) ? pal.b : pal.a;
    case 1:
      return (((int64_t)std::floor(dx / 4.0) + (int64_t)std::floor(dy / 4.0)) & 1)
                 ? pal.b : pal.a;
    case 2: {
      double u = dx - 6.0 * std::floor(dx / 6.0) - 3.0;
      double v = dy - 6.0 * std::floor(dy / 6.0) - 3.0;
      return (u * u + v * v <= 4.0) ? pal.b : pal.a;
    }
    default: {
      double t = std::clamp((dx + r) / (2.0 * r + 1e-9), 0.0, 1.0);
      auto mix = [t](uint8_t a, uint8_t b) {
        return (uint8_t)std::lround(a + t * ((double)b - a));
      };
      return {mix(pal.a.r, pal.b.r), mix(pal.a.g, pal.b.g), mix(pal.a.b, pal.b.b)};
    }
  }
}

struct Background {
  double f1x, f1y, p1, f2x, f2y, p2;
  uint8_t at(int x, int y, int ch) const {
    double v = 112.0 + 22.0 * std::sin(f1x * x + f1y * y + p1) +
               16.0 * std::sin(f2x * x - f2y * y + p2 + ch * 0.7);
    return (uint8_t)std::clamp(v, 0.0, 255.0);
  }
};

Background make_background(Rng& rng) {
  Background bg;
  bg.f1x = 0.02 + 0.06 * rng.uniform();
  bg.f1y = 0.02 + 0.06 * rng.uniform();
  bg.p1 = rng.uniform() * 6.28318;
  bg.f2x = 0.05 + 0.1 * rng.uniform();
  bg.f2y = 0.05 + 0.1 * rng.uniform();
  bg.p2 = rng.uniform() * 6.28318;
  return bg;
}

struct Occluder {
  bool active = false;
  bool vertical = true;
  double halfw = 0, start = 0, speed = 0;
  double center(double t) const { return start + speed * t; }
};

void render_frame(int W, int H, int shape, int texture, const Palette& pal,
                  const Background& bg, const std::vector<Instance>& insts,
                  const Occluder& occ, double t, std::vector<uint8_t>& rgb,
                  std::vector<uint8_t>& mask) {
  rgb.assign((size_t)W * H * 3, 0);
  mask.assign((size_t)W * H, 0);
  double scale = std::min(W, H) / 96.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      size_t pi = (size_t)y * W + x;
      Rgb c = {bg.at(x, y, 0), bg.at(x, y, 1), bg.at(x, y, 2)};
      uint8_t fg = 0;
      for (const Instance& in : insts) {
        double r = in.r(t);
        double cx = fold(in.cx(t), r * 0.3, W - r * 0.3);
        double cy = fold(in.cy(t), r * 0.3, H - r * 0.3);
        double dx = x - cx, dy = y - cy;
        if (inside_shape(shape, dx, dy, r)) {
          c = texture_color(texture, pal, dx, dy, r);
          fg = 1;
        }
      }
      if (occ.active) {
        double pos = occ.vertical ? x : y;
        if (std::fabs(pos - occ.center(t)) <= occ.halfw * scale) {
          double s = occ.vertical ? y : x;
          uint8_t v = (uint8_t)(70 + 30 * (((int)std::floor(s / 6.0)) & 1));
          c = {v, v, (uint8_t)(v + 10)};
          fg = 0;
        }
      }
      rgb[pi * 3] = c.r;
      rgb[pi * 3 + 1] = c.g;
      rgb[pi * 3 + 2] = c.b;
      mask[pi] = fg;
    }
}

}  // namespace

void generate_synthetic(const std::string& root, const SynthConfig& cfg,
                        uint64_t seed) {
  namespace fs = std::filesystem;
  if (cfg.categories < 1 || cfg.categories > 12)
    throw std::runtime_error("categories must be 1..12");
  if (cfg.W % 8 || cfg.H % 8)
    throw std::runtime_error("resolution must be divisible by 8");

  Rng master(seed);
  nlohmann::json jcats = nlohmann::json::array();
  nlohmann::json jvids = nlohmann::json::array();

  for (int c = 0; c < cfg.categories; ++c) {
    int shape = c % 4, texture = c % 3;
    jcats.push_back({{"id", c},
                     {"name", category_name(shape, texture)},
                     {"fold", 1 + c / 3}});
  }

  std::vector<uint8_t> rgb, mask;
  char buf[64];
  for (int c = 0; c < cfg.categories; ++c) {
    int shape = c % 4, texture = c % 3;
    Palette pal = category_palette(shape, texture);
    for (int j = 0; j < cfg.videos_per_category; ++j) {
      int ordinal = c * cfg.videos_per_category + j;
      Rng vr = master.child((uint64_t)ordinal + 1);
      std::snprintf(buf, sizeof buf, "v%04d", ordinal);
      std::string vid = buf;
      fs::path vdir = fs::path(root) / "videos" / vid;
      fs::create_directories(vdir / "frames");
      fs::create_directories(vdir / "masks" / std::to_string(c));

      Background bg = make_background(vr);
      int n_inst = 1 + (int)vr.randint(3);
      std::vector<Instance> insts;
      for (int i = 0; i < n_inst; ++i) insts.push_back(make_instance(cfg.W, cfg.H, vr));
      Occluder occ;
      if (vr.uniform() < 0.3) {
        occ.active = true;
        occ.vertical = vr.coin(0.5);
        occ.halfw = 5.0 + 4.0 * vr.uniform();
        double extent = occ.vertical ? cfg.W : cfg.H;
        occ.start = vr.uniform() * extent;
        occ.speed = (vr.coin(0.5) ? 1 : -1) * (1.0 + 2.0 * vr.uniform());
      }

      for (int t = 0; t < cfg.frames; ++t) {
        render_frame(cfg.W, cfg.H, shape, texture, pal, bg, insts, occ, t, rgb,
                     mask);
        std::snprintf(buf, sizeof buf, "%05d.png", t);
        write_png_rgb((vdir / "frames" / buf).string(), cfg.W, cfg.H, rgb.data());
        std::vector<uint8_t> m255(mask.size());
        for (size_t i = 0; i < mask.size(); ++i) m255[i] = mask[i] ? 255 : 0;
        write_png_gray((vdir / "masks" / std::to_string(c) / buf).string(), cfg.W,
                       cfg.H, m255.data());
      }
      jvids.push_back({{"id", vid},
                       {"frames", cfg.frames},
                       {"categories", nlohmann::json::array({c})}});
    }
  }

  nlohmann::json idx = {{"width", cfg.W},
                        {"height", cfg.H},
                        {"categories", jcats},
                        {"videos", jvids}};
  std::ofstream out(fs::path(root) / "index.json");
  out << idx.dump(2) << "\n";
}

std::pair<int, int> pick_reserved_combo(Rng& rng) {
  // combos not used by the video corpus: novel shape or novel texture
  static const int kReserved[][2] = {{4, 0}, {4, 1}, {4, 2}, {4, 3}, {5, 0},
                                     {5, 1}, {5, 2}, {5, 3}, {0, 3}, {1, 3},
                                     {2, 3}, {3, 3}};
  const int* combo = kReserved[rng.randint(12)];
  return {combo[0], combo[1]};
}

ImageSample render_image_category(int shape, int texture, int W, int H,
                                  Rng& rng) {
  Palette pal = category_palette(shape, texture);
  Background bg = make_background(rng);
  int n_inst = 1 + (int)rng.randint(2);
  std::vector<Instance> insts;
  for (int i = 0; i < n_inst; ++i) insts.push_back(make_instance(W, H, rng));

  std::vector<uint8_t> rgb, mask;
  render_frame(W, H, shape, texture, pal, bg, insts, Occluder{}, 0.0, rgb, mask);
  ImageSample s;
  s.rgb = {W, H, 3, std::move(rgb)};
  s.mask.w = W;
  s.mask.h = H;
  s.mask.v = std::move(mask);
  return s;
}

ImageSample render_image_sample(int W, int H, Rng& rng) {
  auto [shape, texture] = pick_reserved_combo(rng);
  return render_image_category(shape, texture, W, H, rng);
}

}  // namespace fsvos
