#include "fsvos/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

namespace fsvos {

namespace fs = std::filesystem;

const CategoryInfo& DatasetIndex::category(int id) const {
  for (const auto& c : categories)
    if (c.id == id) return c;
  throw std::runtime_error("unknown category id " + std::to_string(id));
}

std::vector<int> DatasetIndex::base_categories(int test_fold) const {
  std::vector<int> out;
  for (const auto& c : categories)
    if (c.fold != test_fold) out.push_back(c.id);
  return out;
}

std::vector<int> DatasetIndex::novel_categories(int test_fold) const {
  std::vector<int> out;
  for (const auto& c : categories)
    if (c.fold == test_fold) out.push_back(c.id);
  return out;
}

std::vector<int> DatasetIndex::videos_of_category(int cat) const {
  std::vector<int> out;
  for (size_t i = 0; i < videos.size(); ++i) {
    const auto& cs = videos[i].categories;
    if (std::find(cs.begin(), cs.end(), cat) != cs.end()) out.push_back((int)i);
  }
  return out;
}

std::string DatasetIndex::frame_path(int video_idx, int t) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", t);
  return (fs::path(root) / "videos" / videos[video_idx].id / "frames" / buf)
      .string();
}

std::string DatasetIndex::mask_path(int video_idx, int cat, int t) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", t);
  return (fs::path(root) / "videos" / videos[video_idx].id / "masks" /
          std::to_string(cat) / buf)
      .string();
}

static int count_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) return -1;
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") ++n;
  return n;
}

DatasetIndex build_index(const std::string& root) {
  fs::path ip = fs::path(root) / "index.json";
  std::ifstream in(ip);
  if (!in) throw std::runtime_error("no index.json under " + root);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("bad index.json: " + std::string(e.what()));
  }

  DatasetIndex idx;
  idx.root = root;
  idx.W = j.at("width").get<int>();
  idx.H = j.at("height").get<int>();

  std::set<int> seen_cats;
  for (const auto& jc : j.at("categories")) {
    CategoryInfo c;
    c.id = jc.at("id").get<int>();
    c.name = jc.at("name").get<std::string>();
    c.fold = jc.at("fold").get<int>();
    if (!seen_cats.insert(c.id).second)
      throw std::runtime_error("category " + std::to_string(c.id) +
                               " listed more than once");
    if (c.fold < 1) throw std::runtime_error("fold must be >= 1");
    idx.categories.push_back(c);
  }

  for (const auto& jv : j.at("videos")) {
    VideoInfo v;
    v.id = jv.at("id").get<std::string>();
    v.frames = jv.at("frames").get<int>();
    for (const auto& c : jv.at("categories")) {
      int ci = c.get<int>();
      if (!seen_cats.count(ci))
        throw std::runtime_error("video " + v.id + " names unknown category " +
                                 std::to_string(ci));
      v.categories.push_back(ci);
    }
    idx.videos.push_back(v);
  }
  if (idx.videos.empty()) throw std::runtime_error("no videos found");

  std::sort(idx.videos.begin(), idx.videos.end(),
            [](const VideoInfo& a, const VideoInfo& b) { return a.id < b.id; });
  std::sort(idx.categories.begin(), idx.categories.end(),
            [](const CategoryInfo& a, const CategoryInfo& b) { return a.id < b.id; });

  for (size_t i = 0; i < idx.videos.size(); ++i) {
    const VideoInfo& v = idx.videos[i];
    fs::path vdir = fs::path(root) / "videos" / v.id;
    int nf = count_pngs(vdir / "frames");
    if (nf != v.frames)
      throw std::runtime_error("video " + v.id + ": index says " +
                               std::to_string(v.frames) + " frames, found " +
                               std::to_string(nf));
    for (int c : v.categories) {
      int nm = count_pngs(vdir / "masks" / std::to_string(c));
      if (nm != v.frames)
        throw std::runtime_error("video " + v.id + " category " +
                                 std::to_string(c) +
                                 ": mask/frame count mismatch (" +
                                 std::to_string(nm) + " masks)");
    }
  }
  return idx;
}

FrameData load_frame(const DatasetIndex& idx, int video_idx, int cat, int t) {
  PngBuffer rgb = read_png_rgb(idx.frame_path(video_idx, t));
  PngBuffer gray = read_png_gray(idx.mask_path(video_idx, cat, t));
  if (rgb.w != gray.w || rgb.h != gray.h)
    throw std::runtime_error("frame/mask resolution mismatch in " +
                             idx.videos[video_idx].id);
  FrameData f;
  f.W = rgb.w;
  f.H = rgb.h;
  f.rgb = zeros({3, rgb.h, rgb.w});
  double* d = f.rgb.data();
  size_t plane = (size_t)rgb.w * rgb.h;
  for (size_t i = 0; i < plane; ++i) {
    d[i] = rgb.pixels[i * 3] / 255.0;
    d[plane + i] = rgb.pixels[i * 3 + 1] / 255.0;
    d[2 * plane + i] = rgb.pixels[i * 3 + 2] / 255.0;
  }
  f.mask = to_mask(gray);
  return f;
}

AugmentParams draw_augment(int srcW, int srcH, Rng& rng) {
  AugmentParams ap;
  ap.flip = rng.coin(0.5);
  double s = 0.7 + 0.3 * rng.uniform();
  ap.crop = true;
  ap.cw = std::max(8, (int)std::lround(srcW * s));
  ap.ch = std::max(8, (int)std::lround(srcH * s));
  ap.cw = std::min(ap.cw, srcW);
  ap.ch = std::min(ap.ch, srcH);
  ap.cx = (int)rng.randint((uint64_t)(srcW - ap.cw + 1));
  ap.cy = (int)rng.randint((uint64_t)(srcH - ap.ch + 1));
  return ap;
}

FrameData transform_frame(const FrameData& f, const AugmentParams& ap, int outW,
                          int outH) {
  int cw = ap.crop ? ap.cw : f.W;
  int ch = ap.crop ? ap.ch : f.H;
  int cx = ap.crop ? ap.cx : 0;
  int cy = ap.crop ? ap.cy : 0;

  const double* src = f.rgb.data();
  size_t plane = (size_t)f.W * f.H;

  FrameData out;
  out.W = outW;
  out.H = outH;
  out.rgb = zeros({3, outH, outW});
  double* dst = out.rgb.data();
  size_t oplane = (size_t)outW * outH;

  std::vector<double> cropped((size_t)cw * ch);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x)
        cropped[(size_t)y * cw + x] = src[c * plane + (size_t)(cy + y) * f.W + cx + x];
    std::vector<double> resized =
        bilinear_resize_plane(cropped, ch, cw, outH, outW);
    if (ap.flip) hflip_plane(resized, outH, outW);
    std::copy(resized.begin(), resized.end(), dst + c * oplane);
  }

  std::vector<uint8_t> cm((size_t)cw * ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      cm[(size_t)y * cw + x] = f.mask[(size_t)(cy + y) * f.W + cx + x];
  out.mask = nearest_resize_mask(cm, ch, cw, outH, outW);
  if (ap.flip) hflip_plane(out.mask, outH, outW);
  return out;
}

static bool mask_nonempty(const DatasetIndex& idx, int video_idx, int cat, int t) {
  PngBuffer g = read_png_gray(idx.mask_path(video_idx, cat, t));
  for (uint8_t b : g.pixels)
    if (b) return true;
  return false;
}

static int pick_nonempty_frame(const DatasetIndex& idx, int video_idx, int cat,
                               Rng& rng) {
  int n = idx.videos[video_idx].frames;
  for (int tries = 0; tries < 8; ++tries) {
    int t = (int)rng.randint((uint64_t)n);
    if (mask_nonempty(idx, video_idx, cat, t)) return t;
  }
  for (int t = 0; t < n; ++t)
    if (mask_nonempty(idx, video_idx, cat, t)) return t;
  return -1;
}

void sample_support(const DatasetIndex& idx, int cat, int exclude_video, int K,
                    Rng& rng, std::vector<int>& videos_out,
                    std::vector<int>& frames_out) {
  std::vector<int> cands = idx.videos_of_category(cat);
  cands.erase(std::remove(cands.begin(), cands.end(), exclude_video),
              cands.end());
  rng.shuffle(cands);
  videos_out.clear();
  frames_out.clear();
  for (int v : cands) {
    if ((int)videos_out.size() == K) break;
    int t = pick_nonempty_frame(idx, v, cat, rng);
    if (t < 0) continue;
    videos_out.push_back(v);
    frames_out.push_back(t);
  }
  if ((int)videos_out.size() < K)
    throw std::runtime_error("category " + std::to_string(cat) +
                             " lacks " + std::to_string(K) +
                             " support videos with foreground");
}

std::vector<int> trainable_categories(const DatasetIndex& idx, int test_fold,
                                      int K) {
  std::vector<int> out;
  for (int c : idx.base_categories(test_fold)) {
    if ((int)idx.videos_of_category(c).size() >= K + 1)
      out.push_back(c);
    else
      std::cerr << "warning: category " << c
                << " has too few videos for training, skipped\n";
  }
  return out;
}

EpisodeRef sample_train_episode(const DatasetIndex& idx, int test_fold, int K,
                                Rng& rng) {
  std::vector<int> cats = trainable_categories(idx, test_fold, K);
  if (cats.empty()) throw std::runtime_error("no trainable categories");
  EpisodeRef ref;
  ref.category = cats[rng.randint((uint64_t)cats.size())];
  ref.fold = test_fold;
  std::vector<int> vids = idx.videos_of_category(ref.category);
  ref.query_video = vids[rng.randint((uint64_t)vids.size())];
  sample_support(idx, ref.category, ref.query_video, K, rng, ref.support_videos,
                 ref.support_frames);
  return ref;
}

std::vector<EpisodeRef> eval_episodes_for(const DatasetIndex& idx,
                                          const std::vector<int>& cats,
                                          int test_fold, Protocol protocol,
                                          int K, Rng& rng) {
  std::vector<EpisodeRef> out;
  for (int cat : cats) {
    std::vector<int> vids = idx.videos_of_category(cat);
    if ((int)vids.size() < K + 1) {
      std::cerr << "warning: category " << cat
                << " has too few videos for evaluation, skipped\n";
      continue;
    }
    if (protocol == Protocol::I) {
      std::vector<int> sv, sf;
      sample_support(idx, cat, -1, K, rng, sv, sf);
      for (int v : vids) {
        if (std::find(sv.begin(), sv.end(), v) != sv.end()) continue;
        EpisodeRef ref;
        ref.category = cat;
        ref.fold = test_fold;
        ref.query_video = v;
        ref.support_videos = sv;
        ref.support_frames = sf;
        out.push_back(ref);
      }
    } else {
      for (int v : vids) {
        EpisodeRef ref;
        ref.category = cat;
        ref.fold = test_fold;
        ref.query_video = v;
        sample_support(idx, cat, v, K, rng, ref.support_videos,
                       ref.support_frames);
        out.push_back(ref);
      }
    }
  }
  if (out.empty()) throw std::runtime_error("no evaluable categories in fold");
  return out;
}

std::vector<EpisodeRef> eval_episodes(const DatasetIndex& idx, int test_fold,
                                      Protocol protocol, int K, Rng& rng) {
  return eval_episodes_for(idx, idx.novel_categories(test_fold), test_fold,
                           protocol, K, rng);
}

TrainingClipPlan plan_training_clips(int n_frames, int Tc, int Tm, Rng& rng) {
  if (n_frames < 1) throw std::runtime_error("empty video");
  TrainingClipPlan plan;
  plan.clips.resize(3);

  auto fill = [&](int k, int start, bool wrap) {
    for (int i = 0; i < Tc; ++i)
      plan.clips[k].push_back(wrap ? (start + i) % n_frames : start + i);
  };

  if (n_frames >= 3 * Tc) {
    int slack = n_frames - 3 * Tc;
    int a = (int)rng.randint((uint64_t)(slack + 1));
    int b = (int)rng.randint((uint64_t)(slack + 1));
    int c = (int)rng.randint((uint64_t)(slack + 1));
    int lo = std::min({a, b, c}), hi = std::max({a, b, c});
    int mid = a + b + c - lo - hi;
    fill(0, lo, false);
    fill(1, mid + Tc, false);
    fill(2, hi + 2 * Tc, false);
  } else if (n_frames >= Tc) {
    int span = n_frames - Tc;
    int a = (int)rng.randint((uint64_t)(span + 1));
    int b = (int)rng.randint((uint64_t)(span + 1));
    int c = (int)rng.randint((uint64_t)(span + 1));
    int lo = std::min({a, b, c}), hi = std::max({a, b, c});
    int mid = a + b + c - lo - hi;
    fill(0, lo, false);
    fill(1, mid, false);
    fill(2, hi, false);
  } else {
    std::vector<int> starts = {(int)rng.randint((uint64_t)n_frames),
                               (int)rng.randint((uint64_t)n_frames),
                               (int)rng.randint((uint64_t)n_frames)};
    std::sort(starts.begin(), starts.end());
    for (int k = 0; k < 3; ++k) fill(k, starts[k], true);
  }

  std::vector<int> pool = plan.clips[0];
  pool.insert(pool.end(), plan.clips[1].begin(), plan.clips[1].end());
  int take = std::min<int>(Tm, (int)pool.size());
  if (take > 0) {
    std::vector<int> picks = rng.sample_indices((int)pool.size(), take);
    std::sort(picks.begin(), picks.end());
    for (int p : picks) plan.mem3.push_back(pool[p]);
  }
  return plan;
}

MaterializedEpisode load_eval_episode(const DatasetIndex& idx,
                                      const EpisodeRef& ref, int outW,
                                      int outH) {
  MaterializedEpisode ep;
  ep.ref = ref;
  AugmentParams none;
  for (size_t k = 0; k < ref.support_videos.size(); ++k) {
    FrameData f = load_frame(idx, ref.support_videos[k], ref.category,
                             ref.support_frames[k]);
    ep.support.push_back(transform_frame(f, none, outW, outH));
  }
  int n = idx.videos[ref.query_video].frames;
  for (int t = 0; t < n; ++t) {
    FrameData f = load_frame(idx, ref.query_video, ref.category, t);
    ep.query.push_back(transform_frame(f, none, outW, outH));
  }
  return ep;
}

}  // namespace fsvos
