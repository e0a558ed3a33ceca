#pragma once

#include "fsvos/image.hpp"
#include "fsvos/rng.hpp"
#include "fsvos/tensor.hpp"

#include <string>
#include <vector>

namespace fsvos {

struct CategoryInfo {
  int id = -1;
  std::string name;
  int fold = 0;
};

struct VideoInfo {
  std::string id;
  int frames = 0;
  std::vector<int> categories;
};

struct DatasetIndex {
  std::string root;
  int W = 0, H = 0;
  std::vector<CategoryInfo> categories;
  std::vector<VideoInfo> videos;

  const CategoryInfo& category(int id) const;
  std::vector<int> base_categories(int test_fold) const;   // train side
  std::vector<int> novel_categories(int test_fold) const;  // held-out side
  std::vector<int> videos_of_category(int cat) const;      // indices into videos
  std::string frame_path(int video_idx, int t) const;
  std::string mask_path(int video_idx, int cat, int t) const;
};

DatasetIndex build_index(const std::string& root);

struct FrameData {
  Tensor rgb;                 // {3,H,W} scaled to [0,1]
  std::vector<uint8_t> mask;  // 0/1, same resolution
  int W = 0, H = 0;
};

FrameData load_frame(const DatasetIndex& idx, int video_idx, int cat, int t);

// one geometric transform shared by every frame of a sample
struct AugmentParams {
  bool flip = false;
  bool crop = false;
  int cx = 0, cy = 0, cw = 0, ch = 0;
};

AugmentParams draw_augment(int srcW, int srcH, Rng& rng);
FrameData transform_frame(const FrameData& f, const AugmentParams& ap, int outW,
                          int outH);

struct EpisodeRef {
  int category = -1, fold = 0;
  int query_video = -1;
  std::vector<int> support_videos;
  std::vector<int> support_frames;
};

// K support (video, frame) pairs with non-empty masks, each from a different
// video of the category, never the excluded video
void sample_support(const DatasetIndex& idx, int cat, int exclude_video, int K,
                    Rng& rng, std::vector<int>& videos_out,
                    std::vector<int>& frames_out);

// categories of the training side having enough distinct videos
std::vector<int> trainable_categories(const DatasetIndex& idx, int test_fold,
                                      int K);

EpisodeRef sample_train_episode(const DatasetIndex& idx, int test_fold, int K,
                                Rng& rng);

enum class Protocol { I, II };

// deterministic enumeration of one run's evaluation episodes over the fold's
// novel categories; protocol I fixes one support per category, II resamples
// per query video
std::vector<EpisodeRef> eval_episodes(const DatasetIndex& idx, int test_fold,
                                      Protocol protocol, int K, Rng& rng);

// same enumeration over an explicit category list (e.g. the training side)
std::vector<EpisodeRef> eval_episodes_for(const DatasetIndex& idx,
                                          const std::vector<int>& cats,
                                          int test_fold, Protocol protocol,
                                          int K, Rng& rng);

struct TrainingClipPlan {
  std::vector<std::vector<int>> clips;  // three ordered frame-index runs
  std::vector<int> mem3;                // memory frames for the third clip
};

// three temporally ordered clips (disjoint when the video is long enough,
// loop-padded when shorter than one clip) plus the third clip's memory draw
TrainingClipPlan plan_training_clips(int n_frames, int Tc, int Tm, Rng& rng);

struct MaterializedEpisode {
  EpisodeRef ref;
  std::vector<FrameData> support;
  std::vector<FrameData> query;  // every frame of the query video, in order
};

MaterializedEpisode load_eval_episode(const DatasetIndex& idx,
                                      const EpisodeRef& ref, int outW, int outH);

}  // namespace fsvos
