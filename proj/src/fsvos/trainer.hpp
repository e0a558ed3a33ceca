#pragma once

#include "fsvos/checkpoint.hpp"
#include "fsvos/config.hpp"
#include "fsvos/data.hpp"
#include "fsvos/engine.hpp"
#include "fsvos/losses.hpp"
#include "fsvos/model.hpp"
#include "fsvos/quality.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace fsvos {

struct TrainResult {
  std::string final_checkpoint;
  std::vector<LossReport> steps;  // aggregated per optimizer step
};

// Episodic training: each step is one batch of `batch` distinct-category
// samples, each sample three planned clips with the memory schedule; one
// optimizer step per batch. Logs one JSONL record per step when log != null.
TrainResult train_model(const RunConfig& cfg, const DatasetIndex& idx,
                        const std::string& out_dir, const std::string& resume,
                        std::ostream* log);

// one training sample for the quality regressor
struct IouSample {
  Tensor rgb;                 // {3,H,W}
  MaskGrid mask_full;         // corrupted / predicted mask, full resolution
  double true_iou = 0;        // exact, full resolution
  Tensor support_rgb;         // one reference image of the category
  MaskGrid support_mask_full; // its ground truth
};

IouSample draw_image_regime_sample(int W, int H, Rng& rng);
IouSample draw_video_regime_sample(const DatasetIndex& idx, int test_fold,
                                   Rng& rng);
// runs the segmentation model on one training episode's first clip and emits
// one sample per clip frame with the model's actual predictions
std::vector<IouSample> draw_real_regime_samples(const DatasetIndex& idx,
                                                const RunConfig& cfg,
                                                const VipmtModel& model,
                                                Rng& rng);

struct IouNetEvalStats {
  double spearman = 0, l1 = 0;
  int n = 0;
};

struct IouNetTrainResult {
  IouNetEvalStats held_out;
  std::vector<double> epoch_l1;  // training L1 per epoch
};

// L1 training of the regressor under the configured regime; fills `ps`-backed
// weights in place. idx may be null for the image regime; model only for real.
IouNetTrainResult train_iounet(const RunConfig& cfg, const DatasetIndex* idx,
                               const VipmtModel* model, IouNet& net,
                               ParamStore& ps, std::ostream* log);

IouNetEvalStats eval_iounet(const IouNet& net, bool ssm,
                            const std::function<IouSample(Rng&)>& draw, int n,
                            Rng& rng);

double spearman_rank(const std::vector<double>& a, const std::vector<double>& b);

// shared by trainer and evaluator: score one sample through the regressor
Tensor score_sample(const IouNet& net, bool ssm, const Tensor& rgb,
                    const MaskGrid& mask_full, const Tensor& support_x4,
                    const Tensor& support_mask8);

}  // namespace fsvos
