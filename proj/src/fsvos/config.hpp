#pragma once

#include "fsvos/losses.hpp"
#include "fsvos/model.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fsvos {

struct RunConfig {
  // model
  int C = 64, L = 5, Tc = 5, Tm = 5;
  bool bidirectional = true;
  bool ssm = true;
  double iou_threshold = 0.8;
  // train
  double lr = 5e-4;
  int batch = 4;
  int epochs = 30;
  int steps_per_epoch = 25;
  uint64_t seed = 1;
  bool augment = true;
  LossWeights weights;
  // optimizer
  double beta1 = 0.9, beta2 = 0.999, weight_decay = 0.0;
  // data
  std::string root;
  int fold = 1;
  std::string protocol = "II";  // or "I"
  int W = 96, H = 96;
  int K = 5;
  // quality regressor training
  std::string iounet_regime = "image";
  int iounet_epochs = 12, iounet_steps = 40, iounet_batch = 4;
  double iounet_lr = 1e-3;
  // eval
  int runs = 5;

  void validate() const;  // throws on out-of-range values
};

// one "key = value" assignment; throws on unknown key or bad value
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// flat dotted key=value file; '#' comments and blank lines allowed
void load_config_file(RunConfig& cfg, const std::string& path);

// same grammar from an in-memory snapshot (checkpoint echo)
void apply_config_text(RunConfig& cfg, const std::string& text);

// complete echo of the effective config, deterministic order
std::vector<std::pair<std::string, std::string>> config_kv(const RunConfig& cfg);
std::string config_text(const RunConfig& cfg);

ModelConfig model_config(const RunConfig& cfg);

// paper-scale preset: full resolution and schedule
void apply_paper_scale(RunConfig& cfg);

std::string format_double(double v);  // shortest exact round-trip form

}  // namespace fsvos
