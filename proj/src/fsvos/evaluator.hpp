#pragma once

#include "fsvos/config.hpp"
#include "fsvos/data.hpp"
#include "fsvos/engine.hpp"
#include "fsvos/metrics.hpp"
#include "fsvos/model.hpp"
#include "fsvos/quality.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace fsvos {

// real runs the network; oracle answers with the ground truth and empty with
// all-background — both bypass the model entirely (harness self-tests).
enum class EvalModelKind { real, oracle, empty };

struct EvalRun {
  uint64_t seed = 0;
  double j = 0, f = 0, vc7 = 0;
  int videos = 0;
  std::vector<double> per_video_j;  // kept for variance diagnostics
};

struct EvalReport {
  std::string protocol;  // "I" or "II"
  std::string split;     // "novel" or "train"
  int fold = 0;
  std::vector<EvalRun> runs;        // one per repetition
  std::vector<uint64_t> seeds;
  double j_mean = 0, f_mean = 0, vc7_mean = 0;  // averaged over runs

  std::string to_json(const RunConfig& cfg, EvalModelKind kind) const;
  std::string to_table() const;
};

// Scores every episode of the fold's chosen split, `cfg.runs` times with
// per-run seeds, and averages. model/iounet may be null for oracle/empty.
// With memory enabled a real evaluation needs the quality regressor.
EvalReport evaluate(const RunConfig& cfg, const DatasetIndex& idx,
                    const VipmtModel* model, const IouNet* iounet,
                    EvalModelKind kind, const std::string& split,
                    double boundary_tol, std::ostream* progress);

const char* kind_name(EvalModelKind k);

}  // namespace fsvos
