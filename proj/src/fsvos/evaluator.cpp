#include "fsvos/evaluator.hpp"

#include <json.hpp>

#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace fsvos {

namespace {

VideoScore score_episode(const RunConfig& cfg, const DatasetIndex& idx,
                         const VipmtModel* model, const IouNet* iounet,
                         EvalModelKind kind, const EpisodeRef& ref, Rng& rng,
                         double boundary_tol) {
  MaterializedEpisode me = load_eval_episode(idx, ref, cfg.W, cfg.H);
  int N = (int)me.query.size();
  std::vector<MaskGrid> gts, preds;
  for (const FrameData& f : me.query) gts.push_back({f.W, f.H, f.mask});

  if (kind == EvalModelKind::oracle) {
    preds = gts;
  } else if (kind == EvalModelKind::empty) {
    for (int i = 0; i < N; ++i) preds.push_back(MaskGrid::zeros(cfg.W, cfg.H));
  } else {
    NoGrad ng;
    std::vector<SupportInput> sups;
    for (const FrameData& f : me.support) {
      SupportInput si;
      si.mask = f.mask;
      si.pyr = model->encoder.encode_frame(f.rgb);
      sups.push_back(std::move(si));
    }
    std::vector<FeaturePyramid> qpyrs;
    for (int i = 0; i < N; ++i)
      qpyrs.push_back(model->encoder.encode_frame(me.query[i].rgb, i));
    InitializedEpisode ie = pa_initialize(model->encoder, model->pa, sups, qpyrs);

    // lazy per-frame pyramids under the regressor's own backbone
    std::vector<FeaturePyramid> npyr(N);
    std::vector<char> have(N, 0);
    Tensor sup_x4, sup_m8;
    int M = ie.h * ie.w;
    if (cfg.Tm > 0) {
      std::vector<Tensor> xs, ms;
      for (const FrameData& f : me.support) {
        xs.push_back(chw_to_mc(iounet->enc.encode_frame(f.rgb).x4));
        ms.push_back(mask_to_tensor(downsample_mask8(f.mask, f.H, f.W)));
      }
      sup_x4 = xs.size() == 1 ? xs[0] : concat_rows(xs);
      sup_m8 = ms.size() == 1 ? ms[0] : concat_rows(ms);
    }
    auto score_fn = [&](int fi, const Tensor& mask8_bin) -> double {
      if (cfg.Tm == 0) return 0.0;
      if (!have[fi]) {
        npyr[fi] = iounet->enc.encode_frame(me.query[fi].rgb);
        have[fi] = 1;
      }
      SimilarityMaps maps =
          cfg.ssm ? structural_maps(chw_to_mc(npyr[fi].x4), sup_x4, mask8_bin,
                                    sup_m8)
                  : zero_maps(M);
      return iou_score(*iounet, npyr[fi], maps, mask8_bin).scalar();
    };

    VideoResult vr = run_video(*model, ie, score_fn, rng);
    for (int i = 0; i < N; ++i) {
      MaskGrid p;
      p.w = cfg.W;
      p.h = cfg.H;
      p.v.resize((size_t)cfg.W * cfg.H);
      Tensor bin = binarize(vr.full_masks[i]);
      const double* d = bin.data();
      for (size_t px = 0; px < p.v.size(); ++px) p.v[px] = d[px] > 0.5 ? 1 : 0;
      preds.push_back(std::move(p));
    }
  }
  return score_video(preds, gts, boundary_tol);
}

}  // namespace

const char* kind_name(EvalModelKind k) {
  switch (k) {
    case EvalModelKind::oracle: return "oracle";
    case EvalModelKind::empty: return "empty";
    default: return "real";
  }
}

EvalReport evaluate(const RunConfig& cfg, const DatasetIndex& idx,
                    const VipmtModel* model, const IouNet* iounet,
                    EvalModelKind kind, const std::string& split,
                    double boundary_tol, std::ostream* progress) {
  cfg.validate();
  if (split != "novel" && split != "train")
    throw std::runtime_error("split must be novel or train");
  Protocol proto = cfg.protocol == "I" ? Protocol::I : Protocol::II;
  std::vector<int> cats = split == "train" ? idx.base_categories(cfg.fold)
                                           : idx.novel_categories(cfg.fold);
  if (kind == EvalModelKind::real) {
    if (!model) throw std::runtime_error("evaluation needs model weights");
    if (cfg.Tm > 0 && !iounet)
      throw std::runtime_error(
          "memory is enabled but no quality regressor weights are loaded; "
          "run train-iounet first or set model.tm 0");
  }

  EvalReport rep;
  rep.protocol = cfg.protocol;
  rep.split = split;
  rep.fold = cfg.fold;

  for (int r = 0; r < cfg.runs; ++r) {
    uint64_t run_seed = cfg.seed + (uint64_t)r;
    Rng rng(splitmix64(run_seed ^ 0x6576616cull));
    std::vector<EpisodeRef> eps =
        eval_episodes_for(idx, cats, cfg.fold, proto, cfg.K, rng);

    EvalRun run;
    run.seed = run_seed;
    for (size_t e = 0; e < eps.size(); ++e) {
      Rng ep_rng = rng.child(1000 + e);
      VideoScore vs = score_episode(cfg, idx, model, iounet, kind, eps[e],
                                    ep_rng, boundary_tol);
      run.j += vs.j;
      run.f += vs.f;
      run.vc7 += vs.vc7;
      run.per_video_j.push_back(vs.j);
      ++run.videos;
    }
    run.j /= run.videos;
    run.f /= run.videos;
    run.vc7 /= run.videos;
    rep.runs.push_back(run);
    rep.seeds.push_back(run_seed);
    if (progress) {
      nlohmann::json j = {{"run", r},         {"seed", run_seed},
                          {"videos", run.videos}, {"j", run.j},
                          {"f", run.f},       {"vc7", run.vc7}};
      (*progress) << j.dump() << "\n";
      progress->flush();
    }
  }

  for (const EvalRun& r : rep.runs) {
    rep.j_mean += r.j;
    rep.f_mean += r.f;
    rep.vc7_mean += r.vc7;
  }
  rep.j_mean /= rep.runs.size();
  rep.f_mean /= rep.runs.size();
  rep.vc7_mean /= rep.runs.size();
  return rep;
}

std::string EvalReport::to_json(const RunConfig& cfg, EvalModelKind kind) const {
  nlohmann::json j;
  j["model"] = kind_name(kind);
  j["protocol"] = protocol;
  j["split"] = split;
  j["runs"] = (int)runs.size();
  j["seeds"] = seeds;
  j["folds"] = nlohmann::json::array(
      {{{"fold", fold}, {"j", j_mean}, {"f", f_mean}, {"vc7", vc7_mean}}});
  j["j_mean"] = j_mean;
  j["f_mean"] = f_mean;
  j["vc7_mean"] = vc7_mean;
  nlohmann::json runs_j = nlohmann::json::array();
  for (const EvalRun& r : runs)
    runs_j.push_back({{"seed", r.seed},
                      {"j", r.j},
                      {"f", r.f},
                      {"vc7", r.vc7},
                      {"videos", r.videos}});
  j["per_run"] = runs_j;
  nlohmann::json conf = nlohmann::json::object();
  for (const auto& [k, v] : config_kv(cfg)) conf[k] = v;
  j["config"] = conf;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  char buf[256];
  std::string out;
  out += "fold      J        F        VC7\n";
  std::snprintf(buf, sizeof buf, "%-8d  %.4f   %.4f   %.4f\n", fold, j_mean,
                f_mean, vc7_mean);
  out += buf;
  std::snprintf(buf, sizeof buf, "mean      %.4f   %.4f   mVC7 %.4f\n", j_mean,
                f_mean, vc7_mean);
  out += buf;
  std::snprintf(buf, sizeof buf, "protocol %s, split %s, %d runs\n",
                protocol.c_str(), split.c_str(), (int)runs.size());
  out += buf;
  return out;
}

}  // namespace fsvos
