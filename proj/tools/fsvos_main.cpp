#include "fsvos/checkpoint.hpp"
#include "fsvos/config.hpp"
#include "fsvos/data.hpp"
#include "fsvos/evaluator.hpp"
#include "fsvos/image.hpp"
#include "fsvos/model.hpp"
#include "fsvos/synth.hpp"
#include "fsvos/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fsvos;

namespace {

void parse_resolution(const std::string& s, int& W, int& H) {
  size_t x = s.find('x');
  if (x == std::string::npos)
    throw std::runtime_error("resolution must look like 96x96 (WxH)");
  W = std::stoi(s.substr(0, x));
  H = std::stoi(s.substr(x + 1));
}

// shared config plumbing: defaults < file < --paper-scale < env < --set < flags
struct ConfigCli {
  std::string file;
  std::vector<std::string> sets;
  bool paper_scale = false;
  CLI::App* sub = nullptr;

  // flag-bound copies; applied only when the flag was actually given
  std::string root, protocol, resolution;
  int fold = 0, runs = 0, k = 0;
  uint64_t seed = 0;

  void attach(CLI::App* s) {
    sub = s;
    s->add_option("--config", file, "key = value config file");
    s->add_option("--set", sets, "extra key=value override, repeatable");
    s->add_flag("--paper-scale", paper_scale,
                "full-scale preset: 424x240, 100 epochs, C 256");
    s->add_option("--root", root, "dataset root (or FSVOS_DATA_ROOT)");
    s->add_option("--fold", fold, "held-out fold");
    s->add_option("--seed", seed, "master seed");
    s->add_option("--protocol", protocol, "support protocol, I or II");
    s->add_option("--runs", runs, "evaluation repetitions");
    s->add_option("--k", k, "support shot count");
    s->add_option("--resolution", resolution, "working resolution WxH");
  }

  void build(RunConfig& cfg) const {
    if (!file.empty()) load_config_file(cfg, file);
    if (paper_scale) apply_paper_scale(cfg);
    if (const char* env = std::getenv("FSVOS_DATA_ROOT"))
      if (*env) cfg.root = env;
    for (const std::string& s : sets) {
      size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("--set expects key=value, got '" + s + "'");
      auto trim = [](std::string t) {
        size_t a = t.find_first_not_of(" \t");
        if (a == std::string::npos) return std::string();
        size_t b = t.find_last_not_of(" \t");
        return t.substr(a, b - a + 1);
      };
      apply_kv(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (sub->count("--root")) cfg.root = root;
    if (sub->count("--fold")) cfg.fold = fold;
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--protocol")) apply_kv(cfg, "data.protocol", protocol);
    if (sub->count("--runs")) cfg.runs = runs;
    if (sub->count("--k")) cfg.K = k;
    if (sub->count("--resolution")) parse_resolution(resolution, cfg.W, cfg.H);
    cfg.validate();
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

struct LoadedModel {
  RunConfig cfg;  // checkpoint echo with CLI overrides on top
  CheckpointData ck;
  std::unique_ptr<VipmtModel> model;
  std::unique_ptr<ParamStore> iounet_ps;
  std::unique_ptr<IouNet> iounet;
};

// config precedence when weights exist: checkpoint echo is the new baseline
LoadedModel load_model(const std::string& path, const ConfigCli& cc,
                       bool need_model) {
  LoadedModel lm;
  lm.ck = load_checkpoint(path);
  apply_config_text(lm.cfg, lm.ck.config_text);
  cc.build(lm.cfg);
  const auto* gm = lm.ck.find_group("model");
  if (need_model) {
    if (!gm) throw std::runtime_error(path + " holds no model weights");
    lm.model = std::make_unique<VipmtModel>(model_config(lm.cfg), lm.cfg.seed);
    unpack_group(*gm, lm.model->params(), nullptr);
  }
  if (const auto* gi = lm.ck.find_group("iounet")) {
    lm.iounet_ps = std::make_unique<ParamStore>();
    Rng r(splitmix64(lm.cfg.seed ^ 0x10e7ae77ull));
    lm.iounet = std::make_unique<IouNet>(
        IouNet::make(*lm.iounet_ps, lm.cfg.C, r));
    unpack_group(*gi, *lm.iounet_ps, nullptr);
  }
  return lm;
}

Tensor rgb_buffer_to_tensor(const PngBuffer& b, int W, int H) {
  // per-channel bilinear resize to the working resolution
  Tensor t = zeros({3, H, W});
  double* d = t.data();
  for (int c = 0; c < 3; ++c) {
    std::vector<double> plane((size_t)b.w * b.h);
    for (size_t i = 0; i < plane.size(); ++i)
      plane[i] = b.pixels[i * 3 + c] / 255.0;
    std::vector<double> r =
        b.w == W && b.h == H ? plane
                             : bilinear_resize_plane(plane, b.h, b.w, H, W);
    std::copy(r.begin(), r.end(), d + (size_t)c * W * H);
  }
  return t;
}

int cmd_synth(const std::string& root, SynthConfig sc, uint64_t seed,
              bool force) {
  if (fs::exists(fs::path(root) / "index.json") && !force)
    throw std::runtime_error(root + " already holds a corpus; use --force");
  generate_synthetic(root, sc, seed);
  nlohmann::json gen = {{"seed", seed},
                        {"categories", sc.categories},
                        {"videos_per_category", sc.videos_per_category},
                        {"frames", sc.frames},
                        {"width", sc.W},
                        {"height", sc.H}};
  write_text((fs::path(root) / "generator.json").string(), gen.dump(2) + "\n");
  nlohmann::json out = {{"root", root},
                        {"videos", sc.categories * sc.videos_per_category}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_train(const ConfigCli& cc, const std::string& out_dir,
              const std::string& resume) {
  RunConfig cfg;
  if (!resume.empty()) {
    CheckpointData d = load_checkpoint(resume);
    apply_config_text(cfg, d.config_text);
  }
  cc.build(cfg);
  if (cfg.root.empty()) throw std::runtime_error("no dataset root given");
  DatasetIndex idx = build_index(cfg.root);
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / "config.txt").string(), config_text(cfg));
  std::ofstream log((fs::path(out_dir) / "train_log.jsonl").string(),
                    resume.empty() ? std::ios::binary
                                   : std::ios::binary | std::ios::app);
  TrainResult res = train_model(cfg, idx, out_dir, resume, &log);
  nlohmann::json out = {{"final_checkpoint", res.final_checkpoint},
                        {"steps", (int)res.steps.size()}};
  if (!res.steps.empty()) out["last_total"] = res.steps.back().total;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_train_iounet(const ConfigCli& cc, const std::string& regime,
                     const std::string& model_path, std::string out_path) {
  if (regime != "image" && regime != "video" && regime != "real")
    throw std::runtime_error("regime must be image, video or real");
  if (regime == "real" && model_path.empty())
    throw std::runtime_error("regime real needs --model (trained weights)");
  if (out_path.empty()) out_path = model_path;
  if (out_path.empty())
    throw std::runtime_error("give --out (or --model to update in place)");

  LoadedModel lm;
  if (!model_path.empty()) {
    lm = load_model(model_path, cc, true);
  } else {
    cc.build(lm.cfg);
  }
  RunConfig& cfg = lm.cfg;
  apply_kv(cfg, "iounet.regime", regime);

  DatasetIndex idx;
  bool need_idx = regime != "image";
  if (need_idx) {
    if (cfg.root.empty()) throw std::runtime_error("no dataset root given");
    idx = build_index(cfg.root);
  }

  ParamStore nps;
  Rng r(splitmix64(cfg.seed ^ 0x10e7ae77ull));
  IouNet net = IouNet::make(nps, cfg.C, r);

  std::ofstream log(out_path + ".log.jsonl", std::ios::binary);
  IouNetTrainResult res =
      train_iounet(cfg, need_idx ? &idx : nullptr,
                   lm.model ? lm.model.get() : nullptr, net, nps, &log);

  CheckpointData d;
  d.config_text = config_text(cfg);
  d.epoch = lm.ck.epoch;
  for (const auto& g : lm.ck.groups)
    if (g.name != "iounet") d.groups.push_back(g);
  d.groups.push_back(pack_group("iounet", nps, nullptr));
  d.rng_states = lm.ck.rng_states;
  save_checkpoint(out_path, d);

  nlohmann::json out = {{"out", out_path},
                        {"held_out_l1", res.held_out.l1},
                        {"held_out_spearman", res.held_out.spearman},
                        {"epochs", (int)res.epoch_l1.size()}};
  std::cout << out.dump() << "\n";
  return 0;
}

std::vector<double> parse_threshold_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw std::runtime_error("empty --iou-threshold list");
  return out;
}

int rescore_predictions(const ConfigCli& cc, const std::string& preds_dir,
                        const std::string& video_id, int category,
                        const std::string& out_dir) {
  RunConfig cfg;
  cc.build(cfg);
  if (cfg.root.empty()) throw std::runtime_error("no dataset root given");
  DatasetIndex idx = build_index(cfg.root);
  int vi = -1;
  for (size_t i = 0; i < idx.videos.size(); ++i)
    if (idx.videos[i].id == video_id) vi = (int)i;
  if (vi < 0) throw std::runtime_error("unknown video id " + video_id);

  int n = idx.videos[vi].frames;
  std::vector<MaskGrid> preds, gts;
  for (int t = 0; t < n; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%05d.png", t);
    fs::path p = fs::path(preds_dir) / name;
    if (!fs::exists(p))
      throw std::runtime_error("prediction missing: " + p.string());
    PngBuffer pb = read_png_gray(p.string());
    preds.push_back({pb.w, pb.h, to_mask(pb)});
    PngBuffer gb = read_png_gray(idx.mask_path(vi, category, t));
    gts.push_back({gb.w, gb.h, to_mask(gb)});
    if (pb.w != gb.w || pb.h != gb.h)
      throw std::runtime_error("prediction resolution differs from ground truth");
  }
  VideoScore vs = score_video(preds, gts);
  nlohmann::json out = {{"video", video_id},
                        {"category", category},
                        {"frames", vs.frames},
                        {"j", vs.j},
                        {"f", vs.f},
                        {"vc7", vs.vc7}};
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "rescore.json").string(), out.dump(2) + "\n");
  }
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_eval(const ConfigCli& cc, const std::string& checkpoint,
             const std::string& out_dir, bool oracle, bool empty,
             const std::string& split, const std::string& thresholds,
             const std::string& preds_dir, const std::string& video_id,
             int category) {
  if (!preds_dir.empty()) {
    if (video_id.empty() || category < 0)
      throw std::runtime_error("--preds needs --video and --category");
    return rescore_predictions(cc, preds_dir, video_id, category, out_dir);
  }

  EvalModelKind kind = oracle ? EvalModelKind::oracle
                      : empty ? EvalModelKind::empty
                              : EvalModelKind::real;
  LoadedModel lm;
  if (kind == EvalModelKind::real) {
    if (checkpoint.empty())
      throw std::runtime_error("give --checkpoint (or --oracle / --empty)");
    lm = load_model(checkpoint, cc, true);
  } else {
    cc.build(lm.cfg);
  }
  RunConfig& cfg = lm.cfg;
  if (cfg.root.empty()) throw std::runtime_error("no dataset root given");
  DatasetIndex idx = build_index(cfg.root);

  std::vector<double> thr = thresholds.empty()
                                ? std::vector<double>{cfg.iou_threshold}
                                : parse_threshold_list(thresholds);

  fs::create_directories(out_dir);
  std::ofstream progress((fs::path(out_dir) / "eval_log.jsonl").string(),
                         std::ios::binary);
  nlohmann::json sweep = nlohmann::json::array();
  std::string tables;
  for (double t : thr) {
    cfg.iou_threshold = t;
    cfg.validate();
    EvalReport rep = evaluate(cfg, idx, lm.model.get(), lm.iounet.get(), kind,
                              split, -1.0, &progress);
    nlohmann::json j = nlohmann::json::parse(rep.to_json(cfg, kind));
    j["iou_threshold"] = t;
    sweep.push_back(j);
    if (thr.size() > 1) {
      char row[128];
      std::snprintf(row, sizeof row, "threshold %.2f   J %.4f   F %.4f   VC7 %.4f\n",
                    t, rep.j_mean, rep.f_mean, rep.vc7_mean);
      tables += row;
    } else {
      tables += rep.to_table();
    }
  }
  std::string report_json =
      thr.size() == 1 ? sweep[0].dump(2) : nlohmann::json{{"sweep", sweep}}.dump(2);
  write_text((fs::path(out_dir) / "report.json").string(), report_json + "\n");
  write_text((fs::path(out_dir) / "table.txt").string(), tables);
  write_text((fs::path(out_dir) / "config.txt").string(), config_text(cfg));
  std::cout << tables;
  return 0;
}

int cmd_predict(const ConfigCli& cc, const std::string& checkpoint,
                const std::string& video_dir, const std::string& support_dir,
                const std::string& out_dir) {
  LoadedModel lm = load_model(checkpoint, cc, true);
  RunConfig& cfg = lm.cfg;
  if (cfg.Tm > 0 && !lm.iounet)
    throw std::runtime_error(
        "memory is enabled but the checkpoint has no quality regressor; "
        "run train-iounet first or set model.tm 0");

  std::vector<fs::path> frames;
  for (const auto& e : fs::directory_iterator(video_dir))
    if (e.path().extension() == ".png") frames.push_back(e.path());
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw std::runtime_error("no .png frames in " + video_dir);

  struct SupPair {
    fs::path img, mask;
  };
  std::vector<SupPair> sup_files;
  for (const auto& e : fs::directory_iterator(support_dir)) {
    std::string stem = e.path().stem().string();
    if (e.path().extension() == ".png" && stem.size() > 5 &&
        stem.substr(stem.size() - 5) == "_mask") {
      fs::path img = e.path().parent_path() /
                     (stem.substr(0, stem.size() - 5) + ".png");
      if (!fs::exists(img))
        throw std::runtime_error("support image missing for " +
                                 e.path().string());
      sup_files.push_back({img, e.path()});
    }
  }
  std::sort(sup_files.begin(), sup_files.end(),
            [](const SupPair& a, const SupPair& b) { return a.img < b.img; });
  if (sup_files.empty())
    throw std::runtime_error("no *_mask.png support pairs in " + support_dir);
  if ((int)sup_files.size() != cfg.K)
    std::cerr << "warning: " << sup_files.size() << " supports, configured "
              << cfg.K << "\n";

  NoGrad ng;
  const VipmtModel& model = *lm.model;
  std::vector<SupportInput> sups;
  Tensor sup_x4n, sup_m8n;
  std::vector<Tensor> nxs, nms;
  for (const SupPair& sp : sup_files) {
    PngBuffer ib = read_png_rgb(sp.img.string());
    PngBuffer mb = read_png_gray(sp.mask.string());
    Tensor rgb = rgb_buffer_to_tensor(ib, cfg.W, cfg.H);
    std::vector<uint8_t> mask =
        nearest_resize_mask(to_mask(mb), mb.h, mb.w, cfg.H, cfg.W);
    SupportInput si;
    si.mask = mask;
    si.pyr = model.encoder.encode_frame(rgb);
    sups.push_back(std::move(si));
    if (cfg.Tm > 0) {
      nxs.push_back(chw_to_mc(lm.iounet->enc.encode_frame(rgb).x4));
      nms.push_back(mask_to_tensor(downsample_mask8(mask, cfg.H, cfg.W)));
    }
  }
  if (cfg.Tm > 0) {
    sup_x4n = nxs.size() == 1 ? nxs[0] : concat_rows(nxs);
    sup_m8n = nms.size() == 1 ? nms[0] : concat_rows(nms);
  }

  std::vector<PngBuffer> raw;
  std::vector<FeaturePyramid> qpyrs, npyrs;
  std::vector<Tensor> rgbs;
  for (size_t i = 0; i < frames.size(); ++i) {
    raw.push_back(read_png_rgb(frames[i].string()));
    rgbs.push_back(rgb_buffer_to_tensor(raw.back(), cfg.W, cfg.H));
    qpyrs.push_back(model.encoder.encode_frame(rgbs.back(), (int)i));
  }
  InitializedEpisode ie = pa_initialize(model.encoder, model.pa, sups, qpyrs);
  npyrs.resize(frames.size());
  std::vector<char> have(frames.size(), 0);
  int M = ie.h * ie.w;
  auto score_fn = [&](int fi, const Tensor& mask8) -> double {
    if (cfg.Tm == 0) return 0.0;
    if (!have[fi]) {
      npyrs[fi] = lm.iounet->enc.encode_frame(rgbs[fi]);
      have[fi] = 1;
    }
    SimilarityMaps maps =
        cfg.ssm ? structural_maps(chw_to_mc(npyrs[fi].x4), sup_x4n, mask8,
                                  sup_m8n)
                : zero_maps(M);
    return iou_score(*lm.iounet, npyrs[fi], maps, mask8).scalar();
  };
  Rng rng(splitmix64(cfg.seed ^ 0x70726564ull));
  VideoResult vr = run_video(model, ie, score_fn, rng);

  fs::create_directories(fs::path(out_dir) / "masks");
  fs::create_directories(fs::path(out_dir) / "overlay");
  nlohmann::json scores = nlohmann::json::array();
  for (size_t i = 0; i < frames.size(); ++i) {
    Tensor bin = binarize(vr.full_masks[i]);
    const double* d = bin.data();
    std::vector<uint8_t> m((size_t)cfg.W * cfg.H);
    for (size_t p = 0; p < m.size(); ++p) m[p] = d[p] > 0.5 ? 1 : 0;
    const PngBuffer& rb = raw[i];
    std::vector<uint8_t> up = nearest_resize_mask(m, cfg.H, cfg.W, rb.h, rb.w);

    char name[32];
    std::snprintf(name, sizeof name, "%05d.png", (int)i);
    std::vector<uint8_t> out255(up.size());
    for (size_t p = 0; p < up.size(); ++p) out255[p] = up[p] ? 255 : 0;
    write_png_gray((fs::path(out_dir) / "masks" / name).string(), rb.w, rb.h,
                   out255.data());

    std::vector<uint8_t> ov = rb.pixels;
    for (size_t p = 0; p < up.size(); ++p)
      if (up[p]) {
        ov[p * 3] = (uint8_t)((ov[p * 3] + 255) / 2);
        ov[p * 3 + 1] /= 2;
        ov[p * 3 + 2] /= 2;
      }
    write_png_rgb((fs::path(out_dir) / "overlay" / name).string(), rb.w, rb.h,
                  ov.data());
    scores.push_back(vr.scores[i]);
  }
  write_text((fs::path(out_dir) / "config.txt").string(), config_text(cfg));
  write_text((fs::path(out_dir) / "scores.json").string(),
             nlohmann::json{{"iou_scores", scores}}.dump(2) + "\n");
  nlohmann::json out = {{"out", out_dir}, {"frames", (int)frames.size()}};
  std::cout << out.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot video object segmentation with temporal prototypes"};
  app.require_subcommand(1);

  // synth
  auto* s_synth = app.add_subcommand("synth", "generate the synthetic corpus");
  std::string sy_root, sy_res = "96x96";
  SynthConfig sc;
  uint64_t sy_seed = 7;
  bool sy_force = false;
  s_synth->add_option("--root", sy_root, "output directory")->required();
  s_synth->add_option("--seed", sy_seed, "generator seed");
  s_synth->add_option("--categories", sc.categories, "category count, up to 12");
  s_synth->add_option("--videos-per-category", sc.videos_per_category, "");
  s_synth->add_option("--frames", sc.frames, "frames per video");
  s_synth->add_option("--resolution", sy_res, "frame size WxH");
  s_synth->add_flag("--force", sy_force, "overwrite an existing corpus");

  // train
  auto* s_train = app.add_subcommand("train", "episodic training");
  ConfigCli cc_train;
  cc_train.attach(s_train);
  std::string tr_out = "runs/train", tr_resume;
  int tr_epochs = 0, tr_steps = 0, tr_batch = 0, tr_tc = -1, tr_tm = -1;
  double tr_lr = 0;
  std::string tr_comm, tr_ssm;
  s_train->add_option("--out", tr_out, "run directory");
  s_train->add_option("--resume", tr_resume, "checkpoint to continue from");
  s_train->add_option("--epochs", tr_epochs, "");
  s_train->add_option("--steps-per-epoch", tr_steps, "");
  s_train->add_option("--batch", tr_batch, "distinct-category batch size");
  s_train->add_option("--lr", tr_lr, "");
  s_train->add_option("--tc", tr_tc, "clip length");
  s_train->add_option("--tm", tr_tm, "memory size, 0 disables");
  s_train->add_option("--communication", tr_comm, "bidirectional or one_way");
  s_train->add_option("--ssm", tr_ssm, "on or off");

  // train-iounet
  auto* s_iou = app.add_subcommand("train-iounet", "train the quality regressor");
  ConfigCli cc_iou;
  cc_iou.attach(s_iou);
  std::string io_regime = "image", io_model, io_out;
  int io_epochs = 0, io_steps = 0, io_batch = 0;
  double io_lr = 0;
  s_iou->add_option("--regime", io_regime, "image, video or real");
  s_iou->add_option("--model", io_model, "checkpoint with trained weights");
  s_iou->add_option("--out", io_out, "output checkpoint (default: --model)");
  s_iou->add_option("--epochs", io_epochs, "");
  s_iou->add_option("--steps-per-epoch", io_steps, "");
  s_iou->add_option("--batch", io_batch, "");
  s_iou->add_option("--lr", io_lr, "");

  // eval
  auto* s_eval = app.add_subcommand("eval", "score a checkpoint on the corpus");
  ConfigCli cc_eval;
  cc_eval.attach(s_eval);
  std::string ev_ckpt, ev_out = "runs/eval", ev_split = "novel", ev_thr;
  std::string ev_preds, ev_video;
  int ev_cat = -1;
  bool ev_oracle = false, ev_empty = false;
  std::string ev_ssm;
  s_eval->add_option("--checkpoint", ev_ckpt, "trained weights");
  s_eval->add_option("--out", ev_out, "report directory");
  s_eval->add_option("--split", ev_split, "novel (default) or train categories");
  s_eval->add_option("--iou-threshold", ev_thr,
                     "memory admission threshold, comma list sweeps");
  s_eval->add_flag("--oracle", ev_oracle, "score the ground truth against itself");
  s_eval->add_flag("--empty", ev_empty, "score all-background predictions");
  s_eval->add_option("--ssm", ev_ssm, "on or off");
  s_eval->add_option("--preds", ev_preds, "re-score saved prediction masks");
  s_eval->add_option("--video", ev_video, "video id for --preds");
  s_eval->add_option("--category", ev_cat, "category id for --preds");

  // predict
  auto* s_pred = app.add_subcommand("predict", "segment a frame directory");
  ConfigCli cc_pred;
  cc_pred.attach(s_pred);
  std::string pr_ckpt, pr_video, pr_support, pr_out = "runs/predict";
  s_pred->add_option("--checkpoint", pr_ckpt, "trained weights")->required();
  s_pred->add_option("--video", pr_video, "directory of frame PNGs")->required();
  s_pred->add_option("--support", pr_support,
                     "directory of X.png + X_mask.png pairs")
      ->required();
  s_pred->add_option("--out", pr_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }

  try {
    if (app.got_subcommand(s_synth)) {
      parse_resolution(sy_res, sc.W, sc.H);
      return cmd_synth(sy_root, sc, sy_seed, sy_force);
    }
    if (app.got_subcommand(s_train)) {
      if (s_train->count("--epochs"))
        cc_train.sets.push_back("train.epochs=" + std::to_string(tr_epochs));
      if (s_train->count("--steps-per-epoch"))
        cc_train.sets.push_back("train.steps_per_epoch=" +
                                std::to_string(tr_steps));
      if (s_train->count("--batch"))
        cc_train.sets.push_back("train.batch=" + std::to_string(tr_batch));
      if (s_train->count("--lr"))
        cc_train.sets.push_back("train.lr=" + format_double(tr_lr));
      if (s_train->count("--tc"))
        cc_train.sets.push_back("model.tc=" + std::to_string(tr_tc));
      if (s_train->count("--tm"))
        cc_train.sets.push_back("model.tm=" + std::to_string(tr_tm));
      if (s_train->count("--communication"))
        cc_train.sets.push_back("model.communication=" + tr_comm);
      if (s_train->count("--ssm"))
        cc_train.sets.push_back("model.ssm=" + tr_ssm);
      return cmd_train(cc_train, tr_out, tr_resume);
    }
    if (app.got_subcommand(s_iou)) {
      if (s_iou->count("--epochs"))
        cc_iou.sets.push_back("iounet.epochs=" + std::to_string(io_epochs));
      if (s_iou->count("--steps-per-epoch"))
        cc_iou.sets.push_back("iounet.steps_per_epoch=" +
                              std::to_string(io_steps));
      if (s_iou->count("--batch"))
        cc_iou.sets.push_back("iounet.batch=" + std::to_string(io_batch));
      if (s_iou->count("--lr"))
        cc_iou.sets.push_back("iounet.lr=" + format_double(io_lr));
      return cmd_train_iounet(cc_iou, io_regime, io_model, io_out);
    }
    if (app.got_subcommand(s_eval)) {
      if (ev_oracle && ev_empty)
        throw std::runtime_error("--oracle and --empty are exclusive");
      if (s_eval->count("--ssm"))
        cc_eval.sets.push_back("model.ssm=" + ev_ssm);
      return cmd_eval(cc_eval, ev_ckpt, ev_out, ev_oracle, ev_empty, ev_split,
                      ev_thr, ev_preds, ev_video, ev_cat);
    }
    if (app.got_subcommand(s_pred))
      return cmd_predict(cc_pred, pr_ckpt, pr_video, pr_support, pr_out);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
