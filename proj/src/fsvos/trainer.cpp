#include "fsvos/trainer.hpp"

#include "fsvos/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace fsvos {

namespace {

struct SampleData {
  int category = -1;
  InitializedEpisode ep;
  std::vector<std::vector<int>> clip_pos;  // positions into ep.frames
  std::vector<int> mem3_pos;
  std::vector<Tensor> gt8;      // per unique frame {M,1}
  std::vector<Tensor> gt_full;  // per unique frame {H*W,1}
};

SampleData build_train_sample(const VipmtModel& model, const DatasetIndex& idx,
                              const RunConfig& cfg, int category, Rng& rng) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    EpisodeRef ref;
    ref.category = category;
    ref.fold = cfg.fold;
    std::vector<int> vids = idx.videos_of_category(category);
    ref.query_video = vids[rng.randint((uint64_t)vids.size())];
    sample_support(idx, category, ref.query_video, cfg.K, rng,
                   ref.support_videos, ref.support_frames);

    TrainingClipPlan plan = plan_training_clips(
        idx.videos[ref.query_video].frames, cfg.Tc, cfg.Tm, rng);

    std::vector<int> uniq;
    for (const auto& c : plan.clips) uniq.insert(uniq.end(), c.begin(), c.end());
    uniq.insert(uniq.end(), plan.mem3.begin(), plan.mem3.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

    AugmentParams ap;
    if (cfg.augment) ap = draw_augment(idx.W, idx.H, rng);

    std::vector<SupportInput> sups;
    bool support_ok = true;
    for (size_t k = 0; k < ref.support_videos.size(); ++k) {
      FrameData f = load_frame(idx, ref.support_videos[k], category,
                               ref.support_frames[k]);
      FrameData tf = transform_frame(f, ap, cfg.W, cfg.H);
      std::vector<uint8_t> m8 = downsample_mask8(tf.mask, cfg.H, cfg.W);
      if (std::count(m8.begin(), m8.end(), (uint8_t)1) == 0) {
        support_ok = false;  // augmentation cropped the object away; redraw
        break;
      }
      SupportInput si;
      si.mask = tf.mask;
      si.pyr = model.encoder.encode_frame(tf.rgb, (int)k);
      sups.push_back(std::move(si));
    }
    if (!support_ok) continue;

    SampleData sd;
    sd.category = category;
    std::vector<FeaturePyramid> qpyrs;
    for (size_t i = 0; i < uniq.size(); ++i) {
      FrameData f = load_frame(idx, ref.query_video, category, uniq[i]);
      FrameData tf = transform_frame(f, ap, cfg.W, cfg.H);
      qpyrs.push_back(model.encoder.encode_frame(tf.rgb, uniq[i]));
      sd.gt8.push_back(mask_to_tensor(downsample_mask8(tf.mask, cfg.H, cfg.W)));
      sd.gt_full.push_back(mask_to_tensor(tf.mask));
    }
    sd.ep = pa_initialize(model.encoder, model.pa, sups, qpyrs);

    auto pos_of = [&uniq](int frame) {
      return (int)(std::lower_bound(uniq.begin(), uniq.end(), frame) -
                   uniq.begin());
    };
    sd.clip_pos.resize(3);
    for (int p = 0; p < 3; ++p)
      for (int fr : plan.clips[p]) sd.clip_pos[p].push_back(pos_of(fr));
    for (int fr : plan.mem3) sd.mem3_pos.push_back(pos_of(fr));
    return sd;
  }
  throw std::runtime_error("could not build a training sample for category " +
                           std::to_string(category));
}

MemoryBank gt_bank(const SampleData& sd, const std::vector<int>& pos) {
  std::vector<Tensor> feats, masks;
  std::vector<int> ids;
  for (int p : pos) {
    feats.push_back(sd.ep.frames[p].fused);
    masks.push_back(sd.gt8[p]);
    ids.push_back(p);
  }
  return make_bank(feats, masks, ids, true);
}

struct PhaseOut {
  Tensor loss;  // per-sample weighted loss, {1,1}
  LossReport rep;
  std::vector<Tensor> protos;  // g_ci per iteration
  Tensor clip_feats;           // {Tc*M, C} fused features of the clip
  Tensor clip_gt8;             // {Tc*M, 1}
};

PhaseOut run_phase(const VipmtModel& model, const SampleData& sd, int phase,
                   const RunConfig& cfg) {
  const std::vector<int>& pos = sd.clip_pos[phase];
  MemoryBank bank;
  if (cfg.Tm > 0) {
    if (phase == 1) bank = gt_bank(sd, sd.clip_pos[0]);
    else if (phase == 2 && !sd.mem3_pos.empty()) bank = gt_bank(sd, sd.mem3_pos);
  }

  EngineOut res = run_clip(model, sd.ep, pos, bank);

  int tc = (int)pos.size();
  Tensor dice_acc, iou_acc;
  for (int i = 0; i < tc; ++i) {
    Tensor pred = chw_to_mc(res.full_masks[i]);  // {H*W, 1}
    Tensor d = dice_loss(pred, sd.gt_full[pos[i]]);
    Tensor o = soft_iou_loss(pred, sd.gt_full[pos[i]]);
    dice_acc = dice_acc.node ? add(dice_acc, d) : d;
    iou_acc = iou_acc.node ? add(iou_acc, o) : o;
  }
  Tensor dice = mul_scalar(dice_acc, 1.0 / tc);
  Tensor iou = mul_scalar(iou_acc, 1.0 / tc);

  std::vector<Tensor> frame_gts;
  for (int p : pos) frame_gts.push_back(sd.gt8[p]);
  Tensor memory_gt;
  if (!bank.empty()) memory_gt = bank.masks;
  IterationBce bce = iteration_bce(res.trace, sd.ep.support_mask, frame_gts,
                                   memory_gt);

  const LossWeights& w = cfg.weights;
  Tensor loss = mul_scalar(dice, w.dice);
  loss = add(loss, mul_scalar(iou, w.iou));
  loss = add(loss, mul_scalar(bce.support, w.bce_support));
  loss = add(loss, mul_scalar(bce.clip, w.bce_clip));
  loss = add(loss, mul_scalar(bce.frame, w.bce_frame));
  if (bce.has_memory) loss = add(loss, mul_scalar(bce.memory, w.bce_memory));

  PhaseOut out;
  out.loss = loss;
  out.rep.dice = dice.scalar();
  out.rep.iou = iou.scalar();
  out.rep.bce_support = bce.support.scalar();
  out.rep.bce_clip = bce.clip.scalar();
  out.rep.bce_frame = bce.frame.scalar();
  out.rep.bce_memory = bce.has_memory ? bce.memory.scalar() : 0.0;
  for (const auto& it : res.trace.iters) out.protos.push_back(it.g_ci);

  std::vector<Tensor> cf, cg;
  for (int p : pos) {
    cf.push_back(sd.ep.frames[p].fused);
    cg.push_back(sd.gt8[p]);
  }
  out.clip_feats = cf.size() == 1 ? cf[0] : concat_rows(cf);
  out.clip_gt8 = cg.size() == 1 ? cg[0] : concat_rows(cg);
  return out;
}

void write_step_log(std::ostream* log, int epoch, int step,
                    const LossReport& r) {
  if (!log) return;
  nlohmann::json j = {{"epoch", epoch},
                      {"step", step},
                      {"dice", r.dice},
                      {"iou", r.iou},
                      {"bce_support", r.bce_support},
                      {"bce_clip", r.bce_clip},
                      {"bce_frame", r.bce_frame},
                      {"bce_memory", r.bce_memory},
                      {"ccds", r.ccds},
                      {"total", r.total}};
  (*log) << j.dump() << "\n";
  log->flush();
}

}  // namespace

TrainResult train_model(const RunConfig& cfg, const DatasetIndex& idx,
                        const std::string& out_dir, const std::string& resume,
                        std::ostream* log) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  VipmtModel model(model_config(cfg), cfg.seed);
  Adam opt(cfg.lr, cfg.beta1, cfg.beta2);
  Rng train_rng(splitmix64(cfg.seed ^ 0x7261696eull));

  int start_epoch = 0;
  CheckpointData::Group iounet_carry;  // preserved across resumes if present
  bool have_iounet = false;

  if (!resume.empty()) {
    CheckpointData d = load_checkpoint(resume);
    const auto* g = d.find_group("model");
    if (!g) throw std::runtime_error("checkpoint has no model weights");
    unpack_group(*g, model.params(), &opt);
    if (const auto* gi = d.find_group("iounet")) {
      iounet_carry = *gi;
      have_iounet = true;
    }
    for (const auto& [k, v] : d.rng_states)
      if (k == "train") train_rng.load_state(v);
    start_epoch = (int)d.epoch;
    if (d.config_text != config_text(cfg))
      std::cerr << "warning: resuming with a different config\n";
  }

  std::vector<int> cats = trainable_categories(idx, cfg.fold, cfg.K);
  if ((int)cats.size() < cfg.batch)
    throw std::runtime_error(
        "training batch needs " + std::to_string(cfg.batch) +
        " distinct categories but only " + std::to_string(cats.size()) +
        " are usable; lower train.batch or enlarge the dataset");

  TrainResult result;
  auto save = [&](int epoch_done, const std::string& path) {
    CheckpointData d;
    d.config_text = config_text(cfg);
    d.epoch = epoch_done;
    d.groups.push_back(pack_group("model", model.params(), &opt));
    if (have_iounet) d.groups.push_back(iounet_carry);
    d.rng_states = {{"train", train_rng.save_state()}};
    save_checkpoint(path, d);
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<int> order = cats;
      train_rng.shuffle(order);
      order.resize(cfg.batch);

      std::vector<SampleData> samples;
      for (int b = 0; b < cfg.batch; ++b)
        samples.push_back(
            build_train_sample(model, idx, cfg, order[b], train_rng));

      Tensor step_loss;
      LossReport agg;
      for (int phase = 0; phase < 3; ++phase) {
        std::vector<PhaseOut> outs;
        for (const SampleData& sd : samples)
          outs.push_back(run_phase(model, sd, phase, cfg));

        Tensor acc = outs[0].loss;
        for (size_t b = 1; b < outs.size(); ++b) acc = add(acc, outs[b].loss);
        Tensor phase_loss = mul_scalar(acc, 1.0 / outs.size());

        std::vector<std::vector<Tensor>> protos;
        std::vector<Tensor> feats, gts;
        for (const auto& o : outs) {
          protos.push_back(o.protos);
          feats.push_back(o.clip_feats);
          gts.push_back(o.clip_gt8);
        }
        Tensor ccds = ccds_loss(model.mg, protos, feats, gts);
        phase_loss = add(phase_loss, mul_scalar(ccds, cfg.weights.ccds));

        step_loss = step_loss.node ? add(step_loss, phase_loss) : phase_loss;
        for (const auto& o : outs) {
          agg.dice += o.rep.dice;
          agg.iou += o.rep.iou;
          agg.bce_support += o.rep.bce_support;
          agg.bce_clip += o.rep.bce_clip;
          agg.bce_frame += o.rep.bce_frame;
          agg.bce_memory += o.rep.bce_memory;
        }
        agg.ccds += ccds.scalar();
      }
      step_loss = mul_scalar(step_loss, 1.0 / 3.0);

      int denom = 3 * cfg.batch;
      agg.dice /= denom;
      agg.iou /= denom;
      agg.bce_support /= denom;
      agg.bce_clip /= denom;
      agg.bce_frame /= denom;
      agg.bce_memory /= denom;
      agg.ccds /= 3.0;
      agg.total = step_loss.scalar();

      model.params().zero_grads();
      step_loss.backward();
      if (cfg.weight_decay > 0) {
        for (auto& [name, t] : model.params().items())
          if (t.has_grad()) t.node->grad += cfg.weight_decay * t.node->value;
      }
      opt.step(model.params());

      write_step_log(log, epoch, step, agg);
      result.steps.push_back(agg);
    }
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint_epoch_%03d.bin", epoch + 1);
    save(epoch + 1, (fs::path(out_dir) / name).string());
    save(epoch + 1, (fs::path(out_dir) / "latest.bin").string());
  }

  std::string final_path = (fs::path(out_dir) / "final.bin").string();
  save(cfg.epochs, final_path);
  result.final_checkpoint = final_path;
  return result;
}

namespace {

Tensor png_to_tensor(const PngBuffer& b) {
  Tensor t = zeros({3, b.h, b.w});
  double* d = t.data();
  size_t plane = (size_t)b.w * b.h;
  for (size_t i = 0; i < plane; ++i) {
    d[i] = b.pixels[i * 3] / 255.0;
    d[plane + i] = b.pixels[i * 3 + 1] / 255.0;
    d[2 * plane + i] = b.pixels[i * 3 + 2] / 255.0;
  }
  return t;
}

MaskGrid frame_mask_grid(const FrameData& f) {
  MaskGrid g;
  g.w = f.W;
  g.h = f.H;
  g.v = f.mask;
  return g;
}

}  // namespace

IouSample draw_image_regime_sample(int W, int H, Rng& rng) {
  for (int tries = 0; tries < 32; ++tries) {
    auto [shape, texture] = pick_reserved_combo(rng);
    ImageSample q = render_image_category(shape, texture, W, H, rng);
    ImageSample s = render_image_category(shape, texture, W, H, rng);
    if (q.mask.count() == 0 || s.mask.count() == 0) continue;
    Corrupted c = corrupt_mask(q.mask, rng);
    IouSample out;
    out.rgb = png_to_tensor(q.rgb);
    out.mask_full = std::move(c.mask);
    out.true_iou = c.true_iou;
    out.support_rgb = png_to_tensor(s.rgb);
    out.support_mask_full = std::move(s.mask);
    return out;
  }
  throw std::runtime_error("image regime: could not render a usable sample");
}

IouSample draw_video_regime_sample(const DatasetIndex& idx, int test_fold,
                                   Rng& rng) {
  std::vector<int> cats = trainable_categories(idx, test_fold, 1);
  if (cats.empty()) throw std::runtime_error("video regime: no usable categories");
  for (int tries = 0; tries < 64; ++tries) {
    int cat = cats[rng.randint((uint64_t)cats.size())];
    std::vector<int> vids = idx.videos_of_category(cat);
    if (vids.size() < 2) continue;
    int qv = vids[rng.randint((uint64_t)vids.size())];
    int sv = vids[rng.randint((uint64_t)vids.size())];
    if (sv == qv) continue;
    int qt = (int)rng.randint((uint64_t)idx.videos[qv].frames);
    int st = (int)rng.randint((uint64_t)idx.videos[sv].frames);
    FrameData qf = load_frame(idx, qv, cat, qt);
    FrameData sf = load_frame(idx, sv, cat, st);
    MaskGrid qm = frame_mask_grid(qf), sm = frame_mask_grid(sf);
    if (qm.count() == 0 || sm.count() == 0) continue;
    Corrupted c = corrupt_mask(qm, rng);
    IouSample out;
    out.rgb = qf.rgb;
    out.mask_full = std::move(c.mask);
    out.true_iou = c.true_iou;
    out.support_rgb = sf.rgb;
    out.support_mask_full = std::move(sm);
    return out;
  }
  throw std::runtime_error("video regime: could not draw a usable sample");
}

std::vector<IouSample> draw_real_regime_samples(const DatasetIndex& idx,
                                                const RunConfig& cfg,
                                                const VipmtModel& model,
                                                Rng& rng) {
  EpisodeRef ref = sample_train_episode(idx, cfg.fold, cfg.K, rng);
  MaterializedEpisode ep = load_eval_episode(idx, ref, cfg.W, cfg.H);

  NoGrad ng;
  std::vector<SupportInput> sups;
  for (const FrameData& f : ep.support) {
    SupportInput si;
    si.mask = f.mask;
    si.pyr = model.encoder.encode_frame(f.rgb);
    sups.push_back(std::move(si));
  }
  int tc = std::min<int>(cfg.Tc, (int)ep.query.size());
  std::vector<FeaturePyramid> qpyrs;
  std::vector<int> pos;
  for (int i = 0; i < tc; ++i) {
    qpyrs.push_back(model.encoder.encode_frame(ep.query[i].rgb, i));
    pos.push_back(i);
  }
  InitializedEpisode ie = pa_initialize(model.encoder, model.pa, sups, qpyrs);
  EngineOut res = run_clip(model, ie, pos, MemoryBank{});

  std::vector<IouSample> out;
  for (int i = 0; i < tc; ++i) {
    MaskGrid pred;
    pred.w = cfg.W;
    pred.h = cfg.H;
    pred.v.resize((size_t)cfg.W * cfg.H);
    Tensor bin = binarize(res.full_masks[i]);
    const double* d = bin.data();
    for (size_t p = 0; p < pred.v.size(); ++p) pred.v[p] = d[p] > 0.5 ? 1 : 0;

    MaskGrid gt = frame_mask_grid(ep.query[i]);
    IouSample s;
    s.rgb = ep.query[i].rgb;
    s.mask_full = std::move(pred);
    s.true_iou = mask_iou(s.mask_full, gt);
    s.support_rgb = ep.support[0].rgb;
    s.support_mask_full = frame_mask_grid(ep.support[0]);
    out.push_back(std::move(s));
  }
  return out;
}

Tensor score_sample(const IouNet& net, bool ssm, const Tensor& rgb,
                    const MaskGrid& mask_full, const Tensor& support_x4,
                    const Tensor& support_mask8) {
  FeaturePyramid pyr = net.enc.encode_frame(rgb);
  int M = pyr.h() * pyr.w();
  Tensor m8 = mask_to_tensor(downsample_mask8(mask_full.v, mask_full.h, mask_full.w));
  SimilarityMaps maps =
      ssm ? structural_maps(chw_to_mc(pyr.x4), support_x4, m8, support_mask8)
          : zero_maps(M);
  return iou_score(net, pyr, maps, m8);
}

double spearman_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::runtime_error("spearman needs two equal series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<int> ord(v.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(),
              [&v](int i, int j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    size_t i = 0;
    while (i < ord.size()) {
      size_t j = i;
      while (j + 1 < ord.size() && v[ord[j + 1]] == v[ord[i]]) ++j;
      double avg = (i + j) / 2.0 + 1.0;  // average rank over the tie group
      for (size_t k = i; k <= j; ++k) r[ord[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= ra.size();
  mb /= rb.size();
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da <= 0 || db <= 0) return 0.0;
  return num / std::sqrt(da * db);
}

IouNetEvalStats eval_iounet(const IouNet& net, bool ssm,
                            const std::function<IouSample(Rng&)>& draw, int n,
                            Rng& rng) {
  NoGrad ng;
  std::vector<double> pred, truth;
  double l1 = 0;
  for (int i = 0; i < n; ++i) {
    IouSample s = draw(rng);
    FeaturePyramid sp = net.enc.encode_frame(s.support_rgb);
    Tensor sx4 = chw_to_mc(sp.x4);
    Tensor sm8 = mask_to_tensor(downsample_mask8(
        s.support_mask_full.v, s.support_mask_full.h, s.support_mask_full.w));
    double sc = score_sample(net, ssm, s.rgb, s.mask_full, sx4, sm8).scalar();
    pred.push_back(sc);
    truth.push_back(s.true_iou);
    l1 += std::fabs(sc - s.true_iou);
  }
  IouNetEvalStats st;
  st.n = n;
  st.l1 = l1 / n;
  st.spearman = spearman_rank(pred, truth);
  return st;
}

IouNetTrainResult train_iounet(const RunConfig& cfg, const DatasetIndex* idx,
                               const VipmtModel* model, IouNet& net,
                               ParamStore& ps, std::ostream* log) {
  if (cfg.iounet_regime == "real" && !model)
    throw std::runtime_error(
        "regime real needs a trained segmentation model; pass --model");
  if ((cfg.iounet_regime == "real" || cfg.iounet_regime == "video") && !idx)
    throw std::runtime_error("regime " + cfg.iounet_regime +
                             " needs a dataset root");

  Rng rng(splitmix64(cfg.seed ^ 0x696f756eull));
  std::vector<IouSample> real_buffer;
  auto draw = [&](Rng& r) -> IouSample {
    if (cfg.iounet_regime == "image")
      return draw_image_regime_sample(cfg.W, cfg.H, r);
    if (cfg.iounet_regime == "video")
      return draw_video_regime_sample(*idx, cfg.fold, r);
    while (real_buffer.empty()) {
      auto batch = draw_real_regime_samples(*idx, cfg, *model, r);
      real_buffer.insert(real_buffer.end(), batch.begin(), batch.end());
    }
    IouSample s = std::move(real_buffer.back());
    real_buffer.pop_back();
    return s;
  };

  Adam opt(cfg.iounet_lr, cfg.beta1, cfg.beta2);
  IouNetTrainResult result;

  for (int epoch = 0; epoch < cfg.iounet_epochs; ++epoch) {
    double epoch_l1 = 0;
    for (int step = 0; step < cfg.iounet_steps; ++step) {
      Tensor acc;
      for (int b = 0; b < cfg.iounet_batch; ++b) {
        IouSample s = draw(rng);
        FeaturePyramid sp = net.enc.encode_frame(s.support_rgb);
        Tensor sx4 = chw_to_mc(sp.x4);
        Tensor sm8 = mask_to_tensor(downsample_mask8(s.support_mask_full.v,
                                                     s.support_mask_full.h,
                                                     s.support_mask_full.w));
        Tensor sc = score_sample(net, cfg.ssm, s.rgb, s.mask_full, sx4, sm8);
        Tensor l = abs_t(add_scalar(sc, -s.true_iou));
        acc = acc.node ? add(acc, l) : l;
      }
      Tensor loss = mul_scalar(acc, 1.0 / cfg.iounet_batch);
      epoch_l1 += loss.scalar();
      ps.zero_grads();
      loss.backward();
      opt.step(ps);
    }
    epoch_l1 /= cfg.iounet_steps;
    result.epoch_l1.push_back(epoch_l1);
    if (log) {
      nlohmann::json j = {{"epoch", epoch}, {"l1", epoch_l1}};
      (*log) << j.dump() << "\n";
      log->flush();
    }
  }

  Rng eval_rng = rng.child(0xe7a1);
  result.held_out = eval_iounet(net, cfg.ssm, draw, 64, eval_rng);
  if (log) {
    nlohmann::json j = {{"held_out_l1", result.held_out.l1},
                        {"held_out_spearman", result.held_out.spearman}};
    (*log) << j.dump() << "\n";
  }
  return result;
}

}  // namespace fsvos
