#include "fsvos/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fsvos {

std::string format_double(double v) {
  // shortest decimal that parses back to the same double
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) return buf;
  }
  return "0";
}

void RunConfig::validate() const {
  if (C < 4 || C % 4) throw std::runtime_error("model.c must be a positive multiple of 4");
  if (L < 1) throw std::runtime_error("model.l must be >= 1");
  if (Tc < 1) throw std::runtime_error("model.tc must be >= 1");
  if (Tm < 0) throw std::runtime_error("model.tm must be >= 0");
  if (iou_threshold < 0 || iou_threshold > 1.01)
    throw std::runtime_error("model.iou_threshold must be in [0,1]");
  if (batch < 1) throw std::runtime_error("train.batch must be >= 1");
  if (W % 8 || H % 8 || W < 16 || H < 16)
    throw std::runtime_error("resolution must be divisible by 8");
  if (K < 1) throw std::runtime_error("data.k must be >= 1");
  if (protocol != "I" && protocol != "II")
    throw std::runtime_error("data.protocol must be I or II");
  if (iounet_regime != "real" && iounet_regime != "video" &&
      iounet_regime != "image")
    throw std::runtime_error("iounet.regime must be real, video or image");
  if (runs < 1) throw std::runtime_error("eval.runs must be >= 1");
}

namespace {

int to_int(const std::string& v) {
  size_t pos = 0;
  int r = std::stoi(v, &pos);
  if (pos != v.size()) throw std::runtime_error("bad integer '" + v + "'");
  return r;
}

uint64_t to_u64(const std::string& v) {
  size_t pos = 0;
  uint64_t r = std::stoull(v, &pos);
  if (pos != v.size()) throw std::runtime_error("bad integer '" + v + "'");
  return r;
}

double to_double(const std::string& v) {
  size_t pos = 0;
  double r = std::stod(v, &pos);
  if (pos != v.size()) throw std::runtime_error("bad number '" + v + "'");
  return r;
}

bool to_onoff(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw std::runtime_error("expected on or off, got '" + v + "'");
}

void parse_resolution(const std::string& v, int& W, int& H) {
  size_t x = v.find('x');
  if (x == std::string::npos)
    throw std::runtime_error("resolution must look like 96x96 (WxH)");
  W = to_int(v.substr(0, x));
  H = to_int(v.substr(x + 1));
}

}  // namespace

void apply_kv(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "model.c") c.C = to_int(v);
  else if (key == "model.l") c.L = to_int(v);
  else if (key == "model.tc") c.Tc = to_int(v);
  else if (key == "model.tm") c.Tm = to_int(v);
  else if (key == "model.communication") {
    if (v == "bidirectional") c.bidirectional = true;
    else if (v == "one_way") c.bidirectional = false;
    else throw std::runtime_error("model.communication must be bidirectional or one_way");
  } else if (key == "model.ssm") c.ssm = to_onoff(v);
  else if (key == "model.iou_threshold") c.iou_threshold = to_double(v);
  else if (key == "train.lr") c.lr = to_double(v);
  else if (key == "train.batch") c.batch = to_int(v);
  else if (key == "train.epochs") c.epochs = to_int(v);
  else if (key == "train.steps_per_epoch") c.steps_per_epoch = to_int(v);
  else if (key == "train.seed") c.seed = to_u64(v);
  else if (key == "train.augment") c.augment = to_onoff(v);
  else if (key == "train.w_dice") c.weights.dice = to_double(v);
  else if (key == "train.w_iou") c.weights.iou = to_double(v);
  else if (key == "train.w_bce_support") c.weights.bce_support = to_double(v);
  else if (key == "train.w_bce_clip") c.weights.bce_clip = to_double(v);
  else if (key == "train.w_bce_frame") c.weights.bce_frame = to_double(v);
  else if (key == "train.w_bce_memory") c.weights.bce_memory = to_double(v);
  else if (key == "train.w_ccds") c.weights.ccds = to_double(v);
  else if (key == "optimizer.beta1") c.beta1 = to_double(v);
  else if (key == "optimizer.beta2") c.beta2 = to_double(v);
  else if (key == "optimizer.weight_decay") c.weight_decay = to_double(v);
  else if (key == "data.root") c.root = v;
  else if (key == "data.fold") c.fold = to_int(v);
  else if (key == "data.protocol") c.protocol = v;
  else if (key == "data.resolution") parse_resolution(v, c.W, c.H);
  else if (key == "data.k") c.K = to_int(v);
  else if (key == "iounet.regime") c.iounet_regime = v;
  else if (key == "iounet.epochs") c.iounet_epochs = to_int(v);
  else if (key == "iounet.steps_per_epoch") c.iounet_steps = to_int(v);
  else if (key == "iounet.batch") c.iounet_batch = to_int(v);
  else if (key == "iounet.lr") c.iounet_lr = to_double(v);
  else if (key == "eval.runs") c.runs = to_int(v);
  else throw std::runtime_error("unknown config key '" + key + "'");
}

static void parse_config_stream(RunConfig& cfg, std::istream& in,
                                const std::string& where) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(where + ":" + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    try {
      apply_kv(cfg, key, val);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  parse_config_stream(cfg, in, path);
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  parse_config_stream(cfg, in, "<config>");
}

std::vector<std::pair<std::string, std::string>> config_kv(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  auto add = [&kv](const char* k, const std::string& v) { kv.emplace_back(k, v); };
  add("model.c", std::to_string(c.C));
  add("model.l", std::to_string(c.L));
  add("model.tc", std::to_string(c.Tc));
  add("model.tm", std::to_string(c.Tm));
  add("model.communication", c.bidirectional ? "bidirectional" : "one_way");
  add("model.ssm", c.ssm ? "on" : "off");
  add("model.iou_threshold", format_double(c.iou_threshold));
  add("train.lr", format_double(c.lr));
  add("train.batch", std::to_string(c.batch));
  add("train.epochs", std::to_string(c.epochs));
  add("train.steps_per_epoch", std::to_string(c.steps_per_epoch));
  add("train.seed", std::to_string(c.seed));
  add("train.augment", c.augment ? "on" : "off");
  add("train.w_dice", format_double(c.weights.dice));
  add("train.w_iou", format_double(c.weights.iou));
  add("train.w_bce_support", format_double(c.weights.bce_support));
  add("train.w_bce_clip", format_double(c.weights.bce_clip));
  add("train.w_bce_frame", format_double(c.weights.bce_frame));
  add("train.w_bce_memory", format_double(c.weights.bce_memory));
  add("train.w_ccds", format_double(c.weights.ccds));
  add("optimizer.beta1", format_double(c.beta1));
  add("optimizer.beta2", format_double(c.beta2));
  add("optimizer.weight_decay", format_double(c.weight_decay));
  add("data.root", c.root);
  add("data.fold", std::to_string(c.fold));
  add("data.protocol", c.protocol);
  add("data.resolution", std::to_string(c.W) + "x" + std::to_string(c.H));
  add("data.k", std::to_string(c.K));
  add("iounet.regime", c.iounet_regime);
  add("iounet.epochs", std::to_string(c.iounet_epochs));
  add("iounet.steps_per_epoch", std::to_string(c.iounet_steps));
  add("iounet.batch", std::to_string(c.iounet_batch));
  add("iounet.lr", format_double(c.iounet_lr));
  add("eval.runs", std::to_string(c.runs));
  return kv;
}

std::string config_text(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& [k, v] : config_kv(c)) os << k << " = " << v << "\n";
  return os.str();
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.C = c.C;
  m.L = c.L;
  m.Tc = c.Tc;
  m.Tm = c.Tm;
  m.bidirectional = c.bidirectional;
  m.ssm = c.ssm;
  m.iou_threshold = c.iou_threshold;
  return m;
}

void apply_paper_scale(RunConfig& c) {
  c.W = 424;
  c.H = 240;
  c.epochs = 100;
  c.C = 256;
}

}  // namespace fsvos
