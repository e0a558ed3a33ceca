#include <doctest.h>

#include "fsvos/checkpoint.hpp"
#include "fsvos/config.hpp"
#include "fsvos/model.hpp"
#include "fsvos/quality.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fsvos;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("config assignments and validation") {
  RunConfig cfg;
  apply_kv(cfg, "model.c", "32");
  apply_kv(cfg, "model.tc", "3");
  apply_kv(cfg, "train.lr", "0.001");
  apply_kv(cfg, "model.communication", "one_way");
  apply_kv(cfg, "data.resolution", "64x48");
  apply_kv(cfg, "eval.runs", "2");
  CHECK(cfg.C == 32);
  CHECK(cfg.Tc == 3);
  CHECK(cfg.lr == 0.001);
  CHECK_FALSE(cfg.bidirectional);
  CHECK(cfg.W == 64);
  CHECK(cfg.H == 48);
  CHECK(cfg.runs == 2);
  cfg.validate();

  CHECK_THROWS_WITH(apply_kv(cfg, "model.nope", "1"), doctest::Contains("nope"));
  CHECK_THROWS(apply_kv(cfg, "model.c", "banana"));
  cfg.Tc = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("config text round-trips exactly") {
  RunConfig cfg;
  cfg.C = 24;
  cfg.lr = 0.00037;
  cfg.Tm = 2;
  cfg.root = "/tmp/somewhere";
  cfg.protocol = "I";
  cfg.weights.ccds = 0.5;
  std::string text = config_text(cfg);

  RunConfig back;
  apply_config_text(back, text);
  CHECK(config_text(back) == text);
  CHECK(back.C == 24);
  CHECK(back.lr == 0.00037);
  CHECK(back.weights.ccds == 0.5);
  CHECK(back.root == "/tmp/somewhere");
}

TEST_CASE("config file parsing with comments and blanks") {
  std::string path = (fs::temp_directory_path() / "fsvos_cfg_test.txt").string();
  {
    std::ofstream out(path);
    out << "# a comment\n\nmodel.c = 16\n  train.epochs=3   \ndata.fold = 2\n";
  }
  RunConfig cfg;
  load_config_file(cfg, path);
  CHECK(cfg.C == 16);
  CHECK(cfg.epochs == 3);
  CHECK(cfg.fold == 2);
  fs::remove(path);

  CHECK_THROWS(load_config_file(cfg, "/nonexistent/cfg.txt"));

  {
    std::ofstream out(path);
    out << "garbage line without equals\n";
  }
  CHECK_THROWS(load_config_file(cfg, path));
  fs::remove(path);
}

TEST_CASE("paper-scale preset raises the schedule") {
  RunConfig desk;
  RunConfig paper;
  apply_paper_scale(paper);
  CHECK(paper.W > desk.W);
  CHECK(paper.epochs > desk.epochs);
  CHECK(paper.C >= desk.C);
}

TEST_CASE("checkpoint round-trip is byte-stable and value-exact") {
  std::string p1 = (fs::temp_directory_path() / "fsvos_ckpt_a.bin").string();
  std::string p2 = (fs::temp_directory_path() / "fsvos_ckpt_b.bin").string();

  ModelConfig mc;
  mc.C = 8;
  mc.Tc = 2;
  mc.Tm = 1;
  VipmtModel model(mc, 321);
  Adam opt(1e-3);
  // one step so optimizer state is non-trivial
  Rng rng(5);
  Tensor loss;
  for (auto& [name, t] : model.params().items()) {
    Tensor term = sum_all(mul(t, t));
    loss = loss.node ? add(loss, term) : term;
  }
  loss.backward();
  opt.step(model.params());

  RunConfig rc;
  rc.C = 8;
  CheckpointData d;
  d.config_text = config_text(rc);
  d.epoch = 3;
  d.groups.push_back(pack_group("model", model.params(), &opt));
  d.rng_states.push_back({"train", rng.save_state()});
  save_checkpoint(p1, d);

  CheckpointData back = load_checkpoint(p1);
  CHECK(back.epoch == 3);
  CHECK(back.config_text == d.config_text);
  REQUIRE(back.find_group("model") != nullptr);
  CHECK(back.find_group("iounet") == nullptr);
  REQUIRE(back.rng_states.size() == 1);
  CHECK(back.rng_states[0].second == rng.save_state());

  // load into a fresh model; weights must match bit for bit
  VipmtModel m2(mc, 999);
  Adam opt2(1e-3);
  unpack_group(*back.find_group("model"), m2.params(), &opt2);
  const auto& a = model.params().items();
  const auto& b = m2.params().items();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    for (int64_t j = 0; j < a[i].second.size(); ++j)
      CHECK(a[i].second[j] == b[i].second[j]);
  }
  CHECK(opt2.step_count() == opt.step_count());

  save_checkpoint(p2, back);
  CHECK(slurp(p1) == slurp(p2));  // byte-stable round trip

  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("checkpoint rejects mismatched stores") {
  ModelConfig small;
  small.C = 8;
  ModelConfig big;
  big.C = 12;
  VipmtModel ms(small, 1), mb(big, 1);
  CheckpointData::Group g = pack_group("model", ms.params(), nullptr);
  Adam none;
  CHECK_THROWS(unpack_group(g, mb.params(), &none));
}

TEST_CASE("rng state snapshot resumes the exact stream") {
  Rng r(77);
  for (int i = 0; i < 13; ++i) r.uniform();
  std::string s = r.save_state();
  std::vector<double> ahead;
  for (int i = 0; i < 8; ++i) ahead.push_back(r.uniform());
  Rng r2(0);
  r2.load_state(s);
  for (int i = 0; i < 8; ++i) CHECK(r2.uniform() == ahead[i]);
}

TEST_CASE("cli binary: bad invocations fail with a machine-readable error") {
  std::string bin = FSVOS_CLI_BIN;
  REQUIRE(fs::exists(bin));
  std::string dir = (fs::temp_directory_path() / "fsvos_cli_err").string();
  fs::create_directories(dir);
  std::string errfile = dir + "/err.txt";

  int rc = std::system((bin + " eval --root /nonexistent_root --out " + dir +
                        " --empty 2> " + errfile + " > /dev/null")
                           .c_str());
  CHECK(rc != 0);
  std::string err = slurp(errfile);
  CHECK(err.find("\"error\"") != std::string::npos);

  rc = std::system((bin + " train --set bogus.key=1 --root /tmp --out " + dir +
                    " 2> " + errfile + " > /dev/null")
                       .c_str());
  CHECK(rc != 0);
  CHECK(slurp(errfile).find("bogus") != std::string::npos);
  fs::remove_all(dir);
}
