#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cli.hpp>

#include <gcagc/netpbm.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "test_helpers.hpp"

namespace fs = std::filesystem;
using gcagc::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = gcagc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) ++n;
  return n;
}

// Small enough to train a few steps in well under a second.
std::vector<std::string> tiny_train(const fs::path& data, const fs::path& out) {
  return {"train", "--data", data.string(), "--out", out.string(), "--log-every", "0",
          "--set", "encoder.input_size=32", "--set", "encoder.stage_channels=4,4,4",
          "--set", "encoder.fpn_channels=4", "--set", "agcn.hidden=4", "--set", "agcn.out=3",
          "--set", "agcm.solver_steps=3", "--set", "train.steps=3"};
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"bogus"}).code == 2);
  CHECK(run({"gen-data"}).code == 2);
  CHECK(run({"gen-data", "--out", "x", "--groups", "many"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("gen-data") {
  TempDir a("cli_gen_a"), b("cli_gen_b");
  const Run r = run({"gen-data", "--seed", "3", "--groups", "3", "--size", "32", "--out", a.path().string()});
  REQUIRE(r.code == 0);
  CHECK(count_files(a.path(), ".ppm") == 15);
  CHECK(count_files(a.path(), ".pgm") == 15);
  CHECK(fs::exists(a / "group_002/gt/img_004.pgm"));

  REQUIRE(run({"gen-data", "--seed", "3", "--groups", "3", "--size", "32", "--out", b.path().string()}).code == 0);
  CHECK(slurp(a / "group_001/img_003.ppm") == slurp(b / "group_001/img_003.ppm"));
  CHECK(slurp(a / "group_001/gt/img_003.pgm") == slurp(b / "group_001/gt/img_003.pgm"));

  TempDir c("cli_gen_c");
  CHECK(run({"gen-data", "--groups", "0", "--out", c.path().string()}).code == 0);
  CHECK(run({"gen-data", "--size", "8", "--out", c.path().string()}).code == 1);
}

TEST_CASE("train, infer and eval") {
  TempDir dir("cli_pipeline");
  REQUIRE(run({"gen-data", "--groups", "2", "--size", "32", "--out", (dir / "data").string()}).code == 0);

  const Run tr = run(tiny_train(dir / "data", dir / "run"));
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  CHECK(fs::exists(dir / "run/final.gckpt"));
  CHECK(fs::exists(dir / "run/config.ini"));
  const std::string trace = slurp(dir / "run/loss_trace.csv");
  CHECK(trace.rfind("step,lr,loss,loss_cls,loss_gc\n", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 4);

  SUBCASE("config file with override") {
    auto args = tiny_train(dir / "data", dir / "run_cfg");
    args.push_back("--config");
    args.push_back((dir / "run/config.ini").string());
    args.push_back("--set");
    args.push_back("train.steps=2");
    REQUIRE(run(args).code == 0);
    const std::string t = slurp(dir / "run_cfg/loss_trace.csv");
    CHECK(std::count(t.begin(), t.end(), '\n') == 3);
  }

  SUBCASE("bad config keys") {
    std::ofstream(dir / "bad.ini") << "[train]\nlearning_rate = 1\n";
    auto args = tiny_train(dir / "data", dir / "run_bad");
    args.push_back("--config");
    args.push_back((dir / "bad.ini").string());
    const Run r = run(args);
    CHECK(r.code == 1);
    CHECK(r.err.find("learning_rate") != std::string::npos);
  }

  SUBCASE("ablations") {
    auto args = tiny_train(dir / "data", dir / "run_m");
    args.push_back("--no-agcm");
    REQUIRE(run(args).code == 0);
    std::istringstream t(slurp(dir / "run_m/loss_trace.csv"));
    std::string line;
    std::getline(t, line);
    while (std::getline(t, line)) CHECK(line.substr(line.rfind(',') + 1) == "0");

    args.push_back("--no-proj");
    CHECK(run(args).code == 2);
  }

  SUBCASE("infer then eval") {
    const Run inf = run({"infer", "--checkpoint", (dir / "run/final.gckpt").string(), "--data",
                         (dir / "data").string(), "--out", (dir / "pred").string()});
    REQUIRE_MESSAGE(inf.code == 0, inf.err);
    CHECK(count_files(dir / "pred", ".pgm") == 10);
    const gcagc::Image m = gcagc::read_netpbm(dir / "pred/group_001/img_002.pgm");
    CHECK(m.width == 32);
    CHECK(m.height == 32);

    // Repeated inference is byte-identical.
    REQUIRE(run({"infer", "--checkpoint", (dir / "run/final.gckpt").string(), "--data",
                 (dir / "data").string(), "--out", (dir / "pred2").string()}).code == 0);
    CHECK(slurp(dir / "pred/group_000/img_004.pgm") == slurp(dir / "pred2/group_000/img_004.pgm"));

    const Run ev = run({"eval", "--pred", (dir / "pred").string(), "--gt", (dir / "data").string(),
                        "--out", (dir / "eval").string()});
    REQUIRE_MESSAGE(ev.code == 0, ev.err);
    CHECK(slurp(dir / "eval/metrics.csv").rfind("metric,value\n", 0) == 0);
    CHECK(slurp(dir / "eval/curves.csv").rfind("threshold,precision,recall,tpr,fpr\n", 0) == 0);
  }

  SUBCASE("odd group sizes") {
    // 7 images with N = 5 form two padded mini-groups; every image gets one map.
    const fs::path src = dir / "data/group_000";
    const fs::path odd = dir / "odd/g";
    fs::create_directories(odd);
    for (int i = 0; i < 7; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%03d.ppm", i);
      fs::copy_file(src / ("img_00" + std::to_string(i % 5) + ".ppm"), odd / name);
    }
    REQUIRE(run({"infer", "--checkpoint", (dir / "run/final.gckpt").string(), "--data",
                 (dir / "odd").string(), "--out", (dir / "pred_odd").string()}).code == 0);
    CHECK(count_files(dir / "pred_odd", ".pgm") == 7);
  }
}

TEST_CASE("eval against itself and with mismatches") {
  TempDir dir("cli_eval");
  REQUIRE(run({"gen-data", "--groups", "2", "--size", "32", "--out", (dir / "data").string()}).code == 0);

  const Run self = run({"eval", "--pred", (dir / "data").string(), "--gt", (dir / "data").string(),
                        "--out", (dir / "e").string()});
  REQUIRE(self.code == 0);
  std::istringstream csv(slurp(dir / "e/metrics.csv"));
  std::string line;
  std::getline(csv, line);
  std::map<std::string, double> values;
  while (std::getline(csv, line)) values[line.substr(0, line.find(','))] = std::stod(line.substr(line.find(',') + 1));
  CHECK(values.at("AP") == 1.0);
  CHECK(values.at("F_beta") == 1.0);
  CHECK(values.at("MAE") == 0.0);

  // A prediction without ground truth is named in the error.
  fs::copy(dir / "data", dir / "pred", fs::copy_options::recursive);
  fs::remove(dir / "data/group_001/gt/img_003.pgm");
  const Run bad = run({"eval", "--pred", (dir / "pred").string(), "--gt", (dir / "data").string(),
                       "--out", (dir / "e2").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("group_001/img_003.pgm") != std::string::npos);

  CHECK(run({"eval", "--pred", (dir / "nowhere").string(), "--gt", (dir / "data").string(), "--out",
             (dir / "e3").string()}).code == 1);
}

TEST_CASE("gradcheck") {
  const Run ok = run({"gradcheck"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("sigmoid_outer") != std::string::npos);

  const Run bad = run({"gradcheck", "--corrupt-op", "relu"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("gradient check failed for: relu") != std::string::npos);

  CHECK(run({"gradcheck", "--corrupt-op", "no_such_op"}).code == 2);
}
