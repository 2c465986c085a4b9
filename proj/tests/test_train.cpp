#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gcagc/checkpoint.hpp>
#include <gcagc/dataset.hpp>
#include <gcagc/error.hpp>
#include <gcagc/netpbm.hpp>
#include <gcagc/optim.hpp>
#include <gcagc/train.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "test_helpers.hpp"

using namespace gcagc;
using gcagc::testing::random_tensor;
using gcagc::testing::TempDir;
using gcagc::testing::tiny_model_config;
namespace fs = std::filesystem;

namespace {

std::vector<ImageGroup> tiny_groups(std::size_t count) {
  SyntheticConfig sc;
  sc.image_size = 16;
  std::vector<ImageGroup> out;
  for (std::size_t g = 0; g < count; ++g) out.push_back(generate_synthetic_group(sc, g));
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("adam") {
  SUBCASE("first step with unit gradient moves by lr") {
    ParameterSet set;
    Tensor p = set.add("p", Tensor::scalar(0.5));
    AdamState st = AdamState::for_params(set);
    p.mutable_grad()[0] = 1.0;
    adam_step(set, st, 1e-4, AdamConfig{0.9, 0.999, 1e-8, 0.0});
    CHECK(p.item() - 0.5 == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK(st.step == 1);
  }

  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    ParameterSet set;
    Rng rng(1);
    Tensor p = set.add("p", random_tensor(rng, {3, 3}));
    std::vector<double> before(p.data().begin(), p.data().end());
    AdamState st = AdamState::for_params(set);
    for (int i = 0; i < 5; ++i) {
      p.mutable_grad();
      adam_step(set, st, 1e-3, AdamConfig{0.9, 0.999, 1e-8, 0.0});
    }
    CHECK(std::equal(before.begin(), before.end(), p.data().begin()));
  }

  SUBCASE("coupled weight decay acts through the moments") {
    // g = wd * theta; the first bias-corrected update is then -lr * sign(theta).
    ParameterSet set;
    Tensor p = set.add("p", Tensor::from_data({2}, {2.0, -3.0}));
    AdamState st = AdamState::for_params(set);
    adam_step(set, st, 0.01, AdamConfig{0.9, 0.999, 1e-12, 5e-4});
    CHECK(p.data()[0] == doctest::Approx(2.0 - 0.01).epsilon(1e-6));
    CHECK(p.data()[1] == doctest::Approx(-3.0 + 0.01).epsilon(1e-6));
  }

  SUBCASE("closed form over several steps") {
    ParameterSet set;
    Tensor p = set.add("p", Tensor::scalar(0.0));
    AdamState st = AdamState::for_params(set);
    const std::vector<double> grads{0.3, -0.1, 0.7};
    double m = 0, v = 0, theta = 0;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
      set.zero_grad();
      p.mutable_grad()[0] = grads[t - 1];
      adam_step(set, st, 0.05, AdamConfig{0.9, 0.999, 1e-8, 0.0});
      m = 0.9 * m + 0.1 * grads[t - 1];
      v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      theta -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.item() == doctest::Approx(theta).epsilon(1e-12));
    }
  }

  SUBCASE("state mismatch") {
    ParameterSet a, b;
    a.add("p", Tensor::zeros({2}));
    b.add("p", Tensor::zeros({3}));
    AdamState st = AdamState::for_params(a);
    CHECK_THROWS_AS(adam_step(b, st, 1e-3), DimensionError);
  }
}

TEST_CASE("learning-rate schedule") {
  LrSchedule paper;
  CHECK(paper.at(0) == 1e-4);
  CHECK(paper.at(24999) == 1e-4);
  CHECK(paper.at(25000) == 5e-5);
  CHECK(paper.at(74999) == 2.5e-5);
  CHECK(paper.at(75000) == 1.25e-5);
  LrSchedule desk{1e-3, 500};
  CHECK(desk.at(499) == 1e-3);
  CHECK(desk.at(500) == 5e-4);
  CHECK(desk.at(1999) == 1.25e-4);
}

TEST_CASE("checkpoint format") {
  Rng rng(17);
  TensorTable table;
  for (int i = 0; i < 6; ++i) {
    NamedTensor t;
    t.name = "t" + std::to_string(i) + (i % 2 ? "/é" : "");
    for (std::size_t r = 0; r < static_cast<std::size_t>(i % 4); ++r) t.shape.push_back(1 + rng.below(4));
    t.data.resize(numel(t.shape));
    for (auto& v : t.data) v = rng.normal() * 1e3;
    table.push_back(t);
  }
  table[0].data[0] = -0.0;
  table[0].data[0] = std::numeric_limits<double>::denorm_min();

  const auto bytes = encode_checkpoint(table);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "GCAGCKPT");
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 6);
  CHECK(decode_checkpoint(bytes) == table);
  CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);

  SUBCASE("truncation anywhere is a format error") {
    for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
      std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + cut);
      CHECK_THROWS_AS(decode_checkpoint(part), FormatError);
    }
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(extra), FormatError);
  }

  SUBCASE("magic and version") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad[8] = 2;
    CHECK_THROWS_AS(decode_checkpoint(bad), UnsupportedVersionError);
  }

  SUBCASE("fuzzed tables round trip byte-exactly") {
    for (int trial = 0; trial < 100; ++trial) {
      TensorTable t;
      const std::size_t count = rng.below(5);
      for (std::size_t k = 0; k < count; ++k) {
        NamedTensor nt;
        nt.name = "n" + std::to_string(trial) + "_" + std::to_string(k);
        const std::size_t rank = rng.below(5);
        for (std::size_t r = 0; r < rank; ++r) nt.shape.push_back(1 + rng.below(3));
        nt.data.resize(numel(nt.shape));
        for (auto& v : nt.data) {
          std::uint64_t bits = rng.next_u64();
          std::memcpy(&v, &bits, sizeof v);
          if (std::isnan(v)) v = 0.25;
        }
        t.push_back(nt);
      }
      auto b = encode_checkpoint(t);
      CHECK(encode_checkpoint(decode_checkpoint(b)) == b);
    }
  }
}

TEST_CASE("model checkpoint") {
  TempDir dir("ckpt");
  ModelConfig cfg = tiny_model_config();
  cfg.ablation = Ablation::no_proj;
  cfg.lambda = 0.25;
  cfg.weighting = LossWeighting::paper;
  Model m = Model::create(cfg, 3);
  AdamState st = AdamState::for_params(m.params);
  st.step = 12;
  st.m[0][0] = 0.5;

  save_checkpoint(dir / "a.gckpt", model_to_table(m, &st));
  LoadedModel back = model_from_table(load_checkpoint(dir / "a.gckpt"));
  CHECK(back.has_state);
  CHECK(back.state.step == 12);
  CHECK(back.state.m[0][0] == 0.5);
  CHECK(back.model.config.ablation == Ablation::no_proj);
  CHECK(back.model.config.lambda == 0.25);
  CHECK(back.model.config.weighting == LossWeighting::paper);
  CHECK(back.model.config.encoder.input_size == 16);
  save_checkpoint(dir / "b.gckpt", model_to_table(back.model, &back.state));
  CHECK(read_file_bytes(dir / "a.gckpt") == read_file_bytes(dir / "b.gckpt"));

  SUBCASE("inconsistent tables are rejected") {
    auto table = model_to_table(m);
    CHECK_FALSE(model_from_table(table).has_state);
    auto missing = table;
    missing.pop_back();
    CHECK_THROWS_AS(model_from_table(missing), FormatError);
    auto extra = table;
    extra.push_back({"mystery", {1}, {0.0}});
    CHECK_THROWS_AS(model_from_table(extra), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.gckpt"), InputError);
  }
}

TEST_CASE("training") {
  auto groups = tiny_groups(3);
  ModelConfig mc = tiny_model_config();
  TrainConfig tc;
  tc.steps = 10;
  tc.lr = {1e-3, 4};
  tc.checkpoint_every = 5;

  SUBCASE("byte-identical checkpoints across runs") {
    TempDir a("train_a"), b("train_b");
    tc.out_dir = a.path();
    auto ra = train(groups, mc, tc);
    tc.out_dir = b.path();
    auto rb = train(groups, mc, tc);
    CHECK(read_file_bytes(a / "final.gckpt") == read_file_bytes(b / "final.gckpt"));
    CHECK(read_file_bytes(a / "ckpt_000005.gckpt") == read_file_bytes(b / "ckpt_000005.gckpt"));
    CHECK(read_text(a / "loss_trace.csv") == read_text(b / "loss_trace.csv"));

    const std::string trace = read_text(a / "loss_trace.csv");
    CHECK(trace.rfind("step,lr,loss,loss_cls,loss_gc\n", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 11);
    CHECK(ra.trace[3].lr == 1e-3);
    CHECK(ra.trace[4].lr == 5e-4);
    CHECK(ra.trace[9].lr == 2.5e-4);
    CHECK(ra.state.step == 10);

    // The final checkpoint reproduces the trained model.
    auto loaded = model_from_table(load_checkpoint(a / "final.gckpt"));
    auto pa = predict_group(ra.model, groups[0]);
    auto pb = predict_group(loaded.model, groups[0]);
    CHECK(pa == pb);
  }

  SUBCASE("lambda = 0 keeps the clustering loss out of the objective") {
    mc.lambda = 0.0;
    auto r = train(groups, mc, tc);
    for (const auto& row : r.trace) {
      CHECK(row.loss == row.loss_cls);
      CHECK(row.loss_gc < 0.0);
    }
  }

  SUBCASE("no-agcm records a zero clustering loss") {
    mc.ablation = Ablation::no_agcm;
    auto r = train(groups, mc, tc);
    for (const auto& row : r.trace) CHECK(row.loss_gc == 0.0);
  }

  SUBCASE("non-finite input aborts with the step index") {
    auto bad = groups;
    for (auto& g : bad) g.images[0].pixels[0] = std::numeric_limits<double>::quiet_NaN();
    TempDir d("train_nan");
    tc.out_dir = d.path();
    CHECK_THROWS_WITH_AS(train(bad, mc, tc), doctest::Contains("training step 0"), NumericalError);
    CHECK_FALSE(fs::exists(d / "final.gckpt"));
  }

  SUBCASE("inputs") {
    CHECK_THROWS_AS(train({}, mc, tc), InputError);
    auto unmasked = groups;
    unmasked[1].masks.clear();
    CHECK_THROWS_AS(train(unmasked, mc, tc), InputError);
  }
}

TEST_CASE("prediction keeps each image's resolution") {
  auto g = generate_synthetic_group(SyntheticConfig{}, 1);  // 64 x 64
  Model m = Model::create(tiny_model_config(), 1);
  auto maps = predict_group(m, g);
  REQUIRE(maps.size() == g.size());
  CHECK(maps[0].width == 64);
  CHECK(maps[0].channels == 1);
  for (double v : maps[0].pixels) CHECK((v > 0.0 && v < 1.0));
}
