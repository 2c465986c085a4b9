// Prints one PASS/FAIL line per acceptance criterion. Exit status is 0 only
// when every evaluated criterion passes.
#include <CLI11.hpp>

#include <gcagc/agcm.hpp>
#include <gcagc/checkpoint.hpp>
#include <gcagc/config.hpp>
#include <gcagc/dataset.hpp>
#include <gcagc/gradcheck_suite.hpp>
#include <gcagc/metrics.hpp>
#include <gcagc/netpbm.hpp>
#include <gcagc/rng.hpp>
#include <gcagc/train.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace gcagc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
  std::printf("%s  %-26s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

std::vector<double> random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<double> z(n * d);
  for (auto& v : z) v = rng.normal();
  return z;
}

std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(0.05, 1.0);
  return w;
}

// Dense K built directly from its definition, independent of KernelOperator.
std::vector<double> dense_kernel(const std::vector<double>& z, std::size_t n, std::size_t d,
                                 const std::vector<double>& w) {
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += z[i * d + c] * z[j * d + c];
      k[i * n + j] = std::sqrt(w[i] * w[j]) * dot;
    }
  return k;
}

double links(const std::vector<double>& k, std::size_t n, const std::vector<int>& members) {
  double s = 0.0;
  for (int i : members)
    for (int j : members) s += k[i * n + j];
  (void)n;
  return s;
}

double loss_gc(const std::vector<double>& z, std::size_t n, std::size_t d,
               const std::vector<double>& w, const std::vector<double>& y) {
  return clustering_loss(Tensor::from_data({n, d}, z), Tensor::from_data({n}, w), y).item();
}

Outcome clustering_equivalence() {
  Rng rng(101);
  double worst = 0.0;
  int argmin_mismatch = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 2 + rng.below(11), d = 1 + rng.below(5);
    const auto z = random_matrix(rng, n, d);
    const auto w = random_weights(rng, n);
    const auto k = dense_kernel(z, n, d, w);
    double best_loss = std::numeric_limits<double>::infinity(), best_ra = -best_loss;
    unsigned best_loss_mask = 0, best_ra_mask = 0;
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<double> y(n);
      std::vector<int> fg, bg;
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = (mask >> i) & 1u;
        (y[i] ? fg : bg).push_back(static_cast<int>(i));
      }
      const double l = loss_gc(z, n, d, w, y);
      const double ra = links(k, n, fg) / fg.size() + links(k, n, bg) / bg.size();
      worst = std::max(worst, rel_err(-l, ra));
      if (l < best_loss) best_loss = l, best_loss_mask = mask;
      if (ra > best_ra) best_ra = ra, best_ra_mask = mask;
    }
    // Ties are resolved by value: the L_gc minimizer must attain the maximal association.
    std::vector<int> fg, bg;
    for (std::size_t i = 0; i < n; ++i) ((best_loss_mask >> i) & 1u ? fg : bg).push_back(static_cast<int>(i));
    const double ra_at = links(k, n, fg) / fg.size() + links(k, n, bg) / bg.size();
    if (best_loss_mask != best_ra_mask && rel_err(ra_at, best_ra) > 1e-9) ++argmin_mismatch;
  }
  return {worst <= 1e-9 && argmin_mismatch == 0,
          fmt("50 instances, max rel err %.2e, argmin mismatches %d", worst, argmin_mismatch)};
}

Outcome kmeans_reduction() {
  Rng rng(202);
  int mismatches = 0;
  for (int inst = 0; inst < 30; ++inst) {
    const std::size_t n = 2 + rng.below(9), d = 1 + rng.below(4);
    const auto z = random_matrix(rng, n, d);
    const std::vector<double> w(n, rng.uniform(0.1, 1.0));
    double best_km = std::numeric_limits<double>::infinity(), best_gc = best_km;
    double km_at_gc_min = 0.0;
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<std::uint8_t> yb(n);
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i) yb[i] = static_cast<std::uint8_t>((mask >> i) & 1u), y[i] = yb[i];
      const double km = clustering_objective_discrete(z, n, d, w, yb);
      const double gc = loss_gc(z, n, d, w, y);
      best_km = std::min(best_km, km);
      if (gc < best_gc) best_gc = gc, km_at_gc_min = km;
    }
    if (rel_err(km_at_gc_min, best_km) > 1e-9) ++mismatches;
  }
  return {mismatches == 0, fmt("30 instances, minimizer mismatches %d", mismatches)};
}

Outcome factored_kernel() {
  Rng rng(303);
  double worst = 0.0, min_quad = std::numeric_limits<double>::infinity();
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 1 + rng.below(100), d = 1 + rng.below(8);
    const auto z = random_matrix(rng, n, d);
    const auto w = random_weights(rng, n);
    const auto k = dense_kernel(z, n, d, w);
    const KernelOperator op(z, n, d, w);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    const auto kv = op.apply(v);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double ref = 0.0;
      for (std::size_t j = 0; j < n; ++j) ref += k[i * n + j] * v[j];
      num += (kv[i] - ref) * (kv[i] - ref);
      den += ref * ref;
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-300));
    for (int p = 0; p < 5; ++p) {
      for (auto& x : v) x = rng.normal();
      const auto q = op.apply(v);
      double quad = 0.0;
      for (std::size_t i = 0; i < n; ++i) quad += v[i] * q[i];
      min_quad = std::min(min_quad, quad);
    }
  }
  return {worst <= 1e-10 && min_quad >= -1e-12,
          fmt("max rel err %.2e, min v'Kv over 100 probes %.3e", worst, min_quad)};
}

struct Split {
  std::vector<ImageGroup> train, test;
};

Split synthetic_split() {
  SyntheticConfig sc;
  sc.seed = 7;
  Split s;
  for (std::size_t g = 0; g < 100; ++g) s.train.push_back(generate_synthetic_group(sc, g));
  for (std::size_t g = 100; g < 120; ++g) s.test.push_back(generate_synthetic_group(sc, g));
  return s;
}

struct RunScore {
  EvalResult eval;
  double seconds = 0.0;
  double median_first = 0.0, median_last = 0.0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

RunScore train_and_score(const Split& data, Ablation ablation) {
  RunConfig cfg;
  cfg.model.ablation = ablation;
  cfg.train.checkpoint_every = 0;
  const auto t0 = Clock::now();
  TrainResult res = train(data.train, cfg.model, cfg.train);
  RunScore s;
  s.seconds = seconds_since(t0);
  std::vector<Image> maps, masks;
  for (const auto& g : data.test) {
    auto pred = predict_group(res.model, g);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      maps.push_back(std::move(pred[i]));
      masks.push_back(g.masks[i]);
    }
  }
  s.eval = evaluate(maps, masks);
  std::vector<double> first, last;
  for (const auto& r : res.trace) {
    if (r.step < 50) first.push_back(r.loss_cls);
    if (r.step + 50 >= res.trace.size()) last.push_back(r.loss_cls);
  }
  s.median_first = median(first);
  s.median_last = median(last);
  std::printf("      %-8s F_beta %.4f  MAE %.4f  AP %.4f  S %.4f  (%.0f s)\n",
              to_string(ablation).c_str(), s.eval.f_beta, s.eval.mae, s.eval.ap,
              s.eval.s_measure, s.seconds);
  std::fflush(stdout);
  return s;
}

Outcome determinism() {
  SyntheticConfig sc;
  sc.seed = 11;
  std::vector<ImageGroup> groups;
  for (std::size_t g = 0; g < 3; ++g) groups.push_back(generate_synthetic_group(sc, g));
  RunConfig cfg;
  cfg.train.steps = 10;
  cfg.train.checkpoint_every = 0;
  const fs::path root = fs::temp_directory_path() / ("gcagc_accept_" + std::to_string(::getpid()));
  std::vector<std::vector<std::uint8_t>> ckpts, maps;
  for (int run = 0; run < 2; ++run) {
    cfg.train.out_dir = root / ("run" + std::to_string(run));
    fs::create_directories(cfg.train.out_dir);
    TrainResult res = train(groups, cfg.model, cfg.train);
    ckpts.push_back(read_file_bytes(cfg.train.out_dir / "final.gckpt"));
    std::vector<std::uint8_t> all;
    for (const auto& m : predict_group(res.model, groups[0])) {
      const auto bytes = encode_netpbm(m);
      all.insert(all.end(), bytes.begin(), bytes.end());
    }
    maps.push_back(std::move(all));
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  const bool same_ckpt = ckpts[0] == ckpts[1] && !ckpts[0].empty();
  const bool same_maps = maps[0] == maps[1];
  return {same_ckpt && same_maps, fmt("checkpoints %s (%zu bytes), inference maps %s",
                                      same_ckpt ? "identical" : "DIFFER", ckpts[0].size(),
                                      same_maps ? "identical" : "DIFFER")};
}

Outcome format_round_trips() {
  Rng rng(404);
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    TensorTable table;
    const std::size_t count = rng.below(6);
    for (std::size_t i = 0; i < count; ++i) {
      NamedTensor nt;
      nt.name = "t" + std::to_string(i) + "/" + std::string(rng.below(20), 'x');
      const std::size_t rank = rng.below(4);
      for (std::size_t r = 0; r < rank; ++r) nt.shape.push_back(1 + rng.below(5));
      nt.data.resize(numel(nt.shape));
      for (auto& v : nt.data) {
        // Include values whose bit patterns stress the encoder.
        const std::uint64_t pick = rng.below(8);
        v = pick == 0 ? -0.0 : pick == 1 ? std::numeric_limits<double>::denorm_min()
                                         : rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
      }
      table.push_back(std::move(nt));
    }
    const auto bytes = encode_checkpoint(table);
    const auto back = decode_checkpoint(bytes);
    if (encode_checkpoint(back) != bytes) ++bad;
    for (std::size_t i = 0; i < table.size(); ++i)
      for (std::size_t j = 0; j < table[i].data.size(); ++j)
        if (std::signbit(table[i].data[j]) != std::signbit(back[i].data[j]) ||
            std::memcmp(&table[i].data[j], &back[i].data[j], sizeof(double)) != 0)
          ++bad;
  }
  for (int t = 0; t < 100; ++t) {
    const std::size_t channels = rng.below(2) ? 3 : 1;
    Image img(1 + rng.below(40), 1 + rng.below(40), channels);
    for (auto& v : img.pixels) v = rng.below(256) / 255.0;
    const auto bytes = encode_netpbm(img);
    const Image back = decode_netpbm(bytes);
    if (encode_netpbm(back) != bytes || back.pixels != img.pixels) ++bad;
  }
  return {bad == 0, fmt("100 checkpoint tables, 100 netpbm images, %d mismatches", bad)};
}

Outcome metric_sanity() {
  Rng rng(505);
  std::vector<Image> gts;
  for (int i = 0; i < 4; ++i) {
    Image g(24, 24, 1);
    for (auto& v : g.pixels) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    gts.push_back(std::move(g));
  }
  const EvalResult self = evaluate(gts, gts);
  double worst_auc = 0.0;
  for (double c : {0.0, 0.3, 0.5, 1.0}) {
    std::vector<Image> constant;
    for (const auto& g : gts) constant.push_back(Image(g.width, g.height, 1, c));
    worst_auc = std::max(worst_auc, std::abs(roc_auc(threshold_sweep(constant, gts)) - 0.5));
  }
  const bool ok = self.f_beta == 1.0 && self.ap == 1.0 && self.mae == 0.0 && worst_auc <= 1e-9;
  return {ok, fmt("F_beta %.3f, AP %.3f, MAE %.3f, max |AUC(const) - 0.5| %.1e", self.f_beta,
                  self.ap, self.mae, worst_auc)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  bool skip_training = false;
  app.add_flag("--skip-training", skip_training, "Skip the synthetic training experiments");
  CLI11_PARSE(app, argc, argv);

  {
    const auto t0 = Clock::now();
    const GradCheckReport r = run_gradcheck_suite(7);
    const double s = seconds_since(t0);
    std::size_t failed = 0;
    for (const auto& e : r.entries) failed += !e.passed();
    report("gradient suite", {r.passed() && s < 120.0,
                              fmt("%zu checks, %zu failed, %.1f s", r.entries.size(), failed, s)});
  }
  report("clustering equivalence", clustering_equivalence());
  report("k-means reduction", kmeans_reduction());
  report("factored kernel", factored_kernel());

  if (skip_training) {
    std::printf("SKIP  synthetic end-to-end\nSKIP  ablation direction\n");
  } else {
    const Split data = synthetic_split();
    const RunScore full = train_and_score(data, Ablation::none);
    report("synthetic end-to-end",
           {full.eval.f_beta >= 0.80 && full.eval.mae <= 0.10 && full.seconds <= 1800.0,
            fmt("F_beta %.4f (>= 0.80), MAE %.4f (<= 0.10), %.0f s (<= 1800)", full.eval.f_beta,
                full.eval.mae, full.seconds)});
    std::printf("      training progress: median L_cls first 50 steps %.5f, last 50 steps %.5f\n",
                full.median_first, full.median_last);
    Outcome abl{true, fmt("full %.4f;", full.eval.f_beta)};
    for (Ablation a : {Ablation::no_agcn, Ablation::no_agcm, Ablation::no_proj}) {
      const RunScore s = train_and_score(data, a);
      abl.pass = abl.pass && s.eval.f_beta < full.eval.f_beta;
      abl.detail += fmt(" %s %.4f", to_string(a).c_str(), s.eval.f_beta);
    }
    report("ablation direction", abl);
  }

  report("determinism", determinism());
  report("format round trips", format_round_trips());
  report("metric sanity", metric_sanity());

  std::printf("%s\n", failures ? fmt("%d criteria failed", failures).c_str() : "all criteria passed");
  return failures ? 1 : 0;
}
