#include "gcagc/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include "gcagc/agcm.hpp"
#include "gcagc/agcn.hpp"
#include "gcagc/decoder.hpp"
#include "gcagc/model.hpp"
#include "gcagc/ops.hpp"
#include "gcagc/rng.hpp"

namespace gcagc {

namespace {

using Clock = std::chrono::steady_clock;
using UnaryOp = std::function<Tensor(const Tensor&)>;

Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

struct OpCase {
  std::string name;
  std::string op;
  Tensor x;
  UnaryOp f;
};

// Cases are built lazily so every run draws the same tensors for a seed.
std::vector<OpCase> op_cases(Rng& rng) {
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {3, 4});
  Tensor pos = random_tensor(rng, {3, 4}, 0.1, 2.0);
  Tensor unit = random_tensor(rng, {3, 4}, 0.05, 0.95);
  Tensor m34 = random_tensor(rng, {3, 4});
  Tensor m45 = random_tensor(rng, {4, 5});
  Tensor img = random_tensor(rng, {2, 3, 4, 6});
  Tensor cx = random_tensor(rng, {2, 3, 5, 5});
  Tensor cw = random_tensor(rng, {4, 3, 3, 3}, -0.5, 0.5);
  Tensor cb = random_tensor(rng, {4});
  Tensor dx = random_tensor(rng, {2, 3, 3, 3});
  Tensor dw = random_tensor(rng, {3, 2, 4, 4}, -0.5, 0.5);
  Tensor db = random_tensor(rng, {2});
  Tensor q = random_tensor(rng, {7, 2}, -1.0, 1.0);
  Tensor k = random_tensor(rng, {5, 2}, -1.0, 1.0);
  Tensor adj = random_tensor(rng, {6, 6}, 0.05, 0.95);
  Tensor nodes = random_tensor(rng, {8, 4}, -1.0, 1.0);
  Tensor p1 = random_tensor(rng, {4, 2}, -1.0, 1.0);
  Tensor p2 = random_tensor(rng, {4, 2}, -1.0, 1.0);
  Tensor w1 = random_tensor(rng, {4, 3}, -1.0, 1.0);
  Tensor w2 = random_tensor(rng, {3, 3}, -1.0, 1.0);
  Tensor a_hat = normalize_adjacency(random_tensor(rng, {8, 8}, 0.05, 0.95));
  Tensor zr = softmax_axis(random_tensor(rng, {10, 3}), 1);
  Tensor zw = random_tensor(rng, {10}, 0.1, 0.9);
  std::vector<double> y_hat(10);
  for (auto& v : y_hat) v = rng.uniform(0.05, 0.95);
  Tensor maps = random_tensor(rng, {2, 1, 3, 3}, 0.05, 0.95);
  std::vector<double> mv(18);
  for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = (i % 3 == 0) ? 1.0 : 0.0;
  Tensor masks = Tensor::from_data({2, 1, 3, 3}, mv);
  Tensor zt = softmax_axis(random_tensor(rng, {2, 3, 3, 4}), 3);
  Tensor u = random_tensor(rng, {4});

  auto sym = [](const Tensor& t) { return add(t, transpose(t)); };

  return {
      {"add", "add", a, [b](const Tensor& t) { return add(t, b); }},
      {"sub", "sub", a, [b](const Tensor& t) { return sub(b, t); }},
      {"mul", "mul", a, [b](const Tensor& t) { return mul(t, b); }},
      {"scale", "scale", a, [](const Tensor& t) { return scale(t, -1.7); }},
      {"add_scalar", "add_scalar", a, [](const Tensor& t) { return add_scalar(t, 0.3); }},
      {"relu", "relu", a, [](const Tensor& t) { return relu(t); }},
      {"sigmoid", "sigmoid", a, [](const Tensor& t) { return sigmoid(t); }},
      {"sqrt", "sqrt", pos, [](const Tensor& t) { return gcagc::sqrt(t); }},
      {"log_clamped", "log_clamped", unit, [](const Tensor& t) { return log_clamped(t); }},
      {"matmul/lhs", "matmul", m34, [m45](const Tensor& t) { return matmul(t, m45); }},
      {"matmul/rhs", "matmul", m45, [m34](const Tensor& t) { return matmul(m34, t); }},
      {"transpose", "transpose", a, [](const Tensor& t) { return transpose(t); }},
      {"reduce_sum", "reduce_sum", a, [](const Tensor& t) { return reduce_sum(t); }},
      {"reduce_sum/axis", "reduce_sum", a, [](const Tensor& t) { return reduce_sum(t, 0); }},
      {"reduce_mean", "reduce_mean", a, [](const Tensor& t) { return reduce_mean(t); }},
      {"reduce_mean/axis", "reduce_mean", a, [](const Tensor& t) { return reduce_mean(t, 1); }},
      {"softmax_axis", "softmax_axis", a, [](const Tensor& t) { return softmax_axis(t, 1); }},
      {"reshape", "reshape", a, [](const Tensor& t) { return reshape(t, {2, 6}); }},
      {"permute", "permute", img, [](const Tensor& t) { return permute(t, {0, 2, 3, 1}); }},
      {"slice", "slice", img, [](const Tensor& t) { return slice(t, 1, 1, 2); }},
      {"concat", "concat", a, [b](const Tensor& t) { return concat({t, b}, 1); }},
      {"conv2d/input", "conv2d", cx, [cw, cb](const Tensor& t) { return conv2d(t, cw, cb, 1, 1); }},
      {"conv2d/weight", "conv2d", cw, [cx, cb](const Tensor& t) { return conv2d(cx, t, cb, 2, 1); }},
      {"conv2d/bias", "conv2d", cb, [cx, cw](const Tensor& t) { return conv2d(cx, cw, t, 1, 0); }},
      {"conv_transpose2d/input", "conv_transpose2d", dx,
       [dw, db](const Tensor& t) { return conv_transpose2d(t, dw, db, 2, 1); }},
      {"conv_transpose2d/weight", "conv_transpose2d", dw,
       [dx, db](const Tensor& t) { return conv_transpose2d(dx, t, db, 2, 1); }},
      {"conv_transpose2d/bias", "conv_transpose2d", db,
       [dx, dw](const Tensor& t) { return conv_transpose2d(dx, dw, t, 2, 1); }},
      {"maxpool2d", "maxpool2d", img, [](const Tensor& t) { return maxpool2d(t); }},
      {"upsample_nearest2x", "upsample_nearest2x", img,
       [](const Tensor& t) { return upsample_nearest2x(t); }},
      {"sigmoid_outer/q", "sigmoid_outer", q, [k](const Tensor& t) { return sigmoid_outer(t, k, 3); }},
      {"sigmoid_outer/k", "sigmoid_outer", k, [q](const Tensor& t) { return sigmoid_outer(q, t, 3); }},
      {"normalize_adjacency", "normalize_adjacency", adj,
       [sym](const Tensor& t) { return normalize_adjacency(sym(t)); }},
      {"build_adjacency/P1", "build_adjacency", p1,
       [nodes, p2](const Tensor& t) { return build_adjacency(nodes, t, p2, 3); }},
      {"build_adjacency/X", "build_adjacency", nodes,
       [p1, p2](const Tensor& t) { return build_adjacency(t, p1, p2, 3); }},
      {"gcn_forward/W1", "gcn_forward", w1,
       [a_hat, nodes, w2](const Tensor& t) { return gcn_forward(a_hat, nodes, t, w2); }},
      {"gcn_forward/W2", "gcn_forward", w2,
       [a_hat, nodes, w1](const Tensor& t) { return gcn_forward(a_hat, nodes, w1, t); }},
      {"ggap", "ggap", zt, [](const Tensor& t) { return ggap(t); }},
      {"attention_correlate", "attention_correlate", zt,
       [u](const Tensor& t) { return attention_correlate(u, t).weights; }},
      {"clustering_loss/Z", "clustering_loss", zr,
       [zw, y_hat](const Tensor& t) { return clustering_loss(t, zw, y_hat); }},
      {"clustering_loss/W", "clustering_loss", zw,
       [zr, y_hat](const Tensor& t) { return clustering_loss(zr, t, y_hat); }},
      {"classification_loss/paper", "classification_loss", maps,
       [masks](const Tensor& t) { return classification_loss(t, masks, LossWeighting::paper); }},
      {"classification_loss/balanced", "classification_loss", maps,
       [masks](const Tensor& t) { return classification_loss(t, masks, LossWeighting::balanced); }},
  };
}

struct Probe {
  std::string name;
  std::string param;
  std::function<void(Model&, const Tensor&)> bind;
};

std::vector<GradCheckEntry> end_to_end(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.encoder.input_size = 16;
  cfg.encoder.stage_channels = {4, 4, 4};
  cfg.encoder.fpn_channels = 4;
  cfg.encoder.graph_stride = 4;
  cfg.agcn.hidden = 4;
  cfg.agcn.out = 3;
  cfg.agcn.block_rows = 8;
  cfg.agcm.solver_steps = 5;
  cfg.lambda = 0.1;
  const Model base = Model::create(cfg, seed);

  Rng rng = Rng::derive(seed, 0xe2e);
  Tensor images = random_tensor(rng, {2, 3, 16, 16}, 0.0, 1.0);
  std::vector<double> mv(2 * 16 * 16);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j)
        mv[n * 256 + i * 16 + j] = (i >= 4 + n && i < 11 && j >= 5 && j < 12) ? 1.0 : 0.0;
  Tensor masks = Tensor::from_data({2, 1, 16, 16}, mv);
  // The solver is not differentiated; freeze its output for every evaluation.
  const std::vector<double> y_hat = forward(base, images).y_hat;

  const std::vector<Probe> probes{
      {"end_to_end/encoder.stem", "encoder/stem/w",
       [](Model& m, const Tensor& t) { m.encoder.stem.weight = t; }},
      {"end_to_end/agcn.P1", "agcn/scale1/P1",
       [](Model& m, const Tensor& t) { m.agcn.graph[0].p1 = t; }},
      {"end_to_end/decoder.head", "decoder/head/w",
       [](Model& m, const Tensor& t) { m.decoder.head.weight = t; }},
  };
  std::vector<GradCheckEntry> out;
  for (const auto& p : probes) {
    const auto start = Clock::now();
    auto f = [&](const Tensor& t) {
      Model m = base;
      p.bind(m, t);
      ForwardOptions opts;
      opts.fixed_y_hat = &y_hat;
      return compute_loss(m, forward(m, images, opts), masks).total;
    };
    GradCheckEntry e{p.name, p.param, true, kEndToEndTolerance,
                     finite_diff_check(f, base.params.get(p.param).detach()), 0.0};
    e.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

bool GradCheckReport::passed() const {
  for (const auto& e : entries)
    if (!e.passed()) return false;
  return !entries.empty();
}

std::string GradCheckReport::format() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-32s %12s %10s  %s\n", "check", "max_rel_err", "tolerance",
                "status");
  os << line;
  for (const auto& e : entries) {
    std::snprintf(line, sizeof line, "%-32s %12.3e %10.0e  %s\n", e.name.c_str(),
                  e.result.max_rel_error, e.tolerance, e.passed() ? "ok" : "FAIL");
    os << line;
    if (!e.passed()) {
      std::snprintf(line, sizeof line,
                    "  op %s: coordinate %zu numeric %.10e analytic %.10e\n", e.op.c_str(),
                    e.result.worst_index, e.result.numeric, e.result.analytic);
      os << line;
    }
  }
  std::size_t failed = 0;
  for (const auto& e : entries) failed += e.passed() ? 0 : 1;
  std::snprintf(line, sizeof line, "%zu checks, %zu failed, %.1f s\n", entries.size(), failed,
                seconds);
  os << line;
  return os.str();
}

std::vector<std::string> gradcheck_op_names() {
  Rng rng(0);
  std::vector<std::string> names;
  for (const auto& c : op_cases(rng))
    if (names.empty() || names.back() != c.op) names.push_back(c.op);
  return names;
}

GradCheckReport run_gradcheck_suite(std::uint64_t seed, const std::string& corrupt_op) {
  const auto start = Clock::now();
  GradCheckReport report;
  Rng rng(seed);
  for (auto& c : op_cases(rng)) {
    const auto t0 = Clock::now();
    UnaryOp f = c.f;
    if (c.op == corrupt_op) {
      f = [inner = c.f, name = c.op](const Tensor& t) { return scale_gradient(inner(t), 1.5, name); };
    }
    Tensor weights = random_tensor(rng, f(c.x).shape(), -1.0, 1.0);
    auto scalar = [&](const Tensor& t) { return reduce_sum(mul(f(t), weights)); };
    GradCheckEntry e{c.name, c.op, false, kOpTolerance, finite_diff_check(scalar, c.x), 0.0};
    e.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.entries.push_back(std::move(e));
  }
  for (auto& e : end_to_end(seed)) report.entries.push_back(std::move(e));
  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

}  // namespace gcagc
