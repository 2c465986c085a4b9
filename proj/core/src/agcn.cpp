#include "gcagc/agcn.hpp"

#include <cmath>

#include "gcagc/error.hpp"
#include "gcagc/ops.hpp"

namespace gcagc {

namespace {

constexpr double kProjectionGain = 4.0;

}  // namespace

void AgcnConfig::validate(std::size_t feature_dim) const {
  const std::size_t r = rank_for(feature_dim);
  if (r < 1 || r >= feature_dim) {
    throw ConfigError("projection rank r=" + std::to_string(r) + " must satisfy 1 <= r < d=" +
                      std::to_string(feature_dim));
  }
  if (hidden == 0) throw ConfigError("GCN hidden width must be positive");
  if (out < 2) throw ConfigError("GCN output width must be at least 2, got " + std::to_string(out));
  if (block_rows == 0) throw ConfigError("adjacency block size must be positive");
}

AgcnParams AgcnParams::create(ParameterSet& set, Rng& rng, const AgcnConfig& cfg,
                              std::size_t feature_dim, bool with_projections) {
  cfg.validate(feature_dim);
  const std::size_t d = feature_dim, r = cfg.rank_for(d);
  AgcnParams p;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string base = "agcn/scale" + std::to_string(k + 1);
    if (with_projections) {
      // P2 starts as -P1, so initial affinities are small and the normalized
      // adjacency begins close to the self-loop identity.
      Tensor a = scaled_normal(rng, {d, r}, d, kProjectionGain);
      Tensor b = scale(a, -1.0);
      p.graph[k].p1 = set.add(base + "/P1", a);
      p.graph[k].p2 = set.add(base + "/P2", b);
    }
    p.gcn[k].w1 = set.add(base + "/W1", he_normal(rng, {d, cfg.hidden}, d));
    p.gcn[k].w2 = set.add(base + "/W2", scaled_normal(rng, {cfg.hidden, cfg.out}, cfg.hidden, 1.0));
  }
  return p;
}

Tensor build_adjacency(const Tensor& x, const Tensor& p1, const Tensor& p2, std::size_t block_rows) {
  if (x.rank() != 2 || p1.rank() != 2 || p2.rank() != 2) {
    throw DimensionError("build_adjacency: expected matrices, got " + to_string(x.shape()) + ", " +
                         to_string(p1.shape()) + ", " + to_string(p2.shape()));
  }
  const std::size_t d = x.dim(1);
  if (p1.shape() != p2.shape() || p1.dim(0) != d) {
    throw DimensionError("build_adjacency: projections " + to_string(p1.shape()) + " and " +
                         to_string(p2.shape()) + " do not match feature width " + std::to_string(d));
  }
  if (p1.dim(1) >= d) {
    throw ConfigError("build_adjacency: projection rank " + std::to_string(p1.dim(1)) +
                      " must be below feature width " + std::to_string(d));
  }
  return sigmoid_outer(matmul(x, p1), matmul(x, p2), block_rows);
}

Tensor build_adjacency_unprojected(const Tensor& x, std::size_t block_rows) {
  return sigmoid_outer(x, x, block_rows);
}

Tensor sum_and_normalize(const Tensor& a1, const Tensor& a2, const Tensor& a3) {
  if (a1.shape() != a2.shape() || a1.shape() != a3.shape()) {
    throw DimensionError("sum_and_normalize: adjacency shapes " + to_string(a1.shape()) + ", " +
                         to_string(a2.shape()) + ", " + to_string(a3.shape()) + " differ");
  }
  return normalize_adjacency(add(add(a1, a2), a3));
}

Tensor gc_filter(const Tensor& a_hat, const Tensor& x) { return matmul(a_hat, x); }

Tensor gcn_forward(const Tensor& a_hat, const Tensor& x, const Tensor& w1, const Tensor& w2) {
  Tensor h = relu(matmul(gc_filter(a_hat, x), w1));
  return softmax_axis(gc_filter(a_hat, matmul(h, w2)), 1);
}

AgcnOutput agcn_forward(const NodeFeatureSet& features, const AgcnParams& params,
                        const AgcnConfig& cfg, bool use_projections) {
  std::array<Tensor, 3> adj;
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor& x = features.x[k];
    adj[k] = use_projections
                 ? build_adjacency(x, params.graph[k].p1, params.graph[k].p2, cfg.block_rows)
                 : build_adjacency_unprojected(x, cfg.block_rows);
  }
  AgcnOutput out;
  out.a_hat = sum_and_normalize(adj[0], adj[1], adj[2]);
  for (std::size_t k = 0; k < 3; ++k) {
    out.z[k] = gcn_forward(out.a_hat, features.x[k], params.gcn[k].w1, params.gcn[k].w2);
  }
  return out;
}

}  // namespace gcagc
