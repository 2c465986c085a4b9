#pragma once

#include <array>
#include <cstddef>

#include "gcagc/encoder.hpp"
#include "gcagc/params.hpp"
#include "gcagc/tensor.hpp"

namespace gcagc {

struct AgcnConfig {
  std::size_t rank = 0;         // r; 0 selects d^k / 2
  std::size_t hidden = 32;      // c1^k
  std::size_t out = 16;         // c^k
  std::size_t block_rows = 256; // adjacency row block B

  std::size_t rank_for(std::size_t feature_dim) const { return rank ? rank : feature_dim / 2; }
  void validate(std::size_t feature_dim) const;
};

/// Learnable projections P1^k, P2^k (d^k x r) of one sub-graph.
struct SubGraphParams {
  Tensor p1, p2;
};

/// Two-layer GCN weights W1^k (d^k x c1^k) and W2^k (c1^k x c^k).
struct GcnParams {
  Tensor w1, w2;
};

struct AgcnParams {
  std::array<SubGraphParams, 3> graph;  // empty tensors when projections are ablated
  std::array<GcnParams, 3> gcn;

  static AgcnParams create(ParameterSet& set, Rng& rng, const AgcnConfig& cfg,
                           std::size_t feature_dim, bool with_projections);
};

/// A^k = sigmoid((X P1)(X P2)^T), materialized in row blocks.
/// Throws ConfigError when r >= d^k.
Tensor build_adjacency(const Tensor& x, const Tensor& p1, const Tensor& p2,
                       std::size_t block_rows = 256);
/// Projection-free variant sigmoid(X X^T).
Tensor build_adjacency_unprojected(const Tensor& x, std::size_t block_rows = 256);

/// A = A^1 + A^2 + A^3, then D^{-1/2}(A + I)D^{-1/2}.
Tensor sum_and_normalize(const Tensor& a1, const Tensor& a2, const Tensor& a3);

/// GC filtering: A_hat * X.
Tensor gc_filter(const Tensor& a_hat, const Tensor& x);

/// Z = softmax_channels(A_hat * relu(A_hat X W1) * W2); every row sums to 1.
Tensor gcn_forward(const Tensor& a_hat, const Tensor& x, const Tensor& w1, const Tensor& w2);

struct AgcnOutput {
  std::array<Tensor, 3> z;
  Tensor a_hat;
};

/// Full adaptive graph convolution over the three node feature sets.
AgcnOutput agcn_forward(const NodeFeatureSet& features, const AgcnParams& params,
                        const AgcnConfig& cfg, bool use_projections = true);

}  // namespace gcagc
