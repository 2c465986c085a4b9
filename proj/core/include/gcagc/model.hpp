#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcagc/agcm.hpp"
#include "gcagc/agcn.hpp"
#include "gcagc/decoder.hpp"
#include "gcagc/encoder.hpp"
#include "gcagc/params.hpp"

namespace gcagc {

enum class Ablation {
  none,
  no_agcn,  // Z^k := X^k
  no_agcm,  // co-attention fixed at 0.5, clustering loss dropped
  no_proj,  // A^k = sigmoid(X^k X^k^T)
};

Ablation parse_ablation(const std::string& name);
std::string to_string(Ablation a);

struct ModelConfig {
  EncoderConfig encoder;
  AgcnConfig agcn;
  AgcmConfig agcm;
  double lambda = 0.0;
  LossWeighting weighting = LossWeighting::balanced;
  Ablation ablation = Ablation::none;

  void validate() const;
  /// Width d of the concatenated multi-scale features Z.
  std::size_t cluster_dim() const;
};

struct Model {
  ModelConfig config;
  ParameterSet params;
  EncoderParams encoder;
  AgcnParams agcn;
  DecoderParams decoder;

  /// Deterministic initialization from `seed`.
  static Model create(const ModelConfig& cfg, std::uint64_t seed);
};

struct ForwardOptions {
  /// Use this relaxed indicator instead of running the solver.
  const std::vector<double>* fixed_y_hat = nullptr;
  /// Build the clustering loss (skipped for inference).
  bool with_cluster_loss = true;
};

struct ForwardResult {
  Tensor maps;         // N x 1 x H x W in (0, 1)
  Tensor loss_gc;      // scalar; undefined under no_agcm or without cluster loss
  Tensor coattention;  // N x h x w
  std::vector<double> y_hat;
  std::size_t solver_steps = 0;
};

/// images: N x 3 x H x W.
ForwardResult forward(const Model& model, const Tensor& images, const ForwardOptions& opts = {});

struct LossValues {
  Tensor total;
  double cls = 0.0;
  double gc = 0.0;  // 0 when the clustering loss is absent
};

LossValues compute_loss(const Model& model, const ForwardResult& fwd, const Tensor& masks);

}  // namespace gcagc
