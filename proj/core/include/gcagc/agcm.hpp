#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcagc/tensor.hpp"

namespace gcagc {

struct AgcmConfig {
  std::size_t solver_steps = 50;  // T
  double step_size = 0.1;         // eta
  double epsilon = 1e-4;          // relaxed indicator stays in [eps, 1 - eps]

  void validate() const;
};

/// Group global average pooling of an N x h x w x d tensor: u(c) is the mean
/// of Z(n, i, j, c) over all images and positions. Returns shape {d}.
Tensor ggap(const Tensor& z_tensor);

struct AttentionMaps {
  Tensor m_att;    // N x h x w, <u, Z(n,i,j,:)>
  Tensor weights;  // N x h x w, sigmoid(m_att)
};

/// 1x1 correlation of the group statistic with every node, then sigmoid.
AttentionMaps attention_correlate(const Tensor& u, const Tensor& z_tensor);

/// K = D^{1/2} Z Z^T D^{1/2} held in factored form; products cost O(n d).
class KernelOperator {
 public:
  /// z: n x d row-major node features; weights: n attention weights in (0, 1].
  KernelOperator(std::vector<double> z, std::size_t n, std::size_t d,
                 std::span<const double> weights);

  std::size_t size() const { return n_; }
  std::size_t feature_dim() const { return d_; }

  /// D^{1/2}(Z(Z^T(D^{1/2} v))).
  std::vector<double> apply(std::span<const double> v) const;
  /// Dense n x n matrix, row-major. Refuses n > 512.
  std::vector<double> dense() const;

  static constexpr std::size_t kMaxDense = 512;

 private:
  std::vector<double> z_;
  std::vector<double> sqrt_w_;
  std::size_t n_, d_;
};

/// Weighted two-cluster k-means objective
///   sum_{i in f} w_i |z_i - m_f|^2 + sum_{i in b} w_i |z_i - m_b|^2
/// with weighted cluster means. y[i] != 0 puts node i in the foreground.
/// Throws DegenerateAssignmentError if either cluster is empty.
double clustering_objective_discrete(std::span<const double> z, std::size_t n, std::size_t d,
                                     std::span<const double> weights,
                                     std::span<const std::uint8_t> y);

/// Ratio association y^T K y / y^T y + v^T K v / v^T v with v = 1 - y,
/// i.e. -L_gc. Throws DomainError if y leaves [0, 1] or a cluster is empty.
double ratio_association(const KernelOperator& k, std::span<const double> y);

/// L_gc = -(y^T K y / y^T y + (1-y)^T K (1-y) / (1-y)^T (1-y)) as a
/// differentiable function of Z (n x d) and the attention weights (n values);
/// y_hat is held constant.
Tensor clustering_loss(const Tensor& z_rows, const Tensor& weights, std::span<const double> y_hat);

struct RelaxedIndicator {
  std::vector<double> y;          // y_hat in [eps, 1 - eps]
  std::vector<double> objective;  // -L_gc before the first step and after every step
  std::size_t accepted_steps = 0;
};

/// Projected gradient ascent on the ratio association, starting from the
/// attention weights. Each step tries the configured step size and halves
/// it until the objective does not decrease; the iteration stops early once
/// no halving helps. Throws NumericalError on non-finite intermediates.
RelaxedIndicator solve_relaxed_indicator(const KernelOperator& k, std::span<const double> weights,
                                         const AgcmConfig& cfg);

/// Min-max normalizes y_hat to [0, 1] (all 0.5 if its range is below 1e-9)
/// and reshapes it to N x h x w.
Tensor make_coattention(std::span<const double> y_hat, std::size_t images, std::size_t height,
                        std::size_t width);

/// Appends the co-attention maps as channel d of the N x h x w x d features.
Tensor fuse_features(const Tensor& coattention, const Tensor& z_tensor);

}  // namespace gcagc
