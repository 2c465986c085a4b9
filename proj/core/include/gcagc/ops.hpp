#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gcagc/tensor.hpp"

// Differentiable tensor operations. Shapes are explicit: binary elementwise
// ops require identical shapes, only scalar ops broadcast.

namespace gcagc {

// Elementwise arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& x) { return scale(x, s); }
inline Tensor operator*(const Tensor& x, double s) { return scale(x, s); }

// Elementwise nonlinearities.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sqrt(const Tensor& x);
/// log(clamp(x, lo, hi)); the gradient is zero where the clamp is active.
Tensor log_clamped(const Tensor& x, double lo = 1e-7, double hi = 1.0 - 1e-7);

// Linear algebra on rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Reductions. The full reductions return a scalar (empty shape); the axis
// variants drop the reduced axis.
Tensor reduce_sum(const Tensor& x);
Tensor reduce_sum(const Tensor& x, std::size_t axis);
Tensor reduce_mean(const Tensor& x);
Tensor reduce_mean(const Tensor& x, std::size_t axis);

/// Exponentials normalized along `axis`, with max subtraction.
Tensor softmax_axis(const Tensor& x, std::size_t axis);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);

// Image operations on N x C x H x W tensors.

/// Cross-correlation with zero padding. w: F x C x kh x kw, bias: F or
/// undefined. Output N x F x ((H+2p-kh)/s+1) x ((W+2p-kw)/s+1).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad);
/// Adjoint of conv2d with respect to its input. x: N x Ci x H x W,
/// w: Ci x Co x kh x kw. Output extent (H-1)*s - 2p + kh; kernel 4, stride 2,
/// pad 1 doubles the resolution.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        std::size_t stride, std::size_t pad);
/// 2x2 max pooling with stride 2 over the last two axes (even extents).
Tensor maxpool2d(const Tensor& x);
/// Nearest-neighbour x2 upsampling over the last two axes.
Tensor upsample_nearest2x(const Tensor& x);

// Graph operations.

/// sigmoid(q * k^T) materialized in row blocks of `block_rows`; q: n x r,
/// k: m x r, result n x m. Peak scratch is O(block_rows * m).
Tensor sigmoid_outer(const Tensor& q, const Tensor& k, std::size_t block_rows = 256);
/// D^{-1/2} (A + I) D^{-1/2} where D is the diagonal of row sums of A + I.
Tensor normalize_adjacency(const Tensor& a);

/// Identity in the forward pass; backward multiplies the incoming gradient by
/// `factor`. Used to inject faults into gradient checks.
Tensor scale_gradient(const Tensor& x, double factor, std::string name = "scale_gradient");

}  // namespace gcagc
