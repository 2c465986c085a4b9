#include "gcagc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gcagc/error.hpp"

namespace gcagc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Eigen::Index;

using detail::Node;
using detail::make_result;

ConstMatMap cmap(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return ConstMatMap(v.data(), static_cast<Index>(rows), static_cast<Index>(cols));
}
ConstMatMap cmap(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMatMap(p, static_cast<Index>(rows), static_cast<Index>(cols));
}
MatMap mmap(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MatMap(v.data(), static_cast<Index>(rows), static_cast<Index>(cols));
}
MatMap mmap(double* p, std::size_t rows, std::size_t cols) {
  return MatMap(p, static_cast<Index>(rows), static_cast<Index>(cols));
}

std::vector<double> copy_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(t.shape()));
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

template <class Fwd, class Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(name, x.shape(), std::move(out), {x}, [deriv](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
  });
}

// Splits a shape around `axis` into (outer, extent, inner) loop counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_axis(const char* op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + to_string(x.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;  // conv input
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;             // conv output
};

// cols: (channels*kh*kw) x (out_h*out_w)
void im2col(const double* in, const ConvGeometry& g, double* cols) {
  const std::size_t out_hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                         static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = in + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                           static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width))
                          ? 0.0
                          : src[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

// Scatter-add of cols back into an input-shaped buffer.
void col2im_add(const double* cols, const ConvGeometry& g, double* out) {
  const std::size_t out_hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                         static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = out + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                           static_cast<std::ptrdiff_t>(g.pad);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dst[static_cast<std::size_t>(x)] += src[ox];
          }
        }
      }
    }
  }
}

std::size_t conv_out_extent(const char* op, std::size_t in, std::size_t k, std::size_t stride,
                            std::size_t pad) {
  if (stride == 0) throw ConfigError(std::string(op) + ": stride must be >= 1");
  if (k > in + 2 * pad) {
    throw ConfigError(std::string(op) + ": kernel " + std::to_string(k) +
                      " larger than padded input " + std::to_string(in + 2 * pad));
  }
  if ((in + 2 * pad - k) % stride != 0) {
    throw ConfigError(std::string(op) + ": output extent (" + std::to_string(in) + "+2*" +
                      std::to_string(pad) + "-" + std::to_string(k) + ")/" +
                      std::to_string(stride) + "+1 is not integral");
  }
  return (in + 2 * pad - k) / stride + 1;
}

void check_bias(const char* op, const Tensor& bias, std::size_t channels) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw DimensionError(std::string(op) + ": bias shape " + to_string(bias.shape()) +
                         " does not match " + std::to_string(channels) + " channels");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto out = copy_of(a);
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto out = copy_of(a);
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto out = copy_of(a);
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v < 0.0 ? 0.0 : v; },  // NaN passes through
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("sqrt: input must be positive, got " + std::to_string(v));
  }
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor log_clamped(const Tensor& x, double lo, double hi) {
  return unary(
      "log_clamped", x, [lo, hi](double v) { return std::log(std::clamp(v, lo, hi)); },
      [lo, hi](double in, double) { return (in >= lo && in <= hi) ? 1.0 / in : 0.0; });
}

Tensor scale_gradient(const Tensor& x, double factor, std::string name) {
  return make_result(std::move(name), x.shape(), copy_of(x), {x}, [factor](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  mmap(out, m, n).noalias() = cmap(a.data().data(), m, k) * cmap(b.data().data(), k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    auto g = cmap(self.grad, m, n);
    if (pa.requires_grad) mmap(pa.ensure_grad(), m, k).noalias() += g * cmap(pb.data, k, n).transpose();
    if (pb.requires_grad) mmap(pb.ensure_grad(), k, n).noalias() += cmap(pa.data, m, k).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  mmap(out, n, m) = cmap(a.data().data(), m, n).transpose();
  return make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    mmap(p.ensure_grad(), m, n) += cmap(self.grad, n, m).transpose();
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("reduce_sum", {}, {s}, {x}, [](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    for (auto& g : p.ensure_grad()) g += self.grad[0];
  });
}

Tensor reduce_mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("reduce_mean", {}, {s * inv}, {x}, [inv](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    for (auto& g : p.ensure_grad()) g += self.grad[0] * inv;
  });
}

namespace {

Tensor reduce_axis(const char* name, const Tensor& x, std::size_t axis, double factor) {
  require_axis(name, x, axis);
  const auto s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += in[(o * s.extent + e) * s.inner + i];
  for (auto& v : out) v *= factor;
  return make_result(name, std::move(shape), std::move(out), {x}, [s, factor](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t i = 0; i < s.inner; ++i)
          g[(o * s.extent + e) * s.inner + i] += factor * self.grad[o * s.inner + i];
  });
}

}  // namespace

Tensor reduce_sum(const Tensor& x, std::size_t axis) {
  return reduce_axis("reduce_sum_axis", x, axis, 1.0);
}

Tensor reduce_mean(const Tensor& x, std::size_t axis) {
  require_axis("reduce_mean_axis", x, axis);
  return reduce_axis("reduce_mean_axis", x, axis, 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor softmax_axis(const Tensor& x, std::size_t axis) {
  require_axis("softmax_axis", x, axis);
  const auto s = split_at(x.shape(), axis);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, in[base + e * s.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double v = std::exp(in[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  return make_result("softmax_axis", x.shape(), std::move(out), {x}, [s](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = base + e * s.inner;
          dot += self.grad[k] * self.data[k];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = base + e * s.inner;
          g[k] += self.data[k] * (self.grad[k] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  return make_result("reshape", std::move(shape), copy_of(x), {x}, [](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  if (axes.size() != rank) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for " +
                         to_string(x.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: axes are not a permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.dim(i);
  Shape shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = x.dim(axes[i]);
    src_strides[i] = in_strides[axes[i]];
  }
  // index[i] = source offset of output element i
  std::vector<std::size_t> index(x.numel());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < index.size(); ++flat) {
    index[flat] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      if (++counter[d] < shape[d]) {
        offset += src_strides[d];
        break;
      }
      offset -= src_strides[d] * (shape[d] - 1);
      counter[d] = 0;
    }
  }
  std::vector<double> out(index.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[index[i]];
  return make_result("permute", std::move(shape), std::move(out), {x},
                     [index = std::move(index)](Node& self) {
                       Node& p = parent(self, 0);
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_axis("slice", x, axis);
  if (length == 0 || start + length > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside axis of extent " +
                         std::to_string(x.dim(axis)));
  }
  const auto s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = in.data() + (o * s.extent + start) * s.inner;
    std::copy(src, src + length * s.inner, out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  }
  return make_result("slice", std::move(shape), std::move(out), {x}, [s, start, length](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = g.data() + (o * s.extent + start) * s.inner;
      const double* src = self.grad.data() + o * length * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  require_axis("concat", parts[0], axis);
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const auto& t : parts) {
    Shape a = t.shape(), b = shape;
    if (a.size() != b.size()) throw DimensionError("concat: rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw DimensionError("concat: shapes " + to_string(shape) + " and " + to_string(t.shape()) +
                           " differ off axis " + std::to_string(axis));
    }
    extents.push_back(t.dim(axis));
    total += t.dim(axis);
  }
  shape[axis] = total;
  const auto s = split_at(shape, axis);
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    const std::size_t chunk = extents[k] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy(in.begin() + static_cast<std::ptrdiff_t>(o * chunk),
                in.begin() + static_cast<std::ptrdiff_t>((o + 1) * chunk),
                out.begin() + static_cast<std::ptrdiff_t>(o * total * s.inner + offset * s.inner));
    }
    offset += extents[k];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result("concat", std::move(shape), std::move(out), inputs,
                     [s, total, extents](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < extents.size(); ++k) {
                         Node& p = parent(self, k);
                         const std::size_t chunk = extents[k] * s.inner;
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             const double* src =
                                 self.grad.data() + o * total * s.inner + offset * s.inner;
                             for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
                           }
                         }
                         offset += extents[k];
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " has " +
                         std::to_string(x.dim(1)) + " channels, weight " + to_string(w.shape()) +
                         " expects " + std::to_string(w.dim(1)));
  }
  const std::size_t n = x.dim(0), f = w.dim(0);
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), stride, pad, 0, 0};
  g.out_h = conv_out_extent("conv2d", g.height, g.kh, stride, pad);
  g.out_w = conv_out_extent("conv2d", g.width, g.kw, stride, pad);
  check_bias("conv2d", bias, f);
  const std::size_t ckk = g.channels * g.kh * g.kw, ohw = g.out_h * g.out_w,
                    in_size = g.channels * g.height * g.width;
  std::vector<double> out(n * f * ohw);
  std::vector<double> cols(ckk * ohw);
  auto wm = cmap(w.data().data(), f, ckk);
  for (std::size_t b = 0; b < n; ++b) {
    im2col(x.data().data() + b * in_size, g, cols.data());
    auto o = mmap(out.data() + b * f * ohw, f, ohw);
    o.noalias() = wm * cmap(cols, ckk, ohw);
    if (bias.defined()) {
      for (std::size_t c = 0; c < f; ++c) o.row(static_cast<Index>(c)).array() += bias.data()[c];
    }
  }
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("conv2d", {n, f, g.out_h, g.out_w}, std::move(out), inputs,
                     [g, n, f, ckk, ohw, in_size](Node& self) {
                       Node& px = parent(self, 0);
                       Node& pw = parent(self, 1);
                       Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
                       std::vector<double> cols(ckk * ohw);
                       auto wm = cmap(pw.data, f, ckk);
                       for (std::size_t b = 0; b < n; ++b) {
                         auto go = cmap(self.grad.data() + b * f * ohw, f, ohw);
                         if (pw.requires_grad) {
                           im2col(px.data.data() + b * in_size, g, cols.data());
                           mmap(pw.ensure_grad(), f, ckk).noalias() +=
                               go * cmap(cols, ckk, ohw).transpose();
                         }
                         if (pb && pb->requires_grad) {
                           auto& gb = pb->ensure_grad();
                           // Plain loop: Eigen's vectorized sum peels by address alignment,
                           // which would make results depend on heap placement.
                           const double* row = self.grad.data() + b * f * ohw;
                           for (std::size_t c = 0; c < f; ++c) {
                             double s = 0.0;
                             for (std::size_t i = 0; i < ohw; ++i) s += row[c * ohw + i];
                             gb[c] += s;
                           }
                         }
                         if (px.requires_grad) {
                           mmap(cols, ckk, ohw).noalias() = wm.transpose() * go;
                           col2im_add(cols.data(), g, px.ensure_grad().data() + b * in_size);
                         }
                       }
                     });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        std::size_t stride, std::size_t pad) {
  require_rank("conv_transpose2d", x, 4);
  require_rank("conv_transpose2d", w, 4);
  if (stride == 0) throw ConfigError("conv_transpose2d: stride must be >= 1");
  if (x.dim(1) != w.dim(0)) {
    throw DimensionError("conv_transpose2d: input " + to_string(x.shape()) + " has " +
                         std::to_string(x.dim(1)) + " channels, weight " + to_string(w.shape()) +
                         " expects " + std::to_string(w.dim(0)));
  }
  const std::size_t n = x.dim(0), ci = w.dim(0), co = w.dim(1);
  const std::size_t h = x.dim(2), wd = x.dim(3), kh = w.dim(2), kw = w.dim(3);
  if ((h - 1) * stride + kh < 2 * pad + 1 || (wd - 1) * stride + kw < 2 * pad + 1) {
    throw ConfigError("conv_transpose2d: padding " + std::to_string(pad) +
                      " leaves an empty output");
  }
  const std::size_t out_h = (h - 1) * stride + kh - 2 * pad;
  const std::size_t out_w = (wd - 1) * stride + kw - 2 * pad;
  // Geometry of the conv2d whose input-gradient this op computes.
  ConvGeometry g{co, out_h, out_w, kh, kw, stride, pad, h, wd};
  check_bias("conv_transpose2d", bias, co);
  const std::size_t ckk = co * kh * kw, hw = h * wd, out_size = co * out_h * out_w;
  std::vector<double> out(n * out_size, 0.0);
  std::vector<double> cols(ckk * hw);
  auto wm = cmap(w.data().data(), ci, ckk);
  for (std::size_t b = 0; b < n; ++b) {
    mmap(cols, ckk, hw).noalias() = wm.transpose() * cmap(x.data().data() + b * ci * hw, ci, hw);
    double* o = out.data() + b * out_size;
    col2im_add(cols.data(), g, o);
    if (bias.defined()) {
      for (std::size_t c = 0; c < co; ++c) {
        double* plane = o + c * out_h * out_w;
        for (std::size_t i = 0; i < out_h * out_w; ++i) plane[i] += bias.data()[c];
      }
    }
  }
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("conv_transpose2d", {n, co, out_h, out_w}, std::move(out), inputs,
                     [g, n, ci, co, ckk, hw, out_size](Node& self) {
                       Node& px = parent(self, 0);
                       Node& pw = parent(self, 1);
                       Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
                       std::vector<double> cols(ckk * hw);
                       auto wm = cmap(pw.data, ci, ckk);
                       for (std::size_t b = 0; b < n; ++b) {
                         const double* go = self.grad.data() + b * out_size;
                         if (pb && pb->requires_grad) {
                           auto& gb = pb->ensure_grad();
                           const std::size_t plane = g.height * g.width;
                           for (std::size_t c = 0; c < co; ++c) {
                             double s = 0.0;
                             for (std::size_t i = 0; i < plane; ++i) s += go[c * plane + i];
                             gb[c] += s;
                           }
                         }
                         if (!px.requires_grad && !pw.requires_grad) continue;
                         im2col(go, g, cols.data());
                         auto c = cmap(cols, ckk, hw);
                         if (px.requires_grad) {
                           mmap(px.ensure_grad().data() + b * ci * hw, ci, hw).noalias() += wm * c;
                         }
                         if (pw.requires_grad) {
                           mmap(pw.ensure_grad(), ci, ckk).noalias() +=
                               cmap(px.data.data() + b * ci * hw, ci, hw) * c.transpose();
                         }
                       }
                     });
}

Tensor maxpool2d(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("maxpool2d: needs rank >= 2, got " + to_string(x.shape()));
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ConfigError("maxpool2d: spatial extents must be even, got " + to_string(x.shape()));
  }
  const std::size_t planes = x.numel() / (h * w), oh = h / 2, ow = w / 2;
  Shape shape = x.shape();
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * h * w + 2 * i * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t k = p * h * w + (2 * i + di) * w + 2 * j + dj;
            if (in[k] > in[best] || std::isnan(in[k])) best = k;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  return make_result("maxpool2d", std::move(shape), std::move(out), {x},
                     [argmax = std::move(argmax)](Node& self) {
                       Node& p = parent(self, 0);
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
                     });
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() < 2) {
    throw DimensionError("upsample_nearest2x: needs rank >= 2, got " + to_string(x.shape()));
  }
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.numel() / (h * w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = 2 * h;
  shape[shape.size() - 1] = 2 * w;
  std::vector<double> out(planes * 4 * h * w);
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j)
        out[(p * 2 * h + i) * 2 * w + j] = in[(p * h + i / 2) * w + j / 2];
  return make_result("upsample_nearest2x", std::move(shape), std::move(out), {x},
                     [planes, h, w](Node& self) {
                       Node& p = parent(self, 0);
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t q = 0; q < planes; ++q)
                         for (std::size_t i = 0; i < 2 * h; ++i)
                           for (std::size_t j = 0; j < 2 * w; ++j)
                             g[(q * h + i / 2) * w + j / 2] += self.grad[(q * 2 * h + i) * 2 * w + j];
                     });
}

// ---------------------------------------------------------------------------
// Graph operations

Tensor sigmoid_outer(const Tensor& q, const Tensor& k, std::size_t block_rows) {
  require_rank("sigmoid_outer", q, 2);
  require_rank("sigmoid_outer", k, 2);
  if (q.dim(1) != k.dim(1)) {
    throw DimensionError("sigmoid_outer: projection widths differ " + to_string(q.shape()) +
                         " vs " + to_string(k.shape()));
  }
  if (block_rows == 0) throw ConfigError("sigmoid_outer: block size must be positive");
  const std::size_t n = q.dim(0), m = k.dim(0), r = q.dim(1);
  std::vector<double> out(n * m);
  auto km = cmap(k.data().data(), m, r);
  for (std::size_t start = 0; start < n; start += block_rows) {
    const std::size_t rows = std::min(block_rows, n - start);
    auto blk = mmap(out.data() + start * m, rows, m);
    blk.noalias() = cmap(q.data().data() + start * r, rows, r) * km.transpose();
    for (Index i = 0; i < blk.size(); ++i) {
      const double v = blk.data()[i];
      blk.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
  }
  return make_result("sigmoid_outer", {n, m}, std::move(out), {q, k},
                     [n, m, r, block_rows](Node& self) {
                       Node& pq = parent(self, 0);
                       Node& pk = parent(self, 1);
                       RowMat ds(static_cast<Index>(std::min(block_rows, n)), static_cast<Index>(m));
                       for (std::size_t start = 0; start < n; start += block_rows) {
                         const std::size_t rows = std::min(block_rows, n - start);
                         auto a = cmap(self.data.data() + start * m, rows, m);
                         auto g = cmap(self.grad.data() + start * m, rows, m);
                         auto d = ds.topRows(static_cast<Index>(rows));
                         d = g.array() * a.array() * (1.0 - a.array());
                         if (pq.requires_grad) {
                           mmap(pq.ensure_grad().data() + start * r, rows, r).noalias() +=
                               d * cmap(pk.data, m, r);
                         }
                         if (pk.requires_grad) {
                           mmap(pk.ensure_grad(), m, r).noalias() +=
                               d.transpose() * cmap(pq.data.data() + start * r, rows, r);
                         }
                       }
                     });
}

Tensor normalize_adjacency(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw DimensionError("normalize_adjacency: expected a square matrix, got " +
                         to_string(a.shape()));
  }
  const std::size_t n = a.dim(0);
  auto in = a.data();
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;
    for (std::size_t j = 0; j < n; ++j) deg += in[i * n + j];
    if (std::isnan(deg)) {
      throw NumericalError("normalize_adjacency: non-finite degree at row " + std::to_string(i));
    }
    if (!(deg > 0.0)) {
      throw DomainError("normalize_adjacency: non-positive degree at row " + std::to_string(i));
    }
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = (in[i * n + j] + (i == j ? 1.0 : 0.0)) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return make_result("normalize_adjacency", {n, n}, std::move(out), {a},
                     [n, s = std::move(inv_sqrt_deg)](Node& self) {
                       Node& p = parent(self, 0);
                       if (!p.requires_grad) return;
                       // out_ij = t_ij s_i s_j with s_i = d_i^{-1/2}, d_i = sum_j t_ij.
                       // d out / d t_ij = G_ij s_i s_j + c_i, where
                       // c_i = -1/2 s_i^2 (sum_l G_il out_il + sum_k G_ki out_ki).
                       std::vector<double> c(n, 0.0);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           const double go = self.grad[i * n + j] * self.data[i * n + j];
                           c[i] += go;
                           c[j] += go;
                         }
                       }
                       for (std::size_t i = 0; i < n; ++i) c[i] *= -0.5 * s[i] * s[i];
                       auto& g = p.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += self.grad[i * n + j] * s[i] * s[j] + c[i];
                     });
}

}  // namespace gcagc
