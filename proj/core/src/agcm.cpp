#include "gcagc/agcm.hpp"

#include <algorithm>
#include <cmath>

#include "gcagc/error.hpp"
#include "gcagc/ops.hpp"

namespace gcagc {

void AgcmConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("solver step size must be positive");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("solver epsilon must lie in (0, 0.5)");
}

Tensor ggap(const Tensor& z_tensor) {
  if (z_tensor.rank() != 4) {
    throw DimensionError("ggap expects N x h x w x d, got " + to_string(z_tensor.shape()));
  }
  const std::size_t d = z_tensor.dim(3);
  return reduce_mean(reshape(z_tensor, {z_tensor.numel() / d, d}), 0);
}

AttentionMaps attention_correlate(const Tensor& u, const Tensor& z_tensor) {
  if (z_tensor.rank() != 4 || u.rank() != 1 || u.dim(0) != z_tensor.dim(3)) {
    throw DimensionError("attention_correlate: statistic " + to_string(u.shape()) +
                         " does not match features " + to_string(z_tensor.shape()));
  }
  const std::size_t d = u.dim(0);
  const Shape maps{z_tensor.dim(0), z_tensor.dim(1), z_tensor.dim(2)};
  Tensor rows = reshape(z_tensor, {z_tensor.numel() / d, d});
  Tensor m = reshape(matmul(rows, reshape(u, {d, 1})), maps);
  return {m, sigmoid(m)};
}

KernelOperator::KernelOperator(std::vector<double> z, std::size_t n, std::size_t d,
                               std::span<const double> weights)
    : z_(std::move(z)), sqrt_w_(n), n_(n), d_(d) {
  if (z_.size() != n * d || weights.size() != n) {
    throw DimensionError("KernelOperator: " + std::to_string(z_.size()) + " feature values and " +
                         std::to_string(weights.size()) + " weights for " + std::to_string(n) +
                         " nodes of width " + std::to_string(d));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] >= 0.0)) throw DomainError("KernelOperator: negative weight");
    sqrt_w_[i] = std::sqrt(weights[i]);
  }
}

std::vector<double> KernelOperator::apply(std::span<const double> v) const {
  if (v.size() != n_) {
    throw DimensionError("KernelOperator::apply: vector of length " + std::to_string(v.size()) +
                         " for " + std::to_string(n_) + " nodes");
  }
  std::vector<double> p(d_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    const double t = sqrt_w_[i] * v[i];
    const double* zi = z_.data() + i * d_;
    for (std::size_t c = 0; c < d_; ++c) p[c] += zi[c] * t;
  }
  std::vector<double> out(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const double* zi = z_.data() + i * d_;
    double s = 0.0;
    for (std::size_t c = 0; c < d_; ++c) s += zi[c] * p[c];
    out[i] = sqrt_w_[i] * s;
  }
  return out;
}

std::vector<double> KernelOperator::dense() const {
  if (n_ > kMaxDense) {
    throw ConfigError("refusing to materialize a " + std::to_string(n_) + "-node kernel");
  }
  std::vector<double> k(n_ * n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d_; ++c) s += z_[i * d_ + c] * z_[j * d_ + c];
      k[i * n_ + j] = sqrt_w_[i] * s * sqrt_w_[j];
    }
  return k;
}

double clustering_objective_discrete(std::span<const double> z, std::size_t n, std::size_t d,
                                     std::span<const double> weights,
                                     std::span<const std::uint8_t> y) {
  if (z.size() != n * d || weights.size() != n || y.size() != n) {
    throw DimensionError("clustering_objective_discrete: inconsistent sizes");
  }
  double total = 0.0;
  for (int cluster = 0; cluster < 2; ++cluster) {
    std::vector<double> mean(d, 0.0);
    double mass = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((y[i] != 0) != (cluster == 0)) continue;
      ++count;
      mass += weights[i];
      for (std::size_t c = 0; c < d; ++c) mean[c] += weights[i] * z[i * d + c];
    }
    if (count == 0) {
      throw DegenerateAssignmentError(std::string(cluster == 0 ? "foreground" : "background") +
                                      " cluster is empty");
    }
    if (!(mass > 0.0)) throw DegenerateAssignmentError("cluster has zero total weight");
    for (auto& m : mean) m /= mass;
    for (std::size_t i = 0; i < n; ++i) {
      if ((y[i] != 0) != (cluster == 0)) continue;
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = z[i * d + c] - mean[c];
        sq += diff * diff;
      }
      total += weights[i] * sq;
    }
  }
  return total;
}

namespace {

void check_indicator(std::span<const double> y) {
  for (double v : y) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("cluster indicator entry " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

struct RatioTerms {
  double value;
  std::vector<double> ky;  // K y
  double fg_quotient, bg_quotient, yy, vv;
};

// Evaluates both Rayleigh quotients given K*1 so that K(1-y) = K1 - Ky.
RatioTerms ratio_terms(const KernelOperator& k, std::span<const double> y,
                       std::span<const double> k_ones) {
  RatioTerms t;
  t.ky = k.apply(y);
  double yky = 0.0, vkv = 0.0;
  t.yy = 0.0;
  t.vv = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = 1.0 - y[i];
    yky += y[i] * t.ky[i];
    vkv += v * (k_ones[i] - t.ky[i]);
    t.yy += y[i] * y[i];
    t.vv += v * v;
  }
  if (!(t.yy > 0.0) || !(t.vv > 0.0)) {
    throw DomainError("cluster indicator leaves one cluster empty");
  }
  t.fg_quotient = yky / t.yy;
  t.bg_quotient = vkv / t.vv;
  t.value = t.fg_quotient + t.bg_quotient;
  return t;
}

}  // namespace

double ratio_association(const KernelOperator& k, std::span<const double> y) {
  if (y.size() != k.size()) throw DimensionError("ratio_association: indicator length mismatch");
  check_indicator(y);
  const std::vector<double> ones(k.size(), 1.0);
  return ratio_terms(k, y, k.apply(ones)).value;
}

Tensor clustering_loss(const Tensor& z_rows, const Tensor& weights, std::span<const double> y_hat) {
  if (z_rows.rank() != 2) {
    throw DimensionError("clustering_loss expects n x d features, got " + to_string(z_rows.shape()));
  }
  const std::size_t n = z_rows.dim(0);
  if (weights.numel() != n || y_hat.size() != n) {
    throw DimensionError("clustering_loss: " + std::to_string(n) + " nodes but " +
                         std::to_string(weights.numel()) + " weights and " +
                         std::to_string(y_hat.size()) + " indicator entries");
  }
  check_indicator(y_hat);
  std::vector<double> fg(y_hat.begin(), y_hat.end()), bg(n);
  double yy = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    bg[i] = 1.0 - fg[i];
    yy += fg[i] * fg[i];
    vv += bg[i] * bg[i];
  }
  if (!(yy > 0.0) || !(vv > 0.0)) throw DomainError("clustering_loss: empty cluster");

  Tensor sqrt_w = gcagc::sqrt(reshape(weights, {n, 1}));
  Tensor zt = transpose(z_rows);
  auto quadratic = [&](std::vector<double> y) {
    // y^T K y = |Z^T (D^{1/2} y)|^2
    Tensor p = matmul(zt, mul(sqrt_w, Tensor::from_data({n, 1}, std::move(y))));
    return reduce_sum(mul(p, p));
  };
  return add(scale(quadratic(std::move(fg)), -1.0 / yy), scale(quadratic(std::move(bg)), -1.0 / vv));
}

RelaxedIndicator solve_relaxed_indicator(const KernelOperator& k, std::span<const double> weights,
                                         const AgcmConfig& cfg) {
  cfg.validate();
  const std::size_t n = k.size();
  if (weights.size() != n) throw DimensionError("solve_relaxed_indicator: weight length mismatch");
  const double lo = cfg.epsilon, hi = 1.0 - cfg.epsilon;

  RelaxedIndicator result;
  result.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.y[i] = std::clamp(weights[i], lo, hi);

  const std::vector<double> ones(n, 1.0);
  const std::vector<double> k_ones = k.apply(ones);
  RatioTerms cur = ratio_terms(k, result.y, k_ones);
  result.objective.push_back(cur.value);

  std::vector<double> grad(n), candidate(n);
  for (std::size_t step = 0; step < cfg.solver_steps; ++step) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = 1.0 - result.y[i];
      const double kv = k_ones[i] - cur.ky[i];
      grad[i] = 2.0 * (cur.ky[i] - cur.fg_quotient * result.y[i]) / cur.yy -
                2.0 * (kv - cur.bg_quotient * v) / cur.vv;
      if (!std::isfinite(grad[i])) {
        throw NumericalError("relaxed indicator solver: non-finite gradient at step " +
                             std::to_string(step));
      }
    }
    bool accepted = false;
    double eta = cfg.step_size;
    for (int halving = 0; halving < 30 && !accepted; ++halving, eta *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) {
        candidate[i] = std::clamp(result.y[i] + eta * grad[i], lo, hi);
      }
      RatioTerms next = ratio_terms(k, candidate, k_ones);
      if (!std::isfinite(next.value)) {
        throw NumericalError("relaxed indicator solver: non-finite objective at step " +
                             std::to_string(step));
      }
      if (next.value >= cur.value) {
        result.y.swap(candidate);
        cur = std::move(next);
        accepted = true;
      }
    }
    if (!accepted) break;
    ++result.accepted_steps;
    result.objective.push_back(cur.value);
  }
  return result;
}

Tensor make_coattention(std::span<const double> y_hat, std::size_t images, std::size_t height,
                        std::size_t width) {
  if (y_hat.size() != images * height * width) {
    throw DimensionError("make_coattention: " + std::to_string(y_hat.size()) +
                         " values for a group of " + std::to_string(images) + " maps of " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const auto [mn, mx] = std::minmax_element(y_hat.begin(), y_hat.end());
  const double range = *mx - *mn;
  std::vector<double> out(y_hat.size(), 0.5);
  if (range >= 1e-9) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (y_hat[i] - *mn) / range;
  }
  return Tensor::from_data({images, height, width}, std::move(out));
}

Tensor fuse_features(const Tensor& coattention, const Tensor& z_tensor) {
  if (coattention.rank() != 3 || z_tensor.rank() != 4 || coattention.dim(0) != z_tensor.dim(0) ||
      coattention.dim(1) != z_tensor.dim(1) || coattention.dim(2) != z_tensor.dim(2)) {
    throw DimensionError("fuse_features: maps " + to_string(coattention.shape()) +
                         " do not match features " + to_string(z_tensor.shape()));
  }
  Tensor maps = reshape(coattention, {coattention.dim(0), coattention.dim(1), coattention.dim(2), 1});
  return concat({z_tensor, maps}, 3);
}

}  // namespace gcagc
