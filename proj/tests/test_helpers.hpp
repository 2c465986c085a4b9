#pragma once

#include <gcagc/gradcheck.hpp>
#include <gcagc/model.hpp>
#include <gcagc/ops.hpp>
#include <gcagc/rng.hpp>
#include <gcagc/tensor.hpp>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace gcagc::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Random linear functional of an op's output: sum(r * op(x)).
inline ScalarFunction probe(Rng& rng, const Shape& out_shape,
                            std::function<Tensor(const Tensor&)> op) {
  Tensor weights = random_tensor(rng, out_shape, -1.0, 1.0);
  return [weights, op](const Tensor& x) { return reduce_sum(mul(op(x), weights)); };
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gcagc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// 16x16 input, 4-channel stages, 4x4 graph: fast enough for exhaustive checks.
inline ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.encoder.input_size = 16;
  cfg.encoder.stage_channels = {4, 4, 4};
  cfg.encoder.fpn_channels = 4;
  cfg.encoder.graph_stride = 4;
  cfg.agcn.hidden = 4;
  cfg.agcn.out = 3;
  cfg.agcn.block_rows = 8;
  cfg.agcm.solver_steps = 5;
  return cfg;
}

}  // namespace gcagc::testing
