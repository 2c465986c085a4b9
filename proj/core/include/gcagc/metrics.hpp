#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcagc/image.hpp"

namespace gcagc {

inline constexpr std::size_t kThresholds = 256;  // t_k = k / 255
inline constexpr double kBetaSquared = 0.3;

/// Dataset-level confusion counts per threshold; a pixel is predicted
/// positive at t_k when its value is >= t_k.
struct SweepCounts {
  std::array<std::uint64_t, kThresholds> tp{}, fp{};
  std::uint64_t positives = 0, negatives = 0;

  /// Adds one map/ground-truth pair (equal lengths, gt binary). InputError on mismatch.
  void add(std::span<const double> map, std::span<const double> gt);
};

struct Curves {
  std::vector<double> precision, recall, tpr, fpr;  // kThresholds entries each
};

/// precision = TP / (TP + FP), 1 when nothing is predicted positive;
/// recall = tpr = TP / P; fpr = FP / Neg (0 when a class is absent).
Curves curves_from_counts(const SweepCounts& counts);

Curves threshold_sweep(const std::vector<Image>& maps, const std::vector<Image>& gts);

/// Area under the interpolated precision envelope p(r) = max_{r' >= r}
/// precision(r'), trapezoidal over recall with the envelope extended to r = 0.
double average_precision(const Curves& c);
/// Trapezoidal ROC area with (0, 0) and (1, 1) appended.
double roc_auc(const Curves& c);
/// max_k (1 + b2) P R / (b2 P + R), 0 where the denominator vanishes.
double f_measure(const Curves& c, double beta_squared = kBetaSquared);

/// Mean |M - G| over every pixel of every pair.
double mae(const std::vector<Image>& maps, const std::vector<Image>& gts);

/// Structure measure of one map against a binary ground truth, alpha = 0.5.
double s_measure(const Image& map, const Image& gt, double alpha = 0.5);

struct EvalResult {
  Curves curves;
  double ap = 0, auc = 0, f_beta = 0, s_measure = 0, mae = 0;
};

EvalResult evaluate(const std::vector<Image>& maps, const std::vector<Image>& gts);

/// "key: value" lines.
std::string format_report(const EvalResult& r);
/// "metric,value" CSV.
std::string format_metrics_csv(const EvalResult& r);
/// "threshold,precision,recall,tpr,fpr" CSV, one row per threshold.
std::string format_curves_csv(const Curves& c);

}  // namespace gcagc
