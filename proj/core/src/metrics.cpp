#include "gcagc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gcagc/error.hpp"

namespace gcagc {

namespace {

// Largest k with k / 255 <= v, or -1 when v < 0.
int top_threshold(double v) {
  if (!(v >= 0.0)) return -1;
  int k = static_cast<int>(std::min(255.0, std::floor(v * 255.0)));
  while (k < 255 && (k + 1) / 255.0 <= v) ++k;
  while (k >= 0 && k / 255.0 > v) --k;
  return k;
}

void check_pair(const Image& m, const Image& g, std::size_t i) {
  if (m.width != g.width || m.height != g.height || m.channels != 1 || g.channels != 1) {
    throw InputError("map/ground-truth pair " + std::to_string(i) + " differs in size or channels");
  }
}

}  // namespace

void SweepCounts::add(std::span<const double> map, std::span<const double> gt) {
  if (map.size() != gt.size()) {
    throw InputError("map has " + std::to_string(map.size()) + " pixels, ground truth " +
                     std::to_string(gt.size()));
  }
  std::array<std::uint64_t, kThresholds + 1> hist_pos{}, hist_neg{};
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (gt[i] != 0.0 && gt[i] != 1.0) throw InputError("ground truth is not binary");
    const int k = top_threshold(map[i]);
    if (k < 0) {
      (gt[i] == 1.0 ? positives : negatives) += 1;
      continue;
    }
    (gt[i] == 1.0 ? hist_pos : hist_neg)[k] += 1;
    (gt[i] == 1.0 ? positives : negatives) += 1;
  }
  // Predicted positive at threshold k: every pixel whose top threshold is >= k.
  std::uint64_t cp = 0, cn = 0;
  for (int k = static_cast<int>(kThresholds) - 1; k >= 0; --k) {
    cp += hist_pos[k];
    cn += hist_neg[k];
    tp[k] += cp;
    fp[k] += cn;
  }
}

Curves curves_from_counts(const SweepCounts& s) {
  Curves c;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const double tp = static_cast<double>(s.tp[k]), fp = static_cast<double>(s.fp[k]);
    c.precision.push_back(tp + fp > 0 ? tp / (tp + fp) : 1.0);
    c.recall.push_back(s.positives ? tp / static_cast<double>(s.positives) : 0.0);
    c.tpr.push_back(c.recall.back());
    c.fpr.push_back(s.negatives ? fp / static_cast<double>(s.negatives) : 0.0);
  }
  return c;
}

Curves threshold_sweep(const std::vector<Image>& maps, const std::vector<Image>& gts) {
  if (maps.size() != gts.size()) {
    throw InputError(std::to_string(maps.size()) + " maps for " + std::to_string(gts.size()) +
                     " ground truths");
  }
  SweepCounts s;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    check_pair(maps[i], gts[i], i);
    s.add(maps[i].pixels, gts[i].pixels);
  }
  return curves_from_counts(s);
}

double average_precision(const Curves& c) {
  std::vector<std::pair<double, double>> pts;  // (recall, precision)
  for (std::size_t k = 0; k < c.recall.size(); ++k) pts.emplace_back(c.recall[k], c.precision[k]);
  std::sort(pts.begin(), pts.end());
  // Envelope from the right.
  for (std::size_t i = pts.size(); i-- > 1;) {
    pts[i - 1].second = std::max(pts[i - 1].second, pts[i].second);
  }
  if (pts.empty()) return 0.0;
  double area = pts.front().first * pts.front().second;  // flat extension to r = 0
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  }
  return area;
}

double roc_auc(const Curves& c) {
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {1.0, 1.0}};
  for (std::size_t k = 0; k < c.fpr.size(); ++k) pts.emplace_back(c.fpr[k], c.tpr[k]);
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  }
  return area;
}

double f_measure(const Curves& c, double b2) {
  double best = 0.0;
  for (std::size_t k = 0; k < c.precision.size(); ++k) {
    const double p = c.precision[k], r = c.recall[k];
    const double den = b2 * p + r;
    if (den > 0) best = std::max(best, (1 + b2) * p * r / den);
  }
  return best;
}

double mae(const std::vector<Image>& maps, const std::vector<Image>& gts) {
  if (maps.size() != gts.size()) throw InputError("mae: map and ground-truth counts differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    check_pair(maps[i], gts[i], i);
    for (std::size_t p = 0; p < maps[i].pixels.size(); ++p) {
      sum += std::abs(maps[i].pixels[p] - gts[i].pixels[p]);
    }
    count += maps[i].pixels.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

namespace {

constexpr double kEps = 2.2204e-16;

struct Moments {
  double mean = 0.0, var = 0.0;  // unbiased variance
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(v.size() - 1);
  }
  return m;
}

double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const Moments m = moments(values);
  return 2.0 * m.mean / (m.mean * m.mean + 1.0 + std::sqrt(m.var) + kEps);
}

double ssim(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  const Moments mx = moments(x), my = moments(y);
  double cov = 0.0;
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) cov += (x[i] - mx.mean) * (y[i] - my.mean);
    cov /= static_cast<double>(n - 1);
  }
  const double alpha = 4.0 * mx.mean * my.mean * cov;
  const double beta = (mx.mean * mx.mean + my.mean * my.mean) * (mx.var + my.var);
  if (alpha != 0.0) return alpha / (beta + kEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

}  // namespace

double s_measure(const Image& map, const Image& gt, double alpha) {
  check_pair(map, gt, 0);
  const std::size_t w = map.width, h = map.height, n = w * h;
  double fg_count = 0.0;
  for (double g : gt.pixels) fg_count += g;
  const double y = fg_count / static_cast<double>(n);
  double pred_mean = 0.0;
  for (double v : map.pixels) pred_mean += v;
  pred_mean /= static_cast<double>(n);
  if (fg_count == 0.0) return 1.0 - pred_mean;
  if (fg_count == static_cast<double>(n)) return pred_mean;

  // Object-aware term.
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < n; ++i) {
    if (gt.pixels[i] == 1.0) fg.push_back(map.pixels[i]);
    else bg.push_back(1.0 - map.pixels[i]);
  }
  const double s_object = y * object_score(fg) + (1.0 - y) * object_score(bg);

  // Region-aware term: quadrants split at the rounded (1-based) centroid.
  double sx = 0.0, sy = 0.0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      if (gt.pixels[r * w + c] == 1.0) {
        sx += static_cast<double>(c + 1);
        sy += static_cast<double>(r + 1);
      }
  const auto cx = static_cast<std::size_t>(std::lround(sx / fg_count));
  const auto cy = static_cast<std::size_t>(std::lround(sy / fg_count));
  const std::size_t r0[4] = {0, 0, cy, cy}, r1[4] = {cy, cy, h, h};
  const std::size_t c0[4] = {0, cx, 0, cx}, c1[4] = {cx, w, cx, w};
  double s_region = 0.0;
  for (int q = 0; q < 4; ++q) {
    std::vector<double> pv, gv;
    for (std::size_t r = r0[q]; r < r1[q]; ++r)
      for (std::size_t c = c0[q]; c < c1[q]; ++c) {
        pv.push_back(map.pixels[r * w + c]);
        gv.push_back(gt.pixels[r * w + c]);
      }
    const double weight = static_cast<double>(pv.size()) / static_cast<double>(n);
    if (!pv.empty()) s_region += weight * ssim(pv, gv);
  }
  return std::max(0.0, alpha * s_object + (1.0 - alpha) * s_region);
}

EvalResult evaluate(const std::vector<Image>& maps, const std::vector<Image>& gts) {
  EvalResult r;
  r.curves = threshold_sweep(maps, gts);
  r.ap = average_precision(r.curves);
  r.auc = roc_auc(r.curves);
  r.f_beta = f_measure(r.curves);
  r.mae = mae(maps, gts);
  double s = 0.0;
  for (std::size_t i = 0; i < maps.size(); ++i) s += s_measure(maps[i], gts[i]);
  r.s_measure = maps.empty() ? 0.0 : s / static_cast<double>(maps.size());
  return r;
}

namespace {

std::vector<std::pair<const char*, double>> scalars(const EvalResult& r) {
  return {{"AP", r.ap}, {"ROC_AUC", r.auc}, {"F_beta", r.f_beta}, {"S_measure", r.s_measure},
          {"MAE", r.mae}};
}

}  // namespace

std::string format_report(const EvalResult& r) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  for (const auto& [k, v] : scalars(r)) os << k << ": " << v << '\n';
  return os.str();
}

std::string format_metrics_csv(const EvalResult& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "metric,value\n";
  for (const auto& [k, v] : scalars(r)) os << k << ',' << v << '\n';
  return os.str();
}

std::string format_curves_csv(const Curves& c) {
  std::ostringstream os;
  os << std::setprecision(17) << "threshold,precision,recall,tpr,fpr\n";
  for (std::size_t k = 0; k < c.precision.size(); ++k) {
    os << k / 255.0 << ',' << c.precision[k] << ',' << c.recall[k] << ',' << c.tpr[k] << ','
       << c.fpr[k] << '\n';
  }
  return os.str();
}

}  // namespace gcagc
