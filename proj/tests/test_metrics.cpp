#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <gcagc/error.hpp>
#include <gcagc/metrics.hpp>
#include <gcagc/rng.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace gcagc;

namespace {

Image gray(std::size_t w, std::size_t h, std::vector<double> px) {
  Image img(w, h, 1);
  img.pixels = std::move(px);
  return img;
}

Image random_mask(Rng& rng, std::size_t w, std::size_t h, double p) {
  Image m(w, h, 1);
  for (auto& v : m.pixels) v = rng.uniform() < p ? 1.0 : 0.0;
  return m;
}

Image random_map(Rng& rng, std::size_t w, std::size_t h) {
  Image m(w, h, 1);
  // Mix of quantized and continuous values so ties with thresholds occur.
  for (auto& v : m.pixels) v = rng.uniform() < 0.5 ? rng.below(256) / 255.0 : rng.uniform();
  return m;
}

// Brute force: direct counting at every threshold.
Curves oracle_curves(const std::vector<Image>& maps, const std::vector<Image>& gts) {
  Curves c;
  double pos = 0, neg = 0;
  for (const auto& g : gts)
    for (double v : g.pixels) (v == 1.0 ? pos : neg) += 1;
  for (int k = 0; k < 256; ++k) {
    const double t = k / 255.0;
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < maps.size(); ++i)
      for (std::size_t p = 0; p < maps[i].pixels.size(); ++p)
        if (maps[i].pixels[p] >= t) (gts[i].pixels[p] == 1.0 ? tp : fp) += 1;
    c.precision.push_back(tp + fp > 0 ? tp / (tp + fp) : 1.0);
    c.recall.push_back(pos > 0 ? tp / pos : 0.0);
    c.tpr.push_back(c.recall.back());
    c.fpr.push_back(neg > 0 ? fp / neg : 0.0);
  }
  return c;
}

// Midpoint-rule integral of the piecewise-linear curve through `pts` (sorted by x,
// vertical jumps allowed) over [0, 1].
double integrate_polyline(std::vector<std::pair<double, double>> pts, std::size_t cells) {
  std::sort(pts.begin(), pts.end());
  const double h = 1.0 / static_cast<double>(cells);
  double area = 0.0;
  std::size_t seg = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    const double x = (i + 0.5) * h;
    while (seg + 1 < pts.size() && pts[seg + 1].first < x) ++seg;
    // Use the last point at the left abscissa and the first at the right one.
    const auto& a = pts[seg];
    const auto& b = pts[std::min(seg + 1, pts.size() - 1)];
    const double y = b.first > a.first ? a.second + (b.second - a.second) * (x - a.first) / (b.first - a.first)
                                       : a.second;
    area += y * h;
  }
  return area;
}

double oracle_ap(const Curves& c) {
  std::vector<std::pair<double, double>> env;
  for (std::size_t k = 0; k < c.recall.size(); ++k) {
    double best = 0.0;
    for (std::size_t j = 0; j < c.recall.size(); ++j)
      if (c.recall[j] >= c.recall[k]) best = std::max(best, c.precision[j]);
    env.emplace_back(c.recall[k], best);
  }
  double at_min = 0.0, min_r = 2.0;
  for (auto& [r, p] : env)
    if (r < min_r || (r == min_r && p > at_min)) min_r = r, at_min = p;
  env.emplace_back(0.0, at_min);
  // Duplicate recalls share one envelope value, so ordering among them is moot.
  return integrate_polyline(env, 1 << 22);
}

double oracle_auc(const Curves& c) {
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {1.0, 1.0}};
  for (std::size_t k = 0; k < c.fpr.size(); ++k) pts.emplace_back(c.fpr[k], c.tpr[k]);
  return integrate_polyline(pts, 1 << 22);
}

double oracle_f(const Curves& c) {
  double best = 0.0;
  for (std::size_t k = 0; k < 256; ++k) {
    const double p = c.precision[k], r = c.recall[k];
    if (0.3 * p + r > 0) best = std::max(best, 1.3 * p * r / (0.3 * p + r));
  }
  return best;
}

}  // namespace

TEST_CASE("threshold sweep matches direct counting") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Image> maps, gts;
    for (int i = 0; i < 3; ++i) {
      const std::size_t w = 3 + rng.below(9), h = 3 + rng.below(9);
      maps.push_back(random_map(rng, w, h));
      gts.push_back(random_mask(rng, w, h, 0.3));
    }
    Curves got = threshold_sweep(maps, gts), want = oracle_curves(maps, gts);
    CHECK(got.precision == want.precision);
    CHECK(got.recall == want.recall);
    CHECK(got.fpr == want.fpr);
    for (std::size_t k = 1; k < 256; ++k) {
      CHECK(got.recall[k] <= got.recall[k - 1]);
      CHECK(got.fpr[k] <= got.fpr[k - 1]);
    }

    // Order-independent aggregation.
    std::reverse(maps.begin(), maps.end());
    std::reverse(gts.begin(), gts.end());
    CHECK(threshold_sweep(maps, gts).precision == got.precision);
  }
}

TEST_CASE("perfect prediction") {
  Rng rng(5);
  std::vector<Image> gts{random_mask(rng, 8, 8, 0.3), random_mask(rng, 5, 7, 0.5)};
  const EvalResult r = evaluate(gts, gts);
  CHECK(r.ap == 1.0);
  CHECK(r.auc == 1.0);
  CHECK(r.f_beta == 1.0);
  CHECK(r.mae == 0.0);
  CHECK(r.s_measure == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t k = 0; k < 256; ++k) CHECK(r.curves.recall[k] == 1.0);
  for (std::size_t k = 1; k < 256; ++k) CHECK(r.curves.precision[k] == 1.0);
}

TEST_CASE("constant map") {
  // 6 of 16 pixels positive.
  std::vector<double> g(16, 0.0);
  for (int i = 0; i < 6; ++i) g[i * 2] = 1.0;
  Image gt = gray(4, 4, g);
  Image half = gray(4, 4, std::vector<double>(16, 0.5));
  const Curves c = threshold_sweep({half}, {gt});
  for (std::size_t k = 0; k < 256; ++k) {
    if (k / 255.0 <= 0.5) {
      CHECK(c.precision[k] == doctest::Approx(6.0 / 16.0).epsilon(1e-15));
      CHECK(c.recall[k] == 1.0);
    } else {
      CHECK(c.recall[k] == 0.0);
    }
  }
  CHECK(std::abs(roc_auc(c) - 0.5) <= 1e-9);
  for (double v : {0.0, 0.2, 1.0}) {
    Image constant = gray(4, 4, std::vector<double>(16, v));
    CHECK(std::abs(roc_auc(threshold_sweep({constant}, {gt})) - 0.5) <= 1e-9);
  }
  CHECK(mae({half}, {gt}) == 0.5);
}

TEST_CASE("inverted map scores at chance") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Image gt = random_mask(rng, 6, 6, 0.2 + 0.5 * rng.uniform());
    double rho = 0.0;
    for (double v : gt.pixels) rho += v;
    if (rho == 0.0 || rho == 36.0) continue;
    rho /= 36.0;
    Image inv = gt;
    for (auto& v : inv.pixels) v = 1.0 - v;
    CHECK(average_precision(threshold_sweep({inv}, {gt})) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(s_measure(inv, gt) < 0.05);
  }
}

TEST_CASE("areas match fine-grid integration") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t w = 4 + rng.below(12), h = 4 + rng.below(12);
    Image gt = random_mask(rng, w, h, 0.35);
    Image m = random_map(rng, w, h);
    // Correlate the map with the ground truth so curves are non-trivial.
    for (std::size_t i = 0; i < m.pixels.size(); ++i)
      if (gt.pixels[i] == 1.0 && rng.uniform() < 0.6) m.pixels[i] = 0.5 + 0.5 * m.pixels[i];
    const Curves c = threshold_sweep({m}, {gt});
    CHECK(std::abs(average_precision(c) - oracle_ap(c)) <= 1e-6);
    CHECK(std::abs(roc_auc(c) - oracle_auc(c)) <= 1e-6);
    CHECK(f_measure(c) == doctest::Approx(oracle_f(c)).epsilon(1e-15));
    for (double s : {average_precision(c), roc_auc(c), f_measure(c)}) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
}

TEST_CASE("f-measure") {
  Curves c;
  c.precision.assign(256, 0.0);
  c.recall.assign(256, 0.0);
  c.precision[10] = 0.5;
  c.recall[10] = 0.5;
  CHECK(f_measure(c) == doctest::Approx(0.5).epsilon(1e-15));
  Curves empty;
  empty.precision.assign(256, 0.0);
  empty.recall.assign(256, 0.0);
  CHECK(f_measure(empty) == 0.0);
}

TEST_CASE("mae") {
  Image zeros = gray(3, 2, std::vector<double>(6, 0.0));
  Image ones = gray(3, 2, std::vector<double>(6, 1.0));
  CHECK(mae({zeros}, {ones}) == 1.0);
  CHECK(mae({ones}, {ones}) == 0.0);
  CHECK_THROWS_AS(mae({zeros}, {gray(2, 3, std::vector<double>(6, 0.0))}), InputError);
  CHECK_THROWS_AS(threshold_sweep({zeros, zeros}, {ones}), InputError);
}

TEST_CASE("s-measure") {
  Image gt(16, 16, 1);
  for (std::size_t y = 4; y < 11; ++y)
    for (std::size_t x = 5; x < 13; ++x) gt.at(y, x) = 1.0;
  CHECK(s_measure(gt, gt) == doctest::Approx(1.0).epsilon(1e-12));

  Image inv = gt;
  for (auto& v : inv.pixels) v = 1.0 - v;
  CHECK(s_measure(inv, gt) < 0.05);

  // 3x3 box blur keeps structure; it must beat the inverted map.
  Image blur = gt;
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      double s = 0.0, n = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= 16 || xx >= 16) continue;
          s += gt.at(yy, xx);
          n += 1.0;
        }
      blur.at(y, x) = s / n;
    }
  const double sb = s_measure(blur, gt);
  CHECK(sb > s_measure(inv, gt));
  CHECK(sb < 1.0);
  CHECK(sb > 0.8);

  // Empty and full ground truth.
  Image empty(4, 4, 1), full(4, 4, 1, 1.0), quarter(4, 4, 1, 0.25);
  CHECK(s_measure(quarter, empty) == 0.75);
  CHECK(s_measure(quarter, full) == 0.25);

  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    Image g = random_mask(rng, 7, 9, 0.4);
    const double s = s_measure(random_map(rng, 7, 9), g);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("report formats") {
  Rng rng(6);
  Image gt = random_mask(rng, 8, 8, 0.4), m = random_map(rng, 8, 8);
  const EvalResult r = evaluate({m}, {gt});
  const std::string csv = format_metrics_csv(r);
  CHECK(csv.rfind("metric,value\n", 0) == 0);

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> parsed;
  while (std::getline(in, line)) parsed.push_back(std::stod(line.substr(line.find(',') + 1)));
  CHECK(parsed == std::vector<double>{r.ap, r.auc, r.f_beta, r.s_measure, r.mae});

  const std::string curves = format_curves_csv(r.curves);
  CHECK(curves.rfind("threshold,precision,recall,tpr,fpr\n", 0) == 0);
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 257);
  CHECK(format_report(r).find("F_beta: ") != std::string::npos);
}
