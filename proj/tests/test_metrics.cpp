#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "firediff/error.hpp"
#include "firediff/metrics.hpp"
#include "firediff/morphology.hpp"
#include "util.hpp"

using namespace firediff;
using namespace firediff::metrics;

namespace {

/// Average precision by direct enumeration of every distinct score threshold.
double auprc_oracle(const std::vector<double>& s, const BinaryMask& gt) {
  std::set<double, std::greater<>> cuts(s.begin(), s.end());
  const double pos = static_cast<double>(gt.count());
  double area = 0.0, prev_recall = 0.0;
  for (double c : cuts) {
    double tp = 0, sel = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= c) {
        ++sel;
        tp += gt.bits()[i];
      }
    const double recall = tp / pos;
    area += (recall - prev_recall) * (tp / sel);
    prev_recall = recall;
  }
  return area;
}

GaussianFeatureStats scalar_stats(double mean, double var) {
  GaussianFeatureStats s;
  s.mean = Eigen::VectorXd::Constant(1, mean);
  s.cov = Eigen::MatrixXd::Constant(1, 1, var);
  s.sample_count = 100;
  return s;
}

RasterGrid constant_grid(int w, int h, float v) { return RasterGrid(w, h, 1.0, 1, v); }

RasterGrid box_blur(const RasterGrid& g) {
  RasterGrid out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int u = x + dx, v = y + dy;
          if (u < 0 || v < 0 || u >= g.width() || v >= g.height()) continue;
          s += g.at(u, v);
          ++n;
        }
      out.at(x, y) = static_cast<float>(s / n);
    }
  return out;
}

}  // namespace

TEST_CASE("psnr examples") {
  const auto a = constant_grid(8, 8, 0.2f);
  const auto p = psnr(a, a);
  CHECK(p.saturated);
  CHECK(p.db == kPsnrCap);
  CHECK(psnr(constant_grid(8, 8, 0.75f), constant_grid(8, 8, 0.25f)).db == doctest::Approx(6.0206).epsilon(1e-4));
  CHECK(psnr(constant_grid(4, 4, 255.0f), constant_grid(4, 4, 0.0f), 255.0).db == doctest::Approx(0.0));
  CHECK_THROWS(psnr(a, constant_grid(8, 9, 0.0f)));
  Rng rng(1);
  const auto x = testutil::random_grid(10, 10, rng), y = testutil::random_grid(10, 10, rng);
  CHECK(psnr(x, y).db == psnr(y, x).db);
}

TEST_CASE("ssim examples") {
  Rng rng(2);
  const auto g = testutil::random_grid(24, 24, rng);
  CHECK(ssim(g, g) == 1.0);
  double prev = 1.0;
  for (float c : {0.02f, 0.05f, 0.1f, 0.2f}) {
    RasterGrid shifted = g;
    for (auto& v : shifted.values()) v += c;
    const double s = ssim(shifted, g);
    CHECK(s < prev);
    prev = s;
  }
  const auto bin = testutil::random_mask(24, 24, 0.5, rng);
  RasterGrid b(24, 24), inv(24, 24);
  for (std::size_t i = 0; i < bin.pixel_count(); ++i) {
    b.values()[i] = bin.bits()[i];
    inv.values()[i] = 1.0f - bin.bits()[i];
  }
  CHECK(ssim(inv, b) < 0.5);
  CHECK_THROWS(ssim(constant_grid(10, 10, 0.f), constant_grid(10, 10, 0.f)));
}

TEST_CASE("perceptual proxy: identity, symmetry, blur preferred over matched noise") {
  Rng rng(3);
  const auto a = testutil::random_grid(32, 32, rng), b = testutil::random_grid(32, 32, rng);
  CHECK(perceptual_proxy(a, a) == 0.0);
  CHECK(perceptual_proxy(a, b) == doctest::Approx(perceptual_proxy(b, a)));
  CHECK(perceptual_proxy(a, b) > 0.0);

  int blur_wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    // Smooth scene with edges: a random blob mask, lightly blurred.
    const auto m = dilate(testutil::random_mask(32, 32, 0.02, rng), StructuringElement(3));
    RasterGrid gt(32, 32);
    for (std::size_t i = 0; i < m.pixel_count(); ++i) gt.values()[i] = m.bits()[i] ? 0.9f : 0.1f;
    const auto blurred = box_blur(gt);
    double mse = 0;
    for (std::size_t i = 0; i < gt.values().size(); ++i) {
      const double d = blurred.values()[i] - gt.values()[i];
      mse += d * d;
    }
    mse /= static_cast<double>(gt.values().size());
    RasterGrid noisy = gt;
    std::normal_distribution<double> normal(0.0, std::sqrt(mse));
    for (auto& v : noisy.values()) v = static_cast<float>(v + normal(rng));
    blur_wins += perceptual_proxy(blurred, gt) < perceptual_proxy(noisy, gt);
  }
  CHECK(blur_wins >= 90);
}

TEST_CASE("frechet distance scalar closed forms and identity") {
  const auto a = frechet_distance(scalar_stats(0, 1), scalar_stats(1, 1));
  CHECK(a.distance == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(a.regularized);
  CHECK(frechet_distance(scalar_stats(0.5, 1), scalar_stats(0.5, 4)).distance == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(4);
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> f(5);
    for (auto& v : f) v = std::normal_distribution<double>()(rng);
    feats.push_back(f);
  }
  const auto s = gaussian_stats(feats);
  CHECK(s.sample_count == 40);
  CHECK((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(frechet_distance(s, s).distance) <= 1e-8);

  // Too few samples for a full-rank covariance: regularized and flagged.
  const auto few = gaussian_stats(std::span(feats).first(3));
  const auto r = frechet_distance(few, few);
  CHECK(r.regularized);
  CHECK(std::abs(r.distance) <= 1e-6);

  // Hand-computed unbiased statistics on two samples.
  const std::vector<std::vector<double>> two{{1.0}, {3.0}};
  const auto t = gaussian_stats(two);
  CHECK(t.mean(0) == 2.0);
  CHECK(t.cov(0, 0) == 2.0);
}

TEST_CASE("clip features: constant clip, reversal invariance, direct loop oracle") {
  ClipTensor constant;
  for (int k = 0; k < 4; ++k) constant.frames.push_back(constant_grid(8, 8, 0.3f));
  const auto fc = clip_features(constant);
  REQUIRE(fc.size() == static_cast<std::size_t>(kClipFeatureDim));
  for (int i = 4; i < 12; ++i) CHECK(fc[i] == doctest::Approx(0.0));

  Rng rng(5);
  ClipTensor clip;
  for (int k = 0; k < 5; ++k) clip.frames.push_back(testutil::random_grid(8, 6, rng));
  ClipTensor rev = clip;
  std::reverse(rev.frames.begin(), rev.frames.end());
  const auto f = clip_features(clip), fr = clip_features(rev);
  for (int i = 0; i < 12; ++i) CHECK(f[i] == doctest::Approx(fr[i]).epsilon(1e-9));

  // Oracle: per-pixel statistics then quadrant means, quadrant order TL, TR, BL, BR.
  const int w = 8, h = 6, n = 5;
  std::vector<double> want(12, 0.0);
  std::vector<int> counts(4, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = 0, sq = 0, dif = 0;
      for (int k = 0; k < n; ++k) m += clip.frames[k].at(x, y);
      m /= n;
      for (int k = 0; k < n; ++k) sq += (clip.frames[k].at(x, y) - m) * (clip.frames[k].at(x, y) - m);
      for (int k = 1; k < n; ++k) dif += std::abs(clip.frames[k].at(x, y) - clip.frames[k - 1].at(x, y));
      const int q = (y >= h / 2) * 2 + (x >= w / 2);
      want[q] += m;
      want[4 + q] += std::sqrt(sq / n);
      want[8 + q] += dif / (n - 1);
      ++counts[q];
    }
  for (int i = 0; i < 12; ++i) CHECK(f[i] == doctest::Approx(want[i] / counts[i % 4]).epsilon(1e-6));

  ClipTensor one;
  one.frames.push_back(constant_grid(8, 8, 0.1f));
  CHECK_THROWS(clip_features(one));
}

TEST_CASE("auprc examples and enumeration oracle") {
  BinaryMask gt(8, 1);
  for (int r : {0, 2, 3, 6}) gt.set(r, 0);
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
  // ranks 1,3,4,7: recall steps at precisions 1, 2/3, 3/4, 4/7
  const double hand = 0.25 * (1.0 + 2.0 / 3.0 + 3.0 / 4.0 + 4.0 / 7.0);
  CHECK(auprc(s, gt) == doctest::Approx(hand).epsilon(1e-12));

  std::vector<double> perfect(8);
  for (int i = 0; i < 8; ++i) perfect[i] = gt.get(i, 0) ? 1.0 : 0.0;
  CHECK(auprc(perfect, gt) == 1.0);
  CHECK(auprc(std::vector<double>(8, 0.5), gt) == doctest::Approx(0.5));
  CHECK_THROWS(auprc(s, BinaryMask(8, 1)));
  CHECK_THROWS(auprc(std::vector<double>(3, 0.0), gt));

  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = uniform_int(rng, 1, 8), h = uniform_int(rng, 1, 8);
    auto m = testutil::random_mask(w, h, 0.4, rng);
    if (!m.any()) m.set(0, 0);
    std::vector<double> sc(m.pixel_count());
    for (auto& v : sc) v = uniform_int(rng, 0, 5) / 5.0;  // ties are common
    CHECK(auprc(sc, m) == doctest::Approx(auprc_oracle(sc, m)).epsilon(1e-12));
  }
}

TEST_CASE("f1, iou, mse: examples and set-arithmetic oracle") {
  BinaryMask a(4, 4), b(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) (x < 2 ? a : b).set(x, y);
  auto s = f1_iou_mse(a, a);
  CHECK(s.f1 == 1.0);
  CHECK(s.iou == 1.0);
  CHECK(s.mse == 0.0);
  s = f1_iou_mse(a, b);
  CHECK(s.iou == 0.0);
  CHECK(s.f1 == 0.0);
  CHECK(s.mse == 1.0);

  BinaryMask p(5, 5), g(5, 5);
  for (int x = 0; x < 4; ++x) p.set(x, 0);
  for (int x = 2; x < 5; ++x) g.set(x, 0);
  g.set(0, 1);
  g.set(1, 1);
  s = f1_iou_mse(p, g);
  // |P| = 4, |G| = 5, |P∩G| = 2, |P∪G| = 7
  CHECK(s.iou == doctest::Approx(2.0 / 7.0));
  CHECK(s.precision == 0.5);
  CHECK(s.recall == 0.4);
  CHECK(s.f1 == doctest::Approx(4.0 / 9.0));
  CHECK(s.mse == doctest::Approx(5.0 / 25.0));

  const auto e = f1_iou_mse(BinaryMask(3, 3), BinaryMask(3, 3));
  CHECK(e.iou == 1.0);
  CHECK(e.f1 == 1.0);
  CHECK(e.degenerate);

  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto x = testutil::random_mask(9, 7, uniform01(rng), rng), y = testutil::random_mask(9, 7, uniform01(rng), rng);
    const double inter = static_cast<double>(mask_and(x, y).count()), uni = static_cast<double>(mask_or(x, y).count());
    const auto r = f1_iou_mse(x, y);
    if (uni > 0) CHECK(r.iou == inter / uni);
    double diff = 0;
    for (std::size_t i = 0; i < x.pixel_count(); ++i) diff += x.bits()[i] != y.bits()[i];
    CHECK(r.mse == diff / 63.0);
    CHECK(r.f1 == doctest::Approx(2.0 * r.iou / (1.0 + r.iou)));
    CHECK(r.iou <= r.f1 + 1e-15);
    for (double v : {r.f1, r.iou, r.mse, r.precision, r.recall}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("fire point accuracy examples and monotonicity") {
  const std::vector<PointD> g{{10, 10}};
  const std::vector<PointD> p{{13.2, 10}};
  CHECK(fire_point_accuracy(p, g, 3) == 0.0);
  CHECK(fire_point_accuracy(p, g, 4) == 100.0);
  CHECK(fire_point_accuracy(g, g, 0) == 100.0);
  CHECK_THROWS(fire_point_accuracy(p, std::vector<PointD>{}, 3));

  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PointD> a, b;
    for (int i = 0; i < 5; ++i) a.push_back({uniform01(rng) * 30, uniform01(rng) * 30});
    for (int i = 0; i < 4; ++i) b.push_back({uniform01(rng) * 30, uniform01(rng) * 30});
    double prev = -1;
    for (int e = 0; e <= 6; ++e) {
      const double v = fire_point_accuracy(a, b, e);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("fire points: first-frame components and new ignitions") {
  BinaryMask f0(12, 12), f1(12, 12);
  f0.set(2, 2);
  f1.set(2, 2);
  f1.set(3, 3);   // diagonal spread, not a new point
  f1.set(9, 9);   // new ignition
  f1.set(9, 10);
  const std::vector<BinaryMask> seq{f0, f1};
  const auto pts = fire_points(seq);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].x == 2.0);
  CHECK(pts[1].x == 9.0);
  CHECK(pts[1].y == 9.5);
}

TEST_CASE("fire line accuracy: examples, oracle, symmetric variant monotone") {
  Rng rng(9);
  const auto m = dilate(testutil::random_mask(16, 16, 0.05, rng), StructuringElement(2));
  CHECK(fire_line_accuracy(m, m, 0).accuracy == 100.0);
  CHECK(fire_line_accuracy(BinaryMask(16, 16), m, 2).accuracy == 0.0);
  CHECK_THROWS(fire_line_accuracy(m, BinaryMask(16, 16), 2));

  for (int trial = 0; trial < 100; ++trial) {
    const auto p = testutil::random_mask(16, 16, 0.3, rng);
    auto g = testutil::random_mask(16, 16, 0.3, rng);
    if (!g.any()) g.set(5, 5);
    const auto pb = boundary(p), gh = testutil::dilate_oracle(boundary(g), 3);
    const double want = 100.0 * static_cast<double>(mask_and(pb, gh).count()) / static_cast<double>(gh.count());
    const auto got = fire_line_accuracy(p, g, 3);
    CHECK(got.accuracy == doctest::Approx(want));
    double prev = -1;
    for (int e = 0; e <= 6; ++e) {
      const double v = fire_line_accuracy(p, g, e).symmetric;
      CHECK(v >= prev);
      CHECK(v <= 100.0);
      prev = v;
    }
  }
}
