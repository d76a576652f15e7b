#include "firediff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "firediff/error.hpp"
#include "firediff/morphology.hpp"

namespace firediff::metrics {

namespace {

void require_same(const RasterGrid& a, const RasterGrid& b, const char* what) {
  if (!a.same_geometry(b)) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch " + std::to_string(a.width()) +
                                "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                                "x" + std::to_string(b.height()));
  }
}

/// Single-channel plane as doubles.
struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane plane(const RasterGrid& g) {
  Plane p{g.width(), g.height(), {}};
  p.v.assign(g.values().begin(), g.values().begin() + static_cast<std::ptrdiff_t>(g.pixel_count()));
  return p;
}

Plane pool2(const Plane& p) {
  Plane q{p.w / 2, p.h / 2, {}};
  q.v.resize(static_cast<std::size_t>(q.w) * q.h);
  for (int y = 0; y < q.h; ++y)
    for (int x = 0; x < q.w; ++x) {
      q.v[static_cast<std::size_t>(y) * q.w + x] =
          0.25 * (p.at(2 * x, 2 * y) + p.at(2 * x + 1, 2 * y) + p.at(2 * x, 2 * y + 1) +
                  p.at(2 * x + 1, 2 * y + 1));
    }
  return q;
}

}  // namespace

PsnrValue psnr(const RasterGrid& pred, const RasterGrid& gt, double max_value) {
  require_same(pred, gt, "psnr");
  double acc = 0.0;
  const auto& a = pred.values();
  const auto& b = gt.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return {kPsnrCap, true};
  return {10.0 * std::log10(max_value * max_value / mse), false};
}

double ssim(const RasterGrid& pred, const RasterGrid& gt, const SSIMConfig& c) {
  require_same(pred, gt, "ssim");
  if (pred.width() < c.window || pred.height() < c.window) {
    throw std::invalid_argument("ssim: image " + std::to_string(pred.width()) + "x" +
                                std::to_string(pred.height()) + " smaller than the " +
                                std::to_string(c.window) + "-pixel window");
  }
  const int r = c.window / 2;
  std::vector<double> k(static_cast<std::size_t>(c.window));
  double ks = 0.0;
  for (int i = 0; i < c.window; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - r) * (i - r) / (c.sigma * c.sigma));
    ks += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= ks;
  const double c1 = (c.k1 * c.max_value) * (c.k1 * c.max_value);
  const double c2 = (c.k2 * c.max_value) * (c.k2 * c.max_value);
  const Plane a = plane(pred), b = plane(gt);
  double total = 0.0;
  long long count = 0;
  for (int y0 = 0; y0 + c.window <= a.h; ++y0)
    for (int x0 = 0; x0 + c.window <= a.w; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < c.window; ++dy)
        for (int dx = 0; dx < c.window; ++dx) {
          const double wgt = k[static_cast<std::size_t>(dy)] * k[static_cast<std::size_t>(dx)];
          const double va = a.at(x0 + dx, y0 + dy), vb = b.at(x0 + dx, y0 + dy);
          ma += wgt * va;
          mb += wgt * vb;
          saa += wgt * va * va;
          sbb += wgt * vb * vb;
          sab += wgt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

double perceptual_proxy(const RasterGrid& pred, const RasterGrid& gt) {
  require_same(pred, gt, "perceptual_proxy");
  Plane a = plane(pred), b = plane(gt);
  double sum = 0.0;
  int scales = 0;
  for (int s = 0; s < 3; ++s) {
    if (s > 0) {
      if (a.w < 2 || a.h < 2) break;
      a = pool2(a);
      b = pool2(b);
    }
    double acc = 0.0;
    long long n = 0;
    for (int y = 0; y < a.h; ++y)
      for (int x = 0; x < a.w; ++x) {
        const double d = a.at(x, y) - b.at(x, y);
        acc += d * d;
        ++n;
        if (x + 1 < a.w) {
          const double g = std::abs(a.at(x + 1, y) - a.at(x, y)) - std::abs(b.at(x + 1, y) - b.at(x, y));
          acc += g * g;
          ++n;
        }
        if (y + 1 < a.h) {
          const double g = std::abs(a.at(x, y + 1) - a.at(x, y)) - std::abs(b.at(x, y + 1) - b.at(x, y));
          acc += g * g;
          ++n;
        }
      }
    sum += std::sqrt(acc / static_cast<double>(n));
    ++scales;
  }
  return sum / scales;
}

GaussianFeatureStats gaussian_stats(std::span<const std::vector<double>> features) {
  if (features.empty()) throw std::invalid_argument("gaussian_stats: no samples");
  const auto k = static_cast<Eigen::Index>(features.front().size());
  GaussianFeatureStats s;
  s.sample_count = static_cast<long long>(features.size());
  s.mean = Eigen::VectorXd::Zero(k);
  for (const auto& f : features) {
    if (static_cast<Eigen::Index>(f.size()) != k) throw std::invalid_argument("gaussian_stats: ragged features");
    s.mean += Eigen::Map<const Eigen::VectorXd>(f.data(), k);
  }
  s.mean /= static_cast<double>(features.size());
  s.cov = Eigen::MatrixXd::Zero(k, k);
  for (const auto& f : features) {
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(f.data(), k) - s.mean;
    s.cov += d * d.transpose();
  }
  if (features.size() > 1) s.cov /= static_cast<double>(features.size() - 1);
  return s;
}

FrechetResult frechet_distance(const GaussianFeatureStats& real, const GaussianFeatureStats& gen) {
  const auto k = real.mean.size();
  if (gen.mean.size() != k || real.cov.rows() != k || gen.cov.rows() != k) {
    throw std::invalid_argument("frechet_distance: feature dimension mismatch");
  }
  FrechetResult r;
  Eigen::MatrixXd sr = 0.5 * (real.cov + real.cov.transpose());
  Eigen::MatrixXd sg = 0.5 * (gen.cov + gen.cov.transpose());
  const auto min_eig = [](const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  };
  const bool deficient = real.sample_count < k + 1 || gen.sample_count < k + 1 ||
                         min_eig(sr) <= 1e-12 || min_eig(sg) <= 1e-12;
  if (deficient) {
    sr += 1e-6 * Eigen::MatrixXd::Identity(k, k);
    sg += 1e-6 * Eigen::MatrixXd::Identity(k, k);
    r.regularized = true;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(sr);
  const double scale = std::max(1.0, sr.trace() + sg.trace());
  if (er.eigenvalues().minCoeff() < -1e-8 * scale) {
    throw NumericError("frechet_distance: covariance not positive semi-definite after regularization");
  }
  const Eigen::VectorXd root = er.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sr_half = er.eigenvectors() * root.asDiagonal() * er.eigenvectors().transpose();
  const Eigen::MatrixXd m = sr_half * sg * sr_half;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (em.eigenvalues().minCoeff() < -1e-8 * scale * scale) {
    throw NumericError("frechet_distance: product covariance not positive semi-definite");
  }
  const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  r.distance = (real.mean - gen.mean).squaredNorm() + sr.trace() + sg.trace() - 2.0 * tr_sqrt;
  r.distance = std::max(r.distance, 0.0);
  return r;
}

std::vector<double> clip_features(const ClipTensor& clip) {
  clip.validate();
  const int n = clip.length();
  if (n < 2) throw std::invalid_argument("clip_features: need at least 2 frames");
  const int w = clip.width(), h = clip.height();
  std::vector<double> out(kClipFeatureDim, 0.0);
  std::array<double, 4> area{};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int q = (y >= h / 2 ? 2 : 0) + (x >= w / 2 ? 1 : 0);
      double mean = 0.0;
      for (int f = 0; f < n; ++f) mean += clip.frames[static_cast<std::size_t>(f)].at(x, y);
      mean /= n;
      double var = 0.0, diff = 0.0;
      for (int f = 0; f < n; ++f) {
        const double v = clip.frames[static_cast<std::size_t>(f)].at(x, y);
        var += (v - mean) * (v - mean);
        if (f > 0) diff += std::abs(v - clip.frames[static_cast<std::size_t>(f - 1)].at(x, y));
      }
      out[static_cast<std::size_t>(q)] += mean;
      out[static_cast<std::size_t>(4 + q)] += std::sqrt(var / n);
      out[static_cast<std::size_t>(8 + q)] += diff / (n - 1);
      area[static_cast<std::size_t>(q)] += 1.0;
    }
  for (int s = 0; s < 3; ++s)
    for (int q = 0; q < 4; ++q) {
      const double a = area[static_cast<std::size_t>(q)];
      if (a > 0) out[static_cast<std::size_t>(4 * s + q)] /= a;
    }
  return out;
}

double auprc(std::span<const double> scores, const BinaryMask& gt) {
  if (scores.size() != gt.pixel_count()) throw std::invalid_argument("auprc: score/mask size mismatch");
  const auto& bits = gt.bits();
  const long long positives = static_cast<long long>(gt.count());
  if (positives == 0) throw std::invalid_argument("auprc: ground truth has no positive pixel");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  long long tp = 0, fp = 0;
  double area = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (bits[order[i]]) ++tp;
      else ++fp;
    }
    const double recall = static_cast<double>(tp) / positives;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

MaskScores f1_iou_mse(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_size(pred, gt, "f1_iou_mse");
  long long tp = 0, fp = 0, fn = 0;
  const auto& p = pred.bits();
  const auto& g = gt.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) ++tp;
    else if (p[i]) ++fp;
    else if (g[i]) ++fn;
  }
  MaskScores s;
  s.mse = static_cast<double>(fp + fn) / static_cast<double>(p.size());
  if (tp + fp + fn == 0) {
    s.precision = s.recall = s.f1 = s.iou = 1.0;
    s.degenerate = true;
    return s;
  }
  if (tp + fp == 0 || tp + fn == 0) s.degenerate = true;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
  return s;
}

double fire_point_accuracy(std::span<const PointD> pred, std::span<const PointD> gt, double e) {
  if (gt.empty()) throw std::invalid_argument("fire_point_accuracy: no ground-truth points");
  int hit = 0;
  for (const auto& g : gt) {
    for (const auto& p : pred) {
      if ((p.x - g.x) * (p.x - g.x) + (p.y - g.y) * (p.y - g.y) <= e * e) {
        ++hit;
        break;
      }
    }
  }
  return 100.0 * hit / static_cast<double>(gt.size());
}

std::vector<PointD> fire_points(std::span<const BinaryMask> masks) {
  std::vector<PointD> out;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const auto cl = connected_components(masks[k]);
    for (const auto& c : cl.components) {
      bool seen = false;
      if (k > 0) {
        const BinaryMask& prev = masks[k - 1];
        for (const Pixel& px : c.pixels) {
          for (int dy = -1; dy <= 1 && !seen; ++dy)
            for (int dx = -1; dx <= 1 && !seen; ++dx) {
              const int x = px.x + dx, y = px.y + dy;
              seen = x >= 0 && y >= 0 && x < prev.width() && y < prev.height() && prev.get(x, y);
            }
          if (seen) break;
        }
      }
      if (!seen) out.push_back({c.centroid_x, c.centroid_y});
    }
  }
  return out;
}

FireLineAccuracy fire_line_accuracy(const BinaryMask& pred, const BinaryMask& gt, int e) {
  require_same_size(pred, gt, "fire_line_accuracy");
  const BinaryMask gb = boundary(gt);
  if (!gb.any()) throw std::invalid_argument("fire_line_accuracy: ground-truth boundary is empty");
  const BinaryMask pb = boundary(pred);
  const BinaryMask ghat = dilate(gb, StructuringElement(e));
  const double hit = static_cast<double>(mask_and(pb, ghat).count());
  FireLineAccuracy r;
  r.accuracy = 100.0 * hit / static_cast<double>(ghat.count());
  const double np = static_cast<double>(pb.count());
  r.symmetric = np > 0 ? 100.0 * hit / np : 0.0;
  return r;
}

}  // namespace firediff::metrics
