#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "firediff/raster.hpp"

namespace firediff::metrics {

struct PsnrValue {
  double db = 0.0;
  bool saturated = false;  // MSE was 0; db holds the cap
};

inline constexpr double kPsnrCap = 100.0;

PsnrValue psnr(const RasterGrid& pred, const RasterGrid& gt, double max_value = 1.0);

struct SSIMConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double max_value = 1.0;
};

/// Mean SSIM over all window positions fully inside the image.
double ssim(const RasterGrid& pred, const RasterGrid& gt, const SSIMConfig& config = {});

/// Scale-averaged RMS difference of intensity and absolute horizontal/vertical
/// gradients at scales 1, 2 and 4 (2x2 average pooling between scales).
double perceptual_proxy(const RasterGrid& pred, const RasterGrid& gt);

struct GaussianFeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  long long sample_count = 0;
};

/// Sample mean and unbiased covariance of feature rows.
GaussianFeatureStats gaussian_stats(std::span<const std::vector<double>> features);

struct FrechetResult {
  double distance = 0.0;
  bool regularized = false;  // 1e-6 I was added to rank-deficient covariances
};

FrechetResult frechet_distance(const GaussianFeatureStats& real, const GaussianFeatureStats& gen);

inline constexpr int kClipFeatureDim = 12;

/// Temporal mean, temporal std and mean absolute temporal difference per
/// pixel, each averaged over the four image quadrants.
std::vector<double> clip_features(const ClipTensor& clip);

/// Right-step average precision; equal scores form one threshold group.
double auprc(std::span<const double> scores, const BinaryMask& gt);

struct MaskScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  double mse = 0.0;
  bool degenerate = false;  // a zero-denominator convention applied
};

MaskScores f1_iou_mse(const BinaryMask& pred, const BinaryMask& gt);

struct PointD {
  double x = 0.0;
  double y = 0.0;
};

/// Percentage of gt points with a predicted point within Euclidean distance e.
double fire_point_accuracy(std::span<const PointD> pred, std::span<const PointD> gt, double e);

/// Centroids of components with no previous-frame fire pixel within Chebyshev
/// distance 1 (every component of the first frame).
std::vector<PointD> fire_points(std::span<const BinaryMask> masks);

struct FireLineAccuracy {
  double accuracy = 0.0;   // |P' n G^| / |G^| * 100
  double symmetric = 0.0;  // |P' n G^| / |P'| * 100, 0 when P' is empty
};

/// P' = boundary(pred), G^ = dilate(boundary(gt), e).
FireLineAccuracy fire_line_accuracy(const BinaryMask& pred, const BinaryMask& gt, int e);

}  // namespace firediff::metrics
