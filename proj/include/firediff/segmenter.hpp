#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "firediff/raster.hpp"

namespace firediff::seg {

struct PromptPoint {
  int x = 0;
  int y = 0;
  bool positive = true;
};

struct PromptSet {
  std::vector<PromptPoint> points;
  int anchor_frame = 0;

  /// Throws std::invalid_argument without a positive point, or with a point
  /// outside a width x height grid.
  void validate(int width, int height) const;
};

struct SegmentConfig {
  float threshold = 0.5f;  // on [0,1] intensities
  int closing_radius = 1;
};

struct SegmentResult {
  std::vector<BinaryMask> masks;
  bool degenerate = false;  // no positive prompt on an above-threshold anchor pixel
  std::vector<std::string> warnings;
};

/// Region growing from prompts. On the anchor frame the selected region is
/// every above-threshold 8-connected component containing a positive point; on other
/// frames it is those plus, for each component selected in the neighbouring
/// frame (walking away from the anchor), the current component with maximal
/// overlap. Components holding a negative point are removed; the result is
/// closed and then restricted to the above-threshold set.
SegmentResult segment_clip(const ClipTensor& frames, const PromptSet& prompts,
                           const SegmentConfig& config = {});

struct ConfusionCounts {
  long long tp = 0;
  long long tn = 0;
  long long fp = 0;
  long long fn = 0;

  long long total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Fire (1) is the positive class.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

struct MaskQualityReport {
  double accuracy = 0.0;
  double miou = 0.0;
  double fire_iou = 0.0;
  double background_iou = 0.0;
  double commission_error = 0.0;
  double omission_error = 0.0;
  int class_count = 2;
  bool degenerate = false;  // some ratio had a zero denominator and was reported as 0
};

MaskQualityReport mask_quality(const ConfusionCounts& c);
MaskQualityReport mask_quality(const BinaryMask& pred, const BinaryMask& gt);

/// One QC table row: a named region with its quality figures.
struct QcRow {
  std::string region;
  MaskQualityReport quality;
  long long pixels = 0;
};

/// Per-region rows from pooled confusion counts over each region's mask pairs.
QcRow qc_region(const std::string& region, std::span<const BinaryMask> pred,
                std::span<const BinaryMask> gt);

/// Unweighted mean of region rows. Throws UsageError on an empty set.
QcRow qc_mean(std::span<const QcRow> rows);

nlohmann::json to_json(const MaskQualityReport& r);
nlohmann::json qc_table_json(std::span<const QcRow> rows);
std::string qc_table_csv(std::span<const QcRow> rows);

}  // namespace firediff::seg
