#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace firediff::eval {

struct EvalOptions {
  std::vector<int> tolerances{3, 4, 5, 6};
  int jobs = 1;
};

/// MetricsReport for one predictor's results directory against the dataset
/// ground truth: per-clip values, mean and sample std over clips, per-horizon
/// IoU, the tolerance sweep and the FVD-proxy. Throws DataError when a result
/// clip is missing from the dataset or its frames disagree with it.
nlohmann::json evaluate(const std::filesystem::path& dataset_dir, const std::filesystem::path& results_dir,
                        const EvalOptions& options = {});

/// Throws DataError unless every report covers the same clip ids.
void require_same_clips(std::span<const nlohmann::json> reports);

/// One row per report: predictor and aggregate means of the headline metrics.
std::string comparison_csv(std::span<const nlohmann::json> reports);

/// Rows (predictor, e, point, line, line_symmetric).
std::string tolerance_csv(std::span<const nlohmann::json> reports);

/// Rows (predictor, horizon, iou_mean, iou_std, n).
std::string horizon_csv(std::span<const nlohmann::json> reports);

/// Markdown summary of the comparison and tolerance tables.
std::string markdown_report(std::span<const nlohmann::json> reports);

/// Top-level keys a MetricsReport must carry; used by schema checks.
bool is_metrics_report(const nlohmann::json& j, std::string* why = nullptr);

}  // namespace firediff::eval
