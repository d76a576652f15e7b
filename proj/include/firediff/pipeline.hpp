#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "firediff/dataset.hpp"
#include "firediff/model.hpp"
#include "firediff/raster.hpp"
#include "firediff/segmenter.hpp"

namespace firediff::pipeline {

/// GroundTruth copies the source clip; it is a fixture for evaluation checks
/// and is not accepted by predictor_from_string.
enum class Predictor { FireDiff, DirectMask, Persistence, Physics, GroundTruth };

std::string to_string(Predictor p);
Predictor predictor_from_string(const std::string& s);

inline constexpr int kAllowedStrides[] = {1, 30, 60};

struct ForecastRequest {
  std::string clip_id;
  int observed = 10;  // L
  int horizon = 10;   // L'
  int stride = 1;     // source frames between consecutive used frames
  int start = 0;      // source index of the first observed frame
  bool drop_em = false;
  bool drop_lv = false;
  std::uint64_t seed = 1;

  /// Throws UsageError for a stride outside kAllowedStrides, L < 1 or L' < 1.
  void validate() const;
  nlohmann::json to_json() const;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct ForecastResult {
  std::string clip_id;
  Predictor predictor = Predictor::Persistence;
  ForecastRequest request;
  std::optional<ClipTensor> infrared;  // absent for the direct-mask predictor
  bool infrared_synthetic = false;     // rendered from predicted masks
  std::vector<BinaryMask> masks;
  std::vector<int> observed_frames;  // source indices
  std::vector<int> target_frames;
  std::vector<double> observed_times;
  std::vector<double> target_times;
  bool segmentation_degenerate = false;
  std::vector<std::string> warnings;
  std::vector<StageTiming> timings;
  nlohmann::json provenance = nlohmann::json::object();

  /// result.json contents. Timings are wall-clock and so only included on request.
  nlohmann::json sidecar(bool include_timings = false) const;
};

/// Stage-1 model plus everything prediction needs from the dataset.
struct PredictContext {
  std::filesystem::path dataset_dir;
  data::DatasetManifest manifest;
  sim::SimConfig sim;
  std::optional<nn::ModelArtifact> model;
  std::string model_digest;  // FNV-1a of the artifact bytes
  seg::SegmentConfig segment;
};

PredictContext make_context(const std::filesystem::path& dataset_dir,
                            const std::optional<std::filesystem::path>& model_path);

/// Manifest ignition seeds already lit at `time`, as positive prompts on frame `anchor`.
seg::PromptSet manifest_prompts(const data::ClipEntry& entry, double time, int anchor);

ForecastResult firediff_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                                const ForecastRequest& request);
ForecastResult direct_mask_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                                   const ForecastRequest& request);
ForecastResult persistence_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                                   const ForecastRequest& request);
ForecastResult physics_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                               const ForecastRequest& request);

/// The true target frames and masks in ForecastResult form.
ForecastResult ground_truth_result(const data::LoadedClip& clip, const ForecastRequest& request);

ForecastResult predict(Predictor p, const PredictContext& ctx, const data::LoadedClip& clip,
                       const ForecastRequest& request);

/// Writes <dir>/infrared.fsrt (when present), masks.fsrt and result.json.
void write_result(const std::filesystem::path& dir, const ForecastResult& r,
                  bool include_timings = false);

struct StoredResult {
  nlohmann::json sidecar;
  std::optional<ClipTensor> infrared;
  std::vector<BinaryMask> masks;
};

StoredResult read_result(const std::filesystem::path& dir);

struct RunOptions {
  Predictor predictor = Predictor::FireDiff;
  ForecastRequest base;  // clip_id is filled per clip
  data::Split split = data::Split::Test;
  int jobs = 1;
  bool include_timings = false;
};

/// Predicts every clip of the split into <out>/<clip id>/ with up to `jobs`
/// clips in flight, and writes <out>/index.json. Returns the clip ids.
std::vector<std::string> run_predictions(const PredictContext& ctx, const RunOptions& options,
                                         const std::filesystem::path& out);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace firediff::pipeline
