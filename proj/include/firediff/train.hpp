#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"

#include "firediff/adam.hpp"
#include "firediff/dataset.hpp"
#include "firediff/model.hpp"

namespace firediff::nn {

struct TrainConfig {
  DenoiserConfig arch = [] {
    DenoiserConfig a;
    a.mean_head = true;
    return a;
  }();
  int epochs = 6;
  int steps_per_epoch = 50;
  int batch = 8;
  AdamConfig adam;
  std::uint64_t seed = 1;
  int diffusion_steps = 200;
  double beta_min = 5e-4;
  double beta_max = 0.1;
  Modality modality = Modality::Infrared;
  Target target = Target::Residual;
  bool drop_em = false;
  bool drop_lv = false;
  /// Per-sample probability of swapping a modality for its placeholder, so the
  /// placeholders are trained and inference-time drops stay in distribution.
  double modality_dropout = 0.1;
  int val_samples = 16;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossPoint {
  int epoch = 0;
  long long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelArtifact model;  // best-validation parameters
  std::vector<LossPoint> curve;
  double initial_val_loss = 0.0;
  int best_epoch = 0;
};

/// Algorithm-1 training on in-memory clips (windows of frames_in + frames_out
/// consecutive frames). Aborts with NumericError naming the step on a
/// non-finite loss.
TrainResult train(std::span<const data::LoadedClip> train_clips,
                  std::span<const data::LoadedClip> val_clips, const TrainConfig& config,
                  const std::function<void(const LossPoint&)>& progress = {});

/// Loads the train/val splits of a dataset and trains on them.
TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& config,
                  const std::function<void(const LossPoint&)>& progress = {});

/// Validation loss of `model` on the fixed validation draws for `config`.
double validation_loss(ModelArtifact& model, std::span<const data::LoadedClip> val_clips,
                       const TrainConfig& config);

void write_loss_curve(const std::filesystem::path& path, std::span<const LossPoint> curve);

}  // namespace firediff::nn
