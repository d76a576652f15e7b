#pragma once

// Model artifact: the line "FIREDIFF-MODEL 1\n", a u64 little-endian header
// length, a JSON header, then every parameter as f32 little-endian in header
// order.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "firediff/conditioning.hpp"
#include "firediff/ddpm.hpp"
#include "firediff/denoiser.hpp"

namespace firediff::nn {

inline constexpr const char* kModelMagic = "FIREDIFF-MODEL 1\n";
inline constexpr const char* kVersion = "firediff 0.1.0";

struct ModelArtifact {
  DenoiserConfig arch;
  int diffusion_steps = 200;
  double beta_min = 5e-4;
  double beta_max = 0.1;
  bool clamp_x0 = true;
  Modality modality = Modality::Infrared;
  Target target = Target::Residual;
  bool drop_em = false;
  bool drop_lv = false;
  TelemetryStats telemetry;
  /// Prior on per-frame means of x0, used when arch.mean_head is set.
  double x0_mean = 0.0;
  double x0_mean_var = 4e-4;
  std::uint64_t seed = 0;
  nlohmann::json training = nlohmann::json::object();
  Denoiser<float> net;

  ddpm::NoiseSchedule schedule() const;
  /// Hands the schedule and mean prior to `net` (needed before inference with mean_head).
  void bind_mean_prior();
  nlohmann::json header() const;
};

void save_model(const std::filesystem::path& path, const ModelArtifact& m);
ModelArtifact load_model(const std::filesystem::path& path);

}  // namespace firediff::nn
