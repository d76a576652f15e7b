#pragma once

// Conversion of dataset clips into the normalized tensors the denoiser sees.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "firediff/dataset.hpp"
#include "firediff/ddpm.hpp"
#include "firediff/tensor.hpp"
#include "firediff/telemetry.hpp"

namespace firediff::nn {

/// What the diffusion model generates: infrared frames (the two-stage
/// pipeline) or fire masks directly (the mask-only baseline).
enum class Modality { Infrared, Mask };
std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// How target frames map to the diffusion variable x0: the frames themselves,
/// or their change from the last observed frame halved into [-1,1].
enum class Target { Frames, Residual };
std::string to_string(Target t);
Target target_from_string(const std::string& s);

/// frames (L', H, W) -> x0, given the observed frames (L, H, W).
Tensor<float> encode_target(const Tensor<float>& frames, const Tensor<float>& observed, Target t);
/// Inverse of encode_target, clipped to [-1,1].
Tensor<float> decode_target(const Tensor<float>& x0, const Tensor<float>& observed, Target t);

/// Per-channel z-score statistics over the training split.
struct TelemetryStats {
  std::array<double, sim::kTelemetryChannels> mean{};
  std::array<double, sim::kTelemetryChannels> stddev = [] {
    std::array<double, sim::kTelemetryChannels> a;
    a.fill(1.0);
    return a;
  }();
};

TelemetryStats telemetry_stats(std::span<const data::LoadedClip> clips);
nlohmann::json to_json(const TelemetryStats& s);
TelemetryStats telemetry_stats_from_json(const nlohmann::json& j);

/// Fixed physical ranges of the land-vegetation channels, mapped to [-1,1].
inline constexpr std::array<double, sim::kLandVegChannels> kLandVegMax{3.0, 1.0, 9000.0, 0.9, 24.0, 5.0};

/// [0,1] intensities -> [-1,1].
inline float to_model_range(float v) { return 2.0f * v - 1.0f; }
inline float from_model_range(float v) { return 0.5f * (v + 1.0f); }

/// Source frame indices start, start+stride, ... (count of them).
std::vector<int> frame_indices(int start, int count, int stride);

/// Frames at `indices` as a (count, H, W) tensor in [-1,1]. Masks map {0,1} -> {-1,1}.
Tensor<float> frames_tensor(const data::LoadedClip& clip, Modality modality,
                            std::span<const int> indices);
Tensor<float> frames_tensor(const ClipTensor& clip, std::span<const int> indices);
Tensor<float> masks_tensor(std::span<const BinaryMask> masks, std::span<const int> indices);

/// (6, H, W) land-vegetation tensor in [-1,1].
Tensor<float> land_veg_tensor(const RasterGrid& raw);

/// (times, 11) z-scored telemetry interpolated at `times`.
Tensor<float> telemetry_tensor(const sim::TelemetrySeries& series, std::span<const double> times,
                               const TelemetryStats& stats);

/// Conditioning for frames `observed` of `clip`.
ddpm::ConditionBundle<float> make_condition(const data::LoadedClip& clip, Modality modality,
                                            std::span<const int> observed,
                                            const TelemetryStats& stats, bool drop_em,
                                            bool drop_lv);

}  // namespace firediff::nn
