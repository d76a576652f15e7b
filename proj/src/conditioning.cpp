#include "firediff/conditioning.hpp"

#include <algorithm>
#include <stdexcept>
#include <cmath>

#include "firediff/error.hpp"

namespace firediff::nn {

std::string to_string(Modality m) { return m == Modality::Infrared ? "infrared" : "mask"; }

Modality modality_from_string(const std::string& s) {
  if (s == "infrared") return Modality::Infrared;
  if (s == "mask") return Modality::Mask;
  throw UsageError("unknown modality '" + s + "' (expected infrared|mask)");
}

std::string to_string(Target t) { return t == Target::Frames ? "frames" : "residual"; }

Target target_from_string(const std::string& s) {
  if (s == "frames") return Target::Frames;
  if (s == "residual") return Target::Residual;
  throw UsageError("unknown target '" + s + "' (expected frames|residual)");
}

namespace {

const float* last_frame(const Tensor<float>& frames, const Tensor<float>& observed) {
  if (frames.rank() != 3 || observed.rank() != 3 || observed.dim(0) < 1 || observed.dim(1) != frames.dim(1) ||
      observed.dim(2) != frames.dim(2)) {
    throw std::invalid_argument("target encoding: shapes " + frames.shape_string() + " and " +
                                observed.shape_string() + " do not match");
  }
  return observed.data() + static_cast<std::size_t>(observed.dim(0) - 1) * observed.dim(1) * observed.dim(2);
}

}  // namespace

Tensor<float> encode_target(const Tensor<float>& frames, const Tensor<float>& observed, Target t) {
  const float* last = last_frame(frames, observed);
  if (t == Target::Frames) return frames;
  const std::size_t plane = static_cast<std::size_t>(frames.dim(1)) * frames.dim(2);
  Tensor<float> out(frames.shape());
  for (std::size_t i = 0; i < frames.size(); ++i) out[i] = 0.5f * (frames[i] - last[i % plane]);
  return out;
}

Tensor<float> decode_target(const Tensor<float>& x0, const Tensor<float>& observed, Target t) {
  const float* last = last_frame(x0, observed);
  const std::size_t plane = static_cast<std::size_t>(x0.dim(1)) * x0.dim(2);
  Tensor<float> out(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const float v = t == Target::Frames ? x0[i] : last[i % plane] + 2.0f * x0[i];
    out[i] = std::clamp(v, -1.0f, 1.0f);
  }
  return out;
}

TelemetryStats telemetry_stats(std::span<const data::LoadedClip> clips) {
  TelemetryStats s;
  std::array<double, sim::kTelemetryChannels> sum{}, sq{};
  double n = 0;
  for (const auto& c : clips) {
    for (const auto& r : c.telemetry.records) {
      for (int k = 0; k < sim::kTelemetryChannels; ++k) sum[k] += r[k];
      n += 1;
    }
  }
  if (n == 0) throw DataError("telemetry statistics: no records in the training split");
  for (int k = 0; k < sim::kTelemetryChannels; ++k) s.mean[k] = sum[k] / n;
  for (const auto& c : clips) {
    for (const auto& r : c.telemetry.records) {
      for (int k = 0; k < sim::kTelemetryChannels; ++k) sq[k] += (r[k] - s.mean[k]) * (r[k] - s.mean[k]);
    }
  }
  for (int k = 0; k < sim::kTelemetryChannels; ++k) {
    const double sd = std::sqrt(sq[k] / n);
    s.stddev[k] = sd > 1e-6 ? sd : 1.0;
  }
  return s;
}

nlohmann::json to_json(const TelemetryStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"channels", sim::telemetry_channel_names()}};
}

TelemetryStats telemetry_stats_from_json(const nlohmann::json& j) {
  TelemetryStats s;
  s.mean = j.at("mean").get<std::array<double, sim::kTelemetryChannels>>();
  s.stddev = j.at("std").get<std::array<double, sim::kTelemetryChannels>>();
  return s;
}

std::vector<int> frame_indices(int start, int count, int stride) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) idx[static_cast<std::size_t>(k)] = start + k * stride;
  return idx;
}

Tensor<float> frames_tensor(const ClipTensor& clip, std::span<const int> indices) {
  const int h = clip.height(), w = clip.width();
  Tensor<float> out({static_cast<int>(indices.size()), h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int f = indices[k];
    if (f < 0 || f >= clip.length()) throw DataError("frame index " + std::to_string(f) + " out of range");
    const auto& v = clip.frames[static_cast<std::size_t>(f)].values();
    for (std::size_t i = 0; i < hw; ++i) out[k * hw + i] = to_model_range(v[i]);
  }
  return out;
}

Tensor<float> masks_tensor(std::span<const BinaryMask> masks, std::span<const int> indices) {
  if (masks.empty()) throw DataError("no masks");
  const int h = masks.front().height(), w = masks.front().width();
  Tensor<float> out({static_cast<int>(indices.size()), h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int f = indices[k];
    if (f < 0 || f >= static_cast<int>(masks.size())) {
      throw DataError("mask index " + std::to_string(f) + " out of range");
    }
    const auto& bits = masks[static_cast<std::size_t>(f)].bits();
    for (std::size_t i = 0; i < hw; ++i) out[k * hw + i] = bits[i] ? 1.0f : -1.0f;
  }
  return out;
}

Tensor<float> frames_tensor(const data::LoadedClip& clip, Modality modality,
                            std::span<const int> indices) {
  return modality == Modality::Infrared ? frames_tensor(clip.infrared, indices)
                                        : masks_tensor(clip.masks, indices);
}

Tensor<float> land_veg_tensor(const RasterGrid& raw) {
  if (raw.channels() != sim::kLandVegChannels) {
    throw DataError("land-vegetation raster has " + std::to_string(raw.channels()) + " channels, expected " +
                    std::to_string(sim::kLandVegChannels));
  }
  Tensor<float> out({raw.channels(), raw.height(), raw.width()});
  const std::size_t hw = raw.pixel_count();
  for (int c = 0; c < raw.channels(); ++c) {
    const double top = kLandVegMax[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < hw; ++i) {
      const double v = std::clamp(raw.values()[c * hw + i] / top, 0.0, 1.0);
      out[c * hw + i] = static_cast<float>(2.0 * v - 1.0);
    }
  }
  return out;
}

Tensor<float> telemetry_tensor(const sim::TelemetrySeries& series, std::span<const double> times,
                               const TelemetryStats& stats) {
  const auto rows = sim::align_telemetry(series, times);
  Tensor<float> out({static_cast<int>(rows.size()), sim::kTelemetryChannels});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int k = 0; k < sim::kTelemetryChannels; ++k) {
      out[r * sim::kTelemetryChannels + k] =
          static_cast<float>((rows[r][k] - stats.mean[k]) / stats.stddev[k]);
    }
  }
  return out;
}

ddpm::ConditionBundle<float> make_condition(const data::LoadedClip& clip, Modality modality,
                                            std::span<const int> observed,
                                            const TelemetryStats& stats, bool drop_em,
                                            bool drop_lv) {
  ddpm::ConditionBundle<float> c;
  c.observed = frames_tensor(clip, modality, observed);
  c.land_veg = land_veg_tensor(clip.land_veg);
  std::vector<double> times;
  for (int f : observed) times.push_back(clip.entry.frame_time(f));
  c.telemetry = telemetry_tensor(clip.telemetry, times, stats);
  c.drop_em = drop_em;
  c.drop_lv = drop_lv;
  return c;
}

}  // namespace firediff::nn
