#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "firediff/raster.hpp"
#include "firediff/sim.hpp"

namespace firediff::sim {

inline constexpr int kTelemetryChannels = 11;

enum TelemetryChannel : int {
  kPm25 = 0,
  kPm10,
  kCo,
  kSo2,
  kNo2,
  kO3,
  kVoc,
  kTemperature,
  kHumidity,
  kWindSpeed,
  kWindDirection,
};

const std::array<std::string, kTelemetryChannels>& telemetry_channel_names();

/// Fire state of every pixel at one instant (FireState codes).
struct FireSnapshot {
  double time = 0.0;
  int step = 0;
  std::vector<FireState> fire;
};

FireSnapshot snapshot(const WorldState& w, const SimConfig& config);

struct TelemetryConfig {
  double interval = 3.0;            // s, must lie in [3, 30]
  double pm_radius = 14.0;          // px, burning pixels counted for particulates
  double proximity_length = 5.0;    // px, Gaussian length of the heat proximity index
  double pm_saturation = 30.0;      // burning pixels for ~63% of the source maximum
  double pm25_base = 12.0;          // ug/m3
  double pm25_gain = 280.0;         // ug/m3 above base at full source
  double pm10_ratio = 1.25;         // PM10 excess relative to PM2.5 excess
  double pm10_base = 20.0;
  double rise_time = 25.0;          // s
  double decay_time = 85.0;         // s
  double decay_window = 120.0;      // s after burnout used to judge the tail
  double temperature_base = 24.0;   // degC
  double temperature_gain = 22.0;
  double humidity_base = 48.0;      // %
  double humidity_drop = 30.0;
  double heat_saturation = 3.0;     // proximity index for ~63% of the heat response
  double wind_jitter = 0.05;        // relative speed jitter and radians of direction jitter

  void validate() const;
};

struct TelemetrySeries {
  std::vector<double> timestamps;                          // s, strictly increasing
  std::vector<std::array<double, kTelemetryChannels>> records;
  Pixel sensor_position;

  std::size_t size() const { return timestamps.size(); }
};

/// Environmental telemetry at `sensor` driven by a fire history sampled once per
/// simulation step. Particulates and gases follow a first-order response to the
/// burning pixel count inside pm_radius; temperature and humidity are monotone
/// in the heat proximity index.
TelemetrySeries synth_telemetry(std::span<const FireSnapshot> history, Pixel sensor,
                                const WorldState& world, const TelemetryConfig& config,
                                std::uint64_t seed);

/// Heat proximity index sum over burning pixels of exp(-d^2 / 2 l^2).
double heat_proximity(const FireSnapshot& snap, int width, Pixel sensor, double length);

/// Linear interpolation of every channel onto `times`, clamped at the ends.
std::vector<std::array<double, kTelemetryChannels>> align_telemetry(
    const TelemetrySeries& series, std::span<const double> times);

void write_telemetry_csv(const std::filesystem::path& path, const TelemetrySeries& series);
TelemetrySeries read_telemetry_csv(const std::filesystem::path& path, Pixel sensor = {});

}  // namespace firediff::sim
