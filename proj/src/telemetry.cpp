#include "firediff/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "firediff/error.hpp"
#include "firediff/rng.hpp"

namespace firediff::sim {

const std::array<std::string, kTelemetryChannels>& telemetry_channel_names() {
  static const std::array<std::string, kTelemetryChannels> names = {
      "pm25", "pm10", "co", "so2", "no2", "o3", "voc", "temp", "humidity", "wind_speed", "wind_dir"};
  return names;
}

void TelemetryConfig::validate() const {
  if (interval < 3.0 || interval > 30.0) throw UsageError("telemetry: interval must lie in [3, 30] s");
  if (!(pm_radius > 0) || !(proximity_length > 0) || !(pm_saturation > 0) || !(rise_time > 0) ||
      !(decay_time > 0) || !(heat_saturation > 0)) {
    throw UsageError("telemetry: lengths and time constants must be > 0");
  }
}

FireSnapshot snapshot(const WorldState& w, const SimConfig& config) {
  return {w.step * config.dt, w.step, w.fire};
}

double heat_proximity(const FireSnapshot& snap, int width, Pixel sensor, double length) {
  double acc = 0.0;
  const double inv = 1.0 / (2.0 * length * length);
  for (std::size_t i = 0; i < snap.fire.size(); ++i) {
    if (snap.fire[i] != FireState::Burning) continue;
    const double dx = static_cast<double>(static_cast<int>(i % width) - sensor.x);
    const double dy = static_cast<double>(static_cast<int>(i / width) - sensor.y);
    acc += std::exp(-(dx * dx + dy * dy) * inv);
  }
  return acc;
}

TelemetrySeries synth_telemetry(std::span<const FireSnapshot> history, Pixel sensor,
                                const WorldState& world, const TelemetryConfig& config,
                                std::uint64_t seed) {
  config.validate();
  if (history.empty()) throw UsageError("telemetry: history must be non-empty");
  TelemetrySeries out;
  out.sensor_position = sensor;
  const int width = world.width;
  const double r2 = config.pm_radius * config.pm_radius;
  double source = 0.0;
  double next_emit = history.front().time;
  double prev_time = history.front().time;
  for (const auto& snap : history) {
    const double dt = snap.time - prev_time;
    prev_time = snap.time;
    std::size_t burning = 0;
    for (std::size_t i = 0; i < snap.fire.size(); ++i) {
      if (snap.fire[i] != FireState::Burning) continue;
      const double dx = static_cast<double>(static_cast<int>(i % width) - sensor.x);
      const double dy = static_cast<double>(static_cast<int>(i / width) - sensor.y);
      if (dx * dx + dy * dy <= r2) ++burning;
    }
    const double target = 1.0 - std::exp(-static_cast<double>(burning) / config.pm_saturation);
    const double tau = target > source ? config.rise_time : config.decay_time;
    if (dt > 0.0) source += (target - source) * (1.0 - std::exp(-dt / tau));
    if (snap.time + 1e-9 < next_emit) continue;
    next_emit += config.interval;

    const double heat =
        1.0 - std::exp(-heat_proximity(snap, width, sensor, config.proximity_length) /
                       config.heat_saturation);
    const WindSample& wind = world.wind_at(snap.step);
    const auto step = static_cast<std::uint64_t>(snap.step);
    std::array<double, kTelemetryChannels> r{};
    r[kPm25] = config.pm25_base + config.pm25_gain * source;
    r[kPm10] = config.pm10_base + config.pm10_ratio * config.pm25_gain * source;
    r[kCo] = 0.3 + 4.0 * source;
    r[kSo2] = 2.0 + 6.0 * source;
    r[kNo2] = 10.0 + 30.0 * source;
    r[kO3] = std::max(0.0, 40.0 - 10.0 * source);
    r[kVoc] = 50.0 + 300.0 * source;
    r[kTemperature] = config.temperature_base + config.temperature_gain * heat;
    r[kHumidity] = std::clamp(config.humidity_base - config.humidity_drop * heat, 0.0, 100.0);
    r[kWindSpeed] =
        std::max(0.0, wind.speed * (1.0 + config.wind_jitter * counter_normal(seed, 0x71d, step, 0)));
    r[kWindDirection] = wind.direction + config.wind_jitter * counter_normal(seed, 0x71d, step, 1);
    out.timestamps.push_back(snap.time);
    out.records.push_back(r);
  }
  return out;
}

std::vector<std::array<double, kTelemetryChannels>> align_telemetry(
    const TelemetrySeries& series, std::span<const double> times) {
  if (series.size() == 0) throw DataError("telemetry: empty series");
  std::vector<std::array<double, kTelemetryChannels>> out;
  out.reserve(times.size());
  const auto& ts = series.timestamps;
  for (double t : times) {
    if (t <= ts.front()) {
      out.push_back(series.records.front());
      continue;
    }
    if (t >= ts.back()) {
      out.push_back(series.records.back());
      continue;
    }
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - ts.begin());
    const std::size_t lo = hi - 1;
    const double a = (t - ts[lo]) / (ts[hi] - ts[lo]);
    std::array<double, kTelemetryChannels> r{};
    for (int c = 0; c < kTelemetryChannels; ++c) {
      r[c] = series.records[lo][c] * (1.0 - a) + series.records[hi][c] * a;
    }
    out.push_back(r);
  }
  return out;
}

void write_telemetry_csv(const std::filesystem::path& path, const TelemetrySeries& series) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("telemetry: cannot open for writing: " + path.string());
  f << "t";
  for (const auto& n : telemetry_channel_names()) f << ',' << n;
  f << '\n';
  char buf[64];
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f", series.timestamps[k]);
    f << buf;
    for (double v : series.records[k]) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw DataError("telemetry: write failed: " + path.string());
}

TelemetrySeries read_telemetry_csv(const std::filesystem::path& path, Pixel sensor) {
  std::ifstream f(path);
  if (!f) throw DataError("telemetry: cannot open: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("t,pm25,pm10", 0) != 0) {
    throw DataError("telemetry: bad CSV header in " + path.string());
  }
  TelemetrySeries s;
  s.sensor_position = sensor;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != kTelemetryChannels + 1) throw DataError("telemetry: bad row in " + path.string());
    s.timestamps.push_back(vals[0]);
    std::array<double, kTelemetryChannels> r{};
    std::copy(vals.begin() + 1, vals.end(), r.begin());
    s.records.push_back(r);
  }
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (!(s.timestamps[k] > s.timestamps[k - 1])) throw DataError("telemetry: timestamps not increasing");
  }
  return s;
}

}  // namespace firediff::sim
