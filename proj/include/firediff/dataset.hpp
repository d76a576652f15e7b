#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "firediff/raster.hpp"
#include "firediff/sim.hpp"
#include "firediff/telemetry.hpp"

namespace firediff::data {

struct DatasetConfig {
  sim::SimConfig sim;
  sim::TelemetryConfig telemetry;
  int clips = 20;
  int frames = 30;         // recorded frames per clip, one per simulated step
  int warmup_steps = 12;   // simulated before the first recorded frame
  std::uint64_t seed = 7;
};

nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);
std::string config_hash(const nlohmann::json& j);

/// One simulated clip held in memory.
struct ClipRecord {
  std::string id;
  std::uint64_t seed = 0;
  ClipTensor infrared;
  std::vector<BinaryMask> masks;  // burning or burned, per frame
  RasterGrid land_veg;            // sim::land_veg_raw
  sim::TelemetrySeries telemetry;
  std::vector<sim::IgnitionSeed> ignition_seeds;
  Pixel sensor;
  double start_time = 0.0;        // seconds of the first recorded frame
};

ClipRecord simulate_clip(const DatasetConfig& config, int index);

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ClipEntry {
  std::string id;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  int frames = 0;
  double frame_interval = 1.0;
  double start_time = 0.0;
  std::string infrared_path;   // relative to the dataset root
  std::string masks_path;
  std::string land_veg_path;
  std::string telemetry_path;
  std::vector<sim::IgnitionSeed> ignition_seeds;
  Pixel sensor;

  double frame_time(int k) const { return start_time + k * frame_interval; }
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json config;
  std::vector<ClipEntry> clips;

  std::vector<const ClipEntry*> split(Split s) const;
  std::array<int, 3> split_counts() const;
};

/// (train, val, test) sizes for an 8:1:1 split. Throws UsageError below 10 clips.
std::array<int, 3> split_sizes(int clips);

/// Writes clip files and manifest.json under `dir`.
DatasetManifest write_dataset(std::span<const ClipRecord> clips, const DatasetConfig& config,
                              const std::filesystem::path& dir);

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& dir);

struct LoadedClip {
  ClipEntry entry;
  ClipTensor infrared;
  std::vector<BinaryMask> masks;
  RasterGrid land_veg;
  sim::TelemetrySeries telemetry;
};

LoadedClip load_clip(const std::filesystem::path& dir, const ClipEntry& entry);

}  // namespace firediff::data
