#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "firediff/raster.hpp"

namespace firediff::sim {

enum class VegetationClass : std::uint8_t {
  TreeForest = 0,
  Grassland = 1,
  Pond = 2,
  DryLand = 3,
  FacilityAgriculture = 4,
  Other = 5,
};

enum class FireState : std::uint8_t { Unburned = 0, Burning = 1, Burned = 2 };

enum class SpreadMode {
  Stochastic,   // ignite with probability p
  Expectation,  // ignite iff p >= 0.5
};

/// Wind blowing toward `direction` (radians, raster axes: +x right, +y down).
struct WindSample {
  double speed = 0.0;  // m/s
  double direction = 0.0;
  friend bool operator==(const WindSample&, const WindSample&) = default;
};

struct IgnitionSeed {
  int x = 0;
  int y = 0;
  int t0 = 0;  // step index at which the seed ignites
  friend bool operator==(const IgnitionSeed&, const IgnitionSeed&) = default;
};

struct SimConfig {
  int width = 64;
  int height = 64;
  double ground_sample_distance = 2.0;  // m/px
  double dt = 1.0;                      // s
  double base_spread_rate = 0.3;        // m/s
  double wind_coupling = 0.3;           // kappa per m/s of wind
  double moisture_damping = 2.0;        // lambda
  double fuel_reference = 1.5;          // kg/m^2 at which fuel_factor = 1
  double burn_duration = 30.0;          // s, before vegetation scaling
  double psf_sigma = 0.8;               // px
  double sensor_noise = 0.02;           // infrared noise std
  double ambient_level = 0.05;
  double scar_level = 0.6;
  double ember_half_life_frames = 3.0;
  double mean_wind_speed = 3.0;         // m/s
  double wind_speed_jitter = 1.5;       // m/s, spread of per-world mean speed
  double wind_drift = 0.01;             // rad/step random-walk std
  double wind_max_deviation = 0.6;      // rad, drift bound around the initial direction
  int wind_steps = 4096;
  int noise_scale = 16;                 // px, value-noise lattice spacing
  std::optional<VegetationClass> vegetation_override;

  /// Throws UsageError for out-of-range parameters.
  void validate() const;
};

struct WorldState {
  int width = 0;
  int height = 0;
  double ground_sample_distance = 2.0;
  std::uint64_t seed = 0;
  int step = 0;

  std::vector<float> fuel_load;     // kg/m^2
  std::vector<float> moisture;      // [0,1]
  std::vector<VegetationClass> vegetation;
  std::vector<float> stem_density;  // stems/ha, [0,9000]
  std::vector<float> canopy_cover;  // [0,0.9]
  std::vector<float> dbh;           // [0,24], unit ambiguous in the source data

  std::vector<FireState> fire;
  std::vector<float> remaining_fuel;  // seconds of burning left
  std::vector<int> burned_at;         // step of burnout, -1 otherwise

  std::vector<WindSample> wind;       // indexed by step
  std::vector<IgnitionSeed> ignition_seeds;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool burnable(std::size_t i) const { return vegetation[i] != VegetationClass::Pond; }
  const WindSample& wind_at(int s) const;

  BinaryMask fire_mask() const;     // burning or burned
  BinaryMask burning_mask() const;
  std::size_t burning_count() const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Seconds a pixel burns once ignited.
double burn_duration(const WorldState& w, std::size_t i, const SimConfig& config);

/// Builds vegetation/fuel fields, wind series and 1-3 ignition seeds. The first
/// seed has t0 = 0 and is burning in the returned state. Throws UsageError for
/// grids smaller than 16x16 and DataError when no pixel is burnable.
WorldState gen_world(const SimConfig& config, std::uint64_t seed);

/// Ignition probability of pixel (x,y) given the current burning set.
double ignition_probability(const WorldState& state, const SimConfig& config, int x, int y);

/// One synchronous CA step of config.dt seconds.
WorldState step_fire(const WorldState& state, const SimConfig& config,
                     SpreadMode mode = SpreadMode::Stochastic);

/// Per-pixel heat before blur: burning 1, burned decays toward scar_level,
/// unburned ambient.
RasterGrid heat_map(const WorldState& state, const SimConfig& config);

/// Blurred heat plus keyed sensor noise, clamped to [0,1].
RasterGrid render_infrared(const WorldState& state, const SimConfig& config);

/// Separable Gaussian blur, renormalized at the borders.
RasterGrid gaussian_blur(const RasterGrid& in, double sigma);

/// Land-vegetation stack: fuel_load, moisture, stem_density, canopy_cover, dbh,
/// vegetation class code. Raw physical units.
RasterGrid land_veg_raw(const WorldState& w);

/// Rebuilds the static fields of a world from a land_veg_raw() raster. Fire
/// state is unburned everywhere and the wind series is empty.
WorldState world_from_land_veg(const RasterGrid& raw);

inline constexpr int kLandVegChannels = 6;

}  // namespace firediff::sim
