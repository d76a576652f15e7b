#pragma once

#include <span>
#include <string>
#include <vector>

#include "firediff/raster.hpp"
#include "firediff/sim.hpp"

namespace firediff::sim {

struct PhysicsFit {
  double rate_scale = 1.0;      // multiplier on base_spread_rate
  double kappa = 0.0;           // fitted wind concentration
  double wind_direction = 0.0;  // fitted spread direction (radians)
  std::vector<double> direction_rates;  // px/frame along the 8 compass directions
  double replay_error = 0.0;    // mean symmetric-difference pixels over the observed frames
};

struct PhysicsForecast {
  std::vector<BinaryMask> masks;
  PhysicsFit fit;
  bool fallback = false;  // persistence copies were returned
  std::string warning;
};

/// Fits spread parameters to the observed frontal advance and runs the
/// expectation-threshold CA forward `horizon` frames.
///
/// `world_estimate` supplies the static fuel/vegetation fields; its fire state
/// and wind are ignored. `frame_interval` is the time between observed frames in
/// seconds. Throws UsageError for fewer than two observed frames or horizon < 1.
PhysicsForecast physics_forecast(std::span<const BinaryMask> observed, double frame_interval,
                                 const WorldState& world_estimate, int horizon,
                                 const SimConfig& config);

}  // namespace firediff::sim
