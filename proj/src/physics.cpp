#include "firediff/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "firediff/error.hpp"
#include "firediff/morphology.hpp"

namespace firediff::sim {

namespace {

constexpr int kDirections = 8;

std::vector<double> direction_rates(std::span<const BinaryMask> observed) {
  const BinaryMask& first = observed.front();
  double cx = 0.0, cy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < first.height(); ++y)
    for (int x = 0; x < first.width(); ++x)
      if (first.get(x, y)) {
        cx += x;
        cy += y;
        ++n;
      }
  if (n == 0) {
    // Fire appeared after the first frame: centre on the first non-empty one.
    for (const auto& m : observed) {
      if (!m.any()) continue;
      const auto cc = connected_components(m);
      cx = cc.components.front().centroid_x;
      cy = cc.components.front().centroid_y;
      n = 1;
      break;
    }
  } else {
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
  }
  const int frames = static_cast<int>(observed.size());
  std::vector<double> rates(kDirections, 0.0);
  for (int d = 0; d < kDirections; ++d) {
    const double ang = 2.0 * std::numbers::pi * d / kDirections;
    const double ux = std::cos(ang), uy = std::sin(ang);
    // least-squares slope of the extent along (ux,uy) over frame index
    double sk = 0, se = 0, skk = 0, ske = 0;
    int used = 0;
    for (int k = 0; k < frames; ++k) {
      const BinaryMask& m = observed[static_cast<std::size_t>(k)];
      double extent = -std::numeric_limits<double>::infinity();
      for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
          if (m.get(x, y)) extent = std::max(extent, (x - cx) * ux + (y - cy) * uy);
      if (!std::isfinite(extent)) continue;
      sk += k;
      se += extent;
      skk += static_cast<double>(k) * k;
      ske += k * extent;
      ++used;
    }
    const double denom = used * skk - sk * sk;
    rates[static_cast<std::size_t>(d)] = (used >= 2 && denom > 0) ? (used * ske - sk * se) / denom : 0.0;
  }
  return rates;
}

// Replays `frames` observed frames, returning the predicted masks after each.
std::vector<BinaryMask> run_forward(WorldState state, const SimConfig& cfg, int frames,
                                    int steps_per_frame) {
  std::vector<BinaryMask> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    for (int s = 0; s < steps_per_frame; ++s) state = step_fire(state, cfg, SpreadMode::Expectation);
    out.push_back(state.fire_mask());
  }
  return out;
}

std::size_t symmetric_difference(const BinaryMask& a, const BinaryMask& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.bits().size(); ++i) d += a.bits()[i] != b.bits()[i];
  return d;
}

// State whose fire matches `mask`; pixels that joined the fire recently (or
// sit on its boundary) burn with the remaining fuel implied by their age.
WorldState state_from_masks(const WorldState& world, const SimConfig& cfg,
                            std::span<const BinaryMask> observed, double frame_interval) {
  WorldState s = world;
  const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
  s.fire.assign(n, FireState::Unburned);
  s.remaining_fuel.assign(n, 0.0f);
  s.burned_at.assign(n, -1);
  s.step = 0;
  s.ignition_seeds.clear();
  const BinaryMask& last = observed.back();
  const BinaryMask edge = boundary(last);
  const int frames = static_cast<int>(observed.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!last.bits()[i]) continue;
    int joined = frames - 1;
    for (int k = 0; k < frames; ++k) {
      if (observed[static_cast<std::size_t>(k)].bits()[i]) {
        joined = k;
        break;
      }
    }
    const double age = (frames - 1 - joined) * frame_interval;
    const double duration = burn_duration(s, i, cfg);
    if (age < duration || edge.bits()[i]) {
      s.fire[i] = s.burnable(i) ? FireState::Burning : FireState::Burned;
      s.remaining_fuel[i] = static_cast<float>(std::max(duration - age, cfg.dt));
    } else {
      s.fire[i] = FireState::Burned;
    }
  }
  return s;
}

}  // namespace

PhysicsForecast physics_forecast(std::span<const BinaryMask> observed, double frame_interval,
                                 const WorldState& world_estimate, int horizon,
                                 const SimConfig& config) {
  if (observed.size() < 2) {
    throw UsageError("physics_forecast: need at least 2 observed frames to estimate front velocity");
  }
  if (horizon < 1) throw UsageError("physics_forecast: horizon must be >= 1");
  if (!(frame_interval > 0)) throw UsageError("physics_forecast: frame_interval must be > 0");
  for (const auto& m : observed) {
    require_same_size(m, observed.front(), "physics_forecast");
    if (m.width() != world_estimate.width || m.height() != world_estimate.height) {
      throw std::invalid_argument("physics_forecast: masks do not match the world estimate");
    }
  }

  PhysicsForecast result;
  if (!observed.back().any()) {
    result.fallback = true;
    result.warning = "no fire pixels in the last observed frame; returning persistence copies";
    result.masks.assign(static_cast<std::size_t>(horizon), observed.back());
    return result;
  }

  PhysicsFit fit;
  fit.direction_rates = direction_rates(observed);
  const double max_rate = *std::max_element(fit.direction_rates.begin(), fit.direction_rates.end());
  const double floor_rate = std::max(1e-3, 0.05 * max_rate);
  double a = 0.0, u = 0.0, v = 0.0;
  for (int d = 0; d < kDirections; ++d) {
    const double ang = 2.0 * std::numbers::pi * d / kDirections;
    const double lr = std::log(std::max(fit.direction_rates[static_cast<std::size_t>(d)], floor_rate));
    a += lr / kDirections;
    u += 2.0 * lr * std::cos(ang) / kDirections;
    v += 2.0 * lr * std::sin(ang) / kDirections;
  }
  fit.kappa = std::hypot(u, v);
  fit.wind_direction = std::atan2(v, u);

  SimConfig cfg = config;
  cfg.wind_coupling = fit.kappa;
  WorldState world = world_estimate;
  world.wind.assign(1, WindSample{1.0, fit.wind_direction});
  const int steps_per_frame = std::max(1, static_cast<int>(std::lround(frame_interval / cfg.dt)));

  // Rate multiplier by replaying the observed interval from the first frame.
  WorldState start = state_from_masks(world, cfg, observed.first(1), frame_interval);
  const int replay_frames = static_cast<int>(observed.size()) - 1;
  double best_err = std::numeric_limits<double>::infinity();
  double best_scale = 1.0;
  for (int k = 0; k <= 40; ++k) {
    const double scale = std::pow(2.0, -3.0 + 6.0 * k / 40.0);
    SimConfig trial = cfg;
    trial.base_spread_rate = config.base_spread_rate * scale;
    const auto replay = run_forward(start, trial, replay_frames, steps_per_frame);
    double err = 0.0;
    for (int f = 0; f < replay_frames; ++f) {
      err += static_cast<double>(
          symmetric_difference(replay[static_cast<std::size_t>(f)], observed[static_cast<std::size_t>(f + 1)]));
    }
    err /= replay_frames;
    if (err < best_err) {
      best_err = err;
      best_scale = scale;
    }
  }
  fit.rate_scale = best_scale;
  fit.replay_error = best_err;
  cfg.base_spread_rate = config.base_spread_rate * best_scale;

  const WorldState now = state_from_masks(world, cfg, observed, frame_interval);
  result.masks = run_forward(now, cfg, horizon, steps_per_frame);
  // Observed fire never disappears from the forecast.
  for (auto& m : result.masks) m = mask_or(m, observed.back());
  result.fit = std::move(fit);
  return result;
}

}  // namespace firediff::sim
