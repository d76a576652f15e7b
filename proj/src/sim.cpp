#include "firediff/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "firediff/error.hpp"
#include "firediff/rng.hpp"

namespace firediff::sim {

namespace {

constexpr std::uint64_t kSpreadStream = 0x5157ead;
constexpr std::uint64_t kRenderStream = 0x12e4de2;
constexpr std::uint64_t kFieldStream = 0xf1e1d;

struct NeighbourOffset {
  int dx, dy;
  double angle;  // direction of travel from the neighbour into the centre pixel
};

const std::array<NeighbourOffset, 8>& neighbour_offsets() {
  static const std::array<NeighbourOffset, 8> offs = [] {
    std::array<NeighbourOffset, 8> o{};
    int k = 0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        // neighbour sits at (x+dx, y+dy); fire travels by (-dx, -dy)
        o[k++] = {dx, dy, std::atan2(static_cast<double>(-dy), static_cast<double>(-dx))};
      }
    return o;
  }();
  return offs;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Two-octave lattice value noise in [0,1).
double value_noise(std::uint64_t seed, std::uint64_t field, double x, double y, int scale) {
  double total = 0.0, amp = 1.0, norm = 0.0;
  double s = std::max(1, scale);
  for (int octave = 0; octave < 2; ++octave) {
    const double fx = x / s, fy = y / s;
    const double x0 = std::floor(fx), y0 = std::floor(fy);
    const double tx = smoothstep(fx - x0), ty = smoothstep(fy - y0);
    auto lattice = [&](double lx, double ly) {
      return counter_uniform(seed, kFieldStream + field * 16 + octave,
                             static_cast<std::uint64_t>(static_cast<std::int64_t>(lx) + (1 << 20)),
                             static_cast<std::uint64_t>(static_cast<std::int64_t>(ly) + (1 << 20)));
    };
    const double a = lattice(x0, y0), b = lattice(x0 + 1, y0);
    const double c = lattice(x0, y0 + 1), d = lattice(x0 + 1, y0 + 1);
    total += amp * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty);
    norm += amp;
    amp *= 0.5;
    s *= 0.5;
  }
  return total / norm;
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

void assign_vegetation(WorldState& w, std::size_t i, VegetationClass cls, double n, double moist_noise) {
  w.vegetation[i] = cls;
  double stem = 0, canopy = 0, dbh = 0, fuel = 0, moist = 0;
  switch (cls) {
    case VegetationClass::TreeForest:
      stem = lerp(3000, 9000, n); canopy = lerp(0.5, 0.9, n); dbh = lerp(8, 24, n);
      fuel = lerp(1.8, 3.0, n); moist = 0.18;
      break;
    case VegetationClass::Grassland:
      stem = lerp(0, 300, n); canopy = lerp(0.0, 0.1, n); dbh = lerp(0, 2, n);
      fuel = lerp(0.8, 1.4, n); moist = 0.10;
      break;
    case VegetationClass::DryLand:
      stem = lerp(0, 100, n); canopy = lerp(0.0, 0.05, n); dbh = lerp(0, 1, n);
      fuel = lerp(0.4, 0.8, n); moist = 0.05;
      break;
    case VegetationClass::FacilityAgriculture:
      stem = lerp(0, 500, n); canopy = lerp(0.1, 0.3, n); dbh = lerp(0, 3, n);
      fuel = lerp(0.6, 1.0, n); moist = 0.30;
      break;
    case VegetationClass::Other:
      stem = lerp(0, 1000, n); canopy = lerp(0.0, 0.3, n); dbh = lerp(0, 6, n);
      fuel = lerp(1.0, 1.5, n); moist = 0.15;
      break;
    case VegetationClass::Pond:
      moist = 1.0;
      break;
  }
  w.stem_density[i] = static_cast<float>(std::clamp(stem, 0.0, 9000.0));
  w.canopy_cover[i] = static_cast<float>(std::clamp(canopy, 0.0, 0.9));
  w.dbh[i] = static_cast<float>(std::clamp(dbh, 0.0, 24.0));
  w.fuel_load[i] = static_cast<float>(fuel);
  w.moisture[i] = static_cast<float>(
      cls == VegetationClass::Pond ? 1.0 : std::clamp(moist + 0.1 * (moist_noise - 0.5), 0.0, 1.0));
}

void ignite(WorldState& w, std::size_t i, const SimConfig& config) {
  w.fire[i] = FireState::Burning;
  w.remaining_fuel[i] = static_cast<float>(burn_duration(w, i, config));
}

}  // namespace

void SimConfig::validate() const {
  if (width < 1 || height < 1) throw UsageError("sim: grid dimensions must be >= 1");
  if (!(ground_sample_distance > 0)) throw UsageError("sim: ground_sample_distance must be > 0");
  if (!(dt > 0)) throw UsageError("sim: dt must be > 0");
  for (double r : {base_spread_rate, wind_coupling, moisture_damping, burn_duration, psf_sigma,
                   sensor_noise, wind_drift, mean_wind_speed, wind_speed_jitter}) {
    if (!(r >= 0)) throw UsageError("sim: rates and coefficients must be >= 0");
  }
  if (!(fuel_reference > 0)) throw UsageError("sim: fuel_reference must be > 0");
  if (wind_steps < 1) throw UsageError("sim: wind_steps must be >= 1");
}

const WindSample& WorldState::wind_at(int s) const {
  static const WindSample calm{};
  if (wind.empty()) return calm;
  return wind[static_cast<std::size_t>(std::clamp(s, 0, static_cast<int>(wind.size()) - 1))];
}

BinaryMask WorldState::fire_mask() const {
  BinaryMask m(width, height);
  for (std::size_t i = 0; i < fire.size(); ++i) m.bits()[i] = fire[i] != FireState::Unburned;
  return m;
}

BinaryMask WorldState::burning_mask() const {
  BinaryMask m(width, height);
  for (std::size_t i = 0; i < fire.size(); ++i) m.bits()[i] = fire[i] == FireState::Burning;
  return m;
}

std::size_t WorldState::burning_count() const {
  return static_cast<std::size_t>(std::count(fire.begin(), fire.end(), FireState::Burning));
}

double burn_duration(const WorldState& w, std::size_t i, const SimConfig& config) {
  return config.burn_duration * (0.5 + w.stem_density[i] / 9000.0 + w.canopy_cover[i]);
}

WorldState gen_world(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.width < 16 || config.height < 16) {
    throw UsageError("sim: grids smaller than 16x16 are degenerate (got " +
                     std::to_string(config.width) + "x" + std::to_string(config.height) + ")");
  }
  WorldState w;
  w.width = config.width;
  w.height = config.height;
  w.ground_sample_distance = config.ground_sample_distance;
  w.seed = seed;
  const std::size_t n = static_cast<std::size_t>(w.width) * w.height;
  w.fuel_load.assign(n, 0);
  w.moisture.assign(n, 0);
  w.vegetation.assign(n, VegetationClass::Other);
  w.stem_density.assign(n, 0);
  w.canopy_cover.assign(n, 0);
  w.dbh.assign(n, 0);
  w.fire.assign(n, FireState::Unburned);
  w.remaining_fuel.assign(n, 0);
  w.burned_at.assign(n, -1);

  for (int y = 0; y < w.height; ++y) {
    for (int x = 0; x < w.width; ++x) {
      const std::size_t i = w.index(x, y);
      const double wet = value_noise(seed, 1, x, y, config.noise_scale);
      const double veg = value_noise(seed, 2, x, y, config.noise_scale);
      const double agri = value_noise(seed, 3, x, y, config.noise_scale * 2);
      const double detail = value_noise(seed, 4, x, y, std::max(2, config.noise_scale / 4));
      const double moist = value_noise(seed, 5, x, y, config.noise_scale);
      VegetationClass cls;
      if (config.vegetation_override) {
        cls = *config.vegetation_override;
      } else if (wet > 0.8) {
        cls = VegetationClass::Pond;
      } else if (agri > 0.82) {
        cls = VegetationClass::FacilityAgriculture;
      } else if (veg > 0.6) {
        cls = VegetationClass::TreeForest;
      } else if (veg > 0.42) {
        cls = VegetationClass::Grassland;
      } else if (veg > 0.28) {
        cls = VegetationClass::DryLand;
      } else {
        cls = VegetationClass::Other;
      }
      assign_vegetation(w, i, cls, detail, moist);
    }
  }

  Rng rng(hash_key(seed, 0x3157d));
  const double dir0 = uniform01(rng) * 2.0 * std::numbers::pi;
  const double mean_speed =
      std::max(0.0, config.mean_wind_speed + config.wind_speed_jitter * (2.0 * uniform01(rng) - 1.0));
  std::normal_distribution<double> normal(0.0, 1.0);
  double dev = 0.0;
  w.wind.reserve(static_cast<std::size_t>(config.wind_steps));
  for (int s = 0; s < config.wind_steps; ++s) {
    dev = std::clamp(dev + config.wind_drift * normal(rng), -config.wind_max_deviation,
                     config.wind_max_deviation);
    const double speed = std::max(0.0, mean_speed * (1.0 + 0.15 * std::sin(0.01 * s + dir0)) +
                                           0.1 * normal(rng));
    w.wind.push_back({speed, dir0 + dev});
  }

  std::vector<std::size_t> central, anywhere;
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      const std::size_t i = w.index(x, y);
      if (!w.burnable(i)) continue;
      anywhere.push_back(i);
      if (x >= w.width / 4 && x < 3 * w.width / 4 && y >= w.height / 4 && y < 3 * w.height / 4) {
        central.push_back(i);
      }
    }
  if (anywhere.empty()) throw DataError("sim: no burnable pixel to place an ignition seed");
  const auto& pool = central.empty() ? anywhere : central;
  const int count = uniform_int(rng, 1, 3);
  for (int k = 0; k < count; ++k) {
    const std::size_t i = pool[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
    const int t0 = k == 0 ? 0 : uniform_int(rng, 1, 10);
    w.ignition_seeds.push_back({static_cast<int>(i % w.width), static_cast<int>(i / w.width), t0});
  }
  for (const auto& s : w.ignition_seeds) {
    if (s.t0 == 0) {
      const std::size_t i = w.index(s.x, s.y);
      if (w.fire[i] == FireState::Unburned) ignite(w, i, config);
    }
  }
  return w;
}

double ignition_probability(const WorldState& state, const SimConfig& config, int x, int y) {
  const std::size_t i = state.index(x, y);
  if (!state.burnable(i) || state.fire[i] != FireState::Unburned) return 0.0;
  bool exposed = false;
  for (const auto& o : neighbour_offsets()) {
    const int nx = x + o.dx, ny = y + o.dy;
    if (state.in_bounds(nx, ny) && state.fire[state.index(nx, ny)] == FireState::Burning) {
      exposed = true;
      break;
    }
  }
  if (!exposed) return 0.0;
  const WindSample& wind = state.wind_at(state.step);
  const double kappa = config.wind_coupling * wind.speed;
  double normalizer = 0.0;
  for (const auto& o : neighbour_offsets()) normalizer += std::exp(kappa * std::cos(wind.direction - o.angle));
  normalizer /= 8.0;
  double weight_sum = 0.0;
  for (const auto& o : neighbour_offsets()) {
    const int nx = x + o.dx, ny = y + o.dy;
    if (!state.in_bounds(nx, ny) || state.fire[state.index(nx, ny)] != FireState::Burning) continue;
    weight_sum += std::exp(kappa * std::cos(wind.direction - o.angle)) / normalizer;
  }
  if (weight_sum == 0.0) return 0.0;
  const double fuel_factor = std::min(state.fuel_load[i] / config.fuel_reference, 2.0);
  const double damp = std::pow(1.0 - static_cast<double>(state.moisture[i]), config.moisture_damping);
  const double p = config.base_spread_rate * config.dt / state.ground_sample_distance * weight_sum *
                   damp * fuel_factor;
  return std::clamp(p, 0.0, 1.0);
}

WorldState step_fire(const WorldState& state, const SimConfig& config, SpreadMode mode) {
  WorldState next = state;
  next.step = state.step + 1;
  const int w = state.width, h = state.height;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = state.index(x, y);
      switch (state.fire[i]) {
        case FireState::Unburned: {
          const double p = ignition_probability(state, config, x, y);
          if (p <= 0.0) break;
          const bool lit = mode == SpreadMode::Expectation
                               ? p >= 0.5
                               : counter_uniform(state.seed, kSpreadStream,
                                                 static_cast<std::uint64_t>(state.step), i) < p;
          if (lit) ignite(next, i, config);
          break;
        }
        case FireState::Burning: {
          const float left = state.remaining_fuel[i] - static_cast<float>(config.dt);
          if (left <= 0.0f) {
            next.fire[i] = FireState::Burned;
            next.remaining_fuel[i] = 0.0f;
            next.burned_at[i] = next.step;
          } else {
            next.remaining_fuel[i] = left;
          }
          break;
        }
        case FireState::Burned:
          break;
      }
    }
  }
  for (const auto& s : state.ignition_seeds) {
    if (s.t0 != next.step || !state.in_bounds(s.x, s.y)) continue;
    const std::size_t i = next.index(s.x, s.y);
    if (next.burnable(i) && next.fire[i] == FireState::Unburned) ignite(next, i, config);
  }
  return next;
}

RasterGrid heat_map(const WorldState& state, const SimConfig& config) {
  RasterGrid heat(state.width, state.height, state.ground_sample_distance, 1,
                  static_cast<float>(config.ambient_level));
  for (std::size_t i = 0; i < state.fire.size(); ++i) {
    if (state.fire[i] == FireState::Burning) {
      heat.values()[i] = 1.0f;
    } else if (state.fire[i] == FireState::Burned) {
      const double age = state.step - state.burned_at[i];  // one frame per step
      const double ember = std::exp2(-age / config.ember_half_life_frames);
      heat.values()[i] = static_cast<float>(config.scar_level + (1.0 - config.scar_level) * ember);
    }
  }
  return heat;
}

RasterGrid gaussian_blur(const RasterGrid& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  for (int d = -r; d <= r; ++d) k[static_cast<std::size_t>(d + r)] = std::exp(-0.5 * d * d / (sigma * sigma));
  const int w = in.width(), h = in.height();
  RasterGrid tmp = in, out = in;
  for (int c = 0; c < in.channels(); ++c) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0, norm = 0.0;
        for (int d = -r; d <= r; ++d) {
          const int xx = x + d;
          if (xx < 0 || xx >= w) continue;
          acc += k[static_cast<std::size_t>(d + r)] * in.at(xx, y, c);
          norm += k[static_cast<std::size_t>(d + r)];
        }
        tmp.at(x, y, c) = static_cast<float>(acc / norm);
      }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0, norm = 0.0;
        for (int d = -r; d <= r; ++d) {
          const int yy = y + d;
          if (yy < 0 || yy >= h) continue;
          acc += k[static_cast<std::size_t>(d + r)] * tmp.at(x, yy, c);
          norm += k[static_cast<std::size_t>(d + r)];
        }
        out.at(x, y, c) = static_cast<float>(acc / norm);
      }
  }
  return out;
}

RasterGrid render_infrared(const WorldState& state, const SimConfig& config) {
  RasterGrid frame = gaussian_blur(heat_map(state, config), config.psf_sigma);
  auto& v = frame.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    double val = v[i];
    if (config.sensor_noise > 0.0) {
      val += config.sensor_noise *
             counter_normal(state.seed, kRenderStream, static_cast<std::uint64_t>(state.step), i);
    }
    v[i] = static_cast<float>(std::clamp(val, 0.0, 1.0));
  }
  return frame;
}

RasterGrid land_veg_raw(const WorldState& w) {
  RasterGrid g(w.width, w.height, w.ground_sample_distance, kLandVegChannels);
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      const std::size_t i = w.index(x, y);
      g.at(x, y, 0) = w.fuel_load[i];
      g.at(x, y, 1) = w.moisture[i];
      g.at(x, y, 2) = w.stem_density[i];
      g.at(x, y, 3) = w.canopy_cover[i];
      g.at(x, y, 4) = w.dbh[i];
      g.at(x, y, 5) = static_cast<float>(static_cast<int>(w.vegetation[i]));
    }
  return g;
}

WorldState world_from_land_veg(const RasterGrid& raw) {
  if (raw.channels() != kLandVegChannels) {
    throw DataError("sim: land-vegetation raster must have " + std::to_string(kLandVegChannels) +
                    " channels");
  }
  WorldState w;
  w.width = raw.width();
  w.height = raw.height();
  w.ground_sample_distance = raw.ground_sample_distance();
  const std::size_t n = raw.pixel_count();
  w.fuel_load.resize(n);
  w.moisture.resize(n);
  w.stem_density.resize(n);
  w.canopy_cover.resize(n);
  w.dbh.resize(n);
  w.vegetation.resize(n);
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      const std::size_t i = w.index(x, y);
      w.fuel_load[i] = raw.at(x, y, 0);
      w.moisture[i] = raw.at(x, y, 1);
      w.stem_density[i] = raw.at(x, y, 2);
      w.canopy_cover[i] = raw.at(x, y, 3);
      w.dbh[i] = raw.at(x, y, 4);
      const int code = static_cast<int>(std::lround(raw.at(x, y, 5)));
      if (code < 0 || code > 5) throw DataError("sim: invalid vegetation class code");
      w.vegetation[i] = static_cast<VegetationClass>(code);
    }
  w.fire.assign(n, FireState::Unburned);
  w.remaining_fuel.assign(n, 0.0f);
  w.burned_at.assign(n, -1);
  return w;
}

}  // namespace firediff::sim
