#include "firediff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "firediff/error.hpp"
#include "firediff/fsrt.hpp"
#include "firediff/rng.hpp"

namespace firediff::data {

using nlohmann::json;

namespace {

void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

}  // namespace

json to_json(const DatasetConfig& c) {
  const auto& s = c.sim;
  const auto& t = c.telemetry;
  json j;
  j["clips"] = c.clips;
  j["frames"] = c.frames;
  j["warmup_steps"] = c.warmup_steps;
  j["seed"] = c.seed;
  j["sim"] = {{"width", s.width},
              {"height", s.height},
              {"ground_sample_distance", s.ground_sample_distance},
              {"dt", s.dt},
              {"base_spread_rate", s.base_spread_rate},
              {"wind_coupling", s.wind_coupling},
              {"moisture_damping", s.moisture_damping},
              {"fuel_reference", s.fuel_reference},
              {"burn_duration", s.burn_duration},
              {"psf_sigma", s.psf_sigma},
              {"sensor_noise", s.sensor_noise},
              {"ambient_level", s.ambient_level},
              {"scar_level", s.scar_level},
              {"ember_half_life_frames", s.ember_half_life_frames},
              {"mean_wind_speed", s.mean_wind_speed},
              {"wind_speed_jitter", s.wind_speed_jitter},
              {"wind_drift", s.wind_drift},
              {"wind_max_deviation", s.wind_max_deviation},
              {"wind_steps", s.wind_steps},
              {"noise_scale", s.noise_scale}};
  if (s.vegetation_override) j["sim"]["vegetation_override"] = static_cast<int>(*s.vegetation_override);
  j["telemetry"] = {{"interval", t.interval},
                    {"pm_radius", t.pm_radius},
                    {"proximity_length", t.proximity_length},
                    {"pm_saturation", t.pm_saturation},
                    {"pm25_base", t.pm25_base},
                    {"pm25_gain", t.pm25_gain},
                    {"pm10_ratio", t.pm10_ratio},
                    {"pm10_base", t.pm10_base},
                    {"rise_time", t.rise_time},
                    {"decay_time", t.decay_time},
                    {"decay_window", t.decay_window},
                    {"temperature_base", t.temperature_base},
                    {"temperature_gain", t.temperature_gain},
                    {"humidity_base", t.humidity_base},
                    {"humidity_drop", t.humidity_drop},
                    {"heat_saturation", t.heat_saturation},
                    {"wind_jitter", t.wind_jitter}};
  return j;
}

DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig c;
  c.clips = j.value("clips", c.clips);
  c.frames = j.value("frames", c.frames);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    auto& o = c.sim;
    o.width = s.value("width", o.width);
    o.height = s.value("height", o.height);
    o.ground_sample_distance = s.value("ground_sample_distance", o.ground_sample_distance);
    o.dt = s.value("dt", o.dt);
    o.base_spread_rate = s.value("base_spread_rate", o.base_spread_rate);
    o.wind_coupling = s.value("wind_coupling", o.wind_coupling);
    o.moisture_damping = s.value("moisture_damping", o.moisture_damping);
    o.fuel_reference = s.value("fuel_reference", o.fuel_reference);
    o.burn_duration = s.value("burn_duration", o.burn_duration);
    o.psf_sigma = s.value("psf_sigma", o.psf_sigma);
    o.sensor_noise = s.value("sensor_noise", o.sensor_noise);
    o.ambient_level = s.value("ambient_level", o.ambient_level);
    o.scar_level = s.value("scar_level", o.scar_level);
    o.ember_half_life_frames = s.value("ember_half_life_frames", o.ember_half_life_frames);
    o.mean_wind_speed = s.value("mean_wind_speed", o.mean_wind_speed);
    o.wind_speed_jitter = s.value("wind_speed_jitter", o.wind_speed_jitter);
    o.wind_drift = s.value("wind_drift", o.wind_drift);
    o.wind_max_deviation = s.value("wind_max_deviation", o.wind_max_deviation);
    o.wind_steps = s.value("wind_steps", o.wind_steps);
    o.noise_scale = s.value("noise_scale", o.noise_scale);
    if (s.contains("vegetation_override")) {
      o.vegetation_override = static_cast<sim::VegetationClass>(s["vegetation_override"].get<int>());
    }
  }
  if (j.contains("telemetry")) {
    const auto& t = j["telemetry"];
    auto& o = c.telemetry;
    o.interval = t.value("interval", o.interval);
    o.pm_radius = t.value("pm_radius", o.pm_radius);
    o.proximity_length = t.value("proximity_length", o.proximity_length);
    o.pm_saturation = t.value("pm_saturation", o.pm_saturation);
    o.pm25_base = t.value("pm25_base", o.pm25_base);
    o.pm25_gain = t.value("pm25_gain", o.pm25_gain);
    o.pm10_ratio = t.value("pm10_ratio", o.pm10_ratio);
    o.pm10_base = t.value("pm10_base", o.pm10_base);
    o.rise_time = t.value("rise_time", o.rise_time);
    o.decay_time = t.value("decay_time", o.decay_time);
    o.decay_window = t.value("decay_window", o.decay_window);
    o.temperature_base = t.value("temperature_base", o.temperature_base);
    o.temperature_gain = t.value("temperature_gain", o.temperature_gain);
    o.humidity_base = t.value("humidity_base", o.humidity_base);
    o.humidity_drop = t.value("humidity_drop", o.humidity_drop);
    o.heat_saturation = t.value("heat_saturation", o.heat_saturation);
    o.wind_jitter = t.value("wind_jitter", o.wind_jitter);
  }
  return c;
}

std::string config_hash(const json& j) {
  // FNV-1a over the canonical dump.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ClipRecord simulate_clip(const DatasetConfig& config, int index) {
  if (config.frames < 1) throw UsageError("dataset: frames must be >= 1");
  if (config.warmup_steps < 0) throw UsageError("dataset: warmup_steps must be >= 0");
  ClipRecord rec;
  char id[32];
  std::snprintf(id, sizeof id, "clip_%03d", index);
  rec.id = id;
  rec.seed = hash_key(config.seed, 0xc11b, static_cast<std::uint64_t>(index));
  sim::SimConfig sc = config.sim;
  sc.wind_steps = std::max(sc.wind_steps, config.warmup_steps + config.frames + 1);
  sim::WorldState world = sim::gen_world(sc, rec.seed);
  rec.land_veg = sim::land_veg_raw(world);
  rec.ignition_seeds = world.ignition_seeds;

  // Sensor sits downwind of the first seed so the front reaches it.
  const auto& s0 = world.ignition_seeds.front();
  const double dir = world.wind.front().direction;
  const double reach = std::max(6.0, 0.18 * std::min(world.width, world.height));
  rec.sensor.x = std::clamp(static_cast<int>(std::lround(s0.x + reach * std::cos(dir))), 2, world.width - 3);
  rec.sensor.y = std::clamp(static_cast<int>(std::lround(s0.y + reach * std::sin(dir))), 2, world.height - 3);

  rec.infrared.frame_interval = sc.dt;
  rec.start_time = config.warmup_steps * sc.dt;
  std::vector<sim::FireSnapshot> history;
  const int total = config.warmup_steps + config.frames;
  for (int step = 0; step < total; ++step) {
    if (step > 0) world = sim::step_fire(world, sc);
    history.push_back(sim::snapshot(world, sc));
    if (step >= config.warmup_steps) {
      rec.infrared.frames.push_back(sim::render_infrared(world, sc));
      rec.masks.push_back(world.fire_mask());
    }
  }
  rec.telemetry = sim::synth_telemetry(history, rec.sensor, world, config.telemetry, rec.seed);
  return rec;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "'");
}

std::vector<const ClipEntry*> DatasetManifest::split(Split s) const {
  std::vector<const ClipEntry*> out;
  for (const auto& c : clips)
    if (c.split == s) out.push_back(&c);
  return out;
}

std::array<int, 3> DatasetManifest::split_counts() const {
  std::array<int, 3> n{0, 0, 0};
  for (const auto& c : clips) ++n[static_cast<std::size_t>(c.split)];
  return n;
}

std::array<int, 3> split_sizes(int clips) {
  if (clips < 10) {
    throw UsageError("dataset: an 8:1:1 split is infeasible for " + std::to_string(clips) +
                     " clips (need >= 10)");
  }
  const int val = clips / 10, test = clips / 10;
  return {clips - val - test, val, test};
}

DatasetManifest write_dataset(std::span<const ClipRecord> clips, const DatasetConfig& config,
                              const std::filesystem::path& dir) {
  const auto sizes = split_sizes(static_cast<int>(clips.size()));
  ensure_dir(dir);
  DatasetManifest m;
  m.seed = config.seed;
  m.config = to_json(config);
  m.config_hash = config_hash(m.config);

  std::vector<int> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash_key(config.seed, 0x5b117));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Split> assignment(clips.size(), Split::Train);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto pos = static_cast<int>(k);
    assignment[static_cast<std::size_t>(order[k])] =
        pos < sizes[0] ? Split::Train : (pos < sizes[0] + sizes[1] ? Split::Val : Split::Test);
  }

  for (std::size_t k = 0; k < clips.size(); ++k) {
    const ClipRecord& c = clips[k];
    const std::filesystem::path sub = dir / c.id;
    ensure_dir(sub);
    ClipEntry e;
    e.id = c.id;
    e.split = assignment[k];
    e.seed = c.seed;
    e.frames = c.infrared.length();
    e.frame_interval = c.infrared.frame_interval;
    e.start_time = c.start_time;
    e.infrared_path = c.id + "/infrared.fsrt";
    e.masks_path = c.id + "/masks.fsrt";
    e.land_veg_path = c.id + "/land_veg.fsrt";
    e.telemetry_path = c.id + "/telemetry.csv";
    e.ignition_seeds = c.ignition_seeds;
    e.sensor = c.sensor;
    fsrt::write_clip(dir / e.infrared_path, c.infrared);
    fsrt::write_masks(dir / e.masks_path, c.masks, c.infrared.frames.front().ground_sample_distance());
    fsrt::write_raster(dir / e.land_veg_path, c.land_veg);
    sim::write_telemetry_csv(dir / e.telemetry_path, c.telemetry);
    m.clips.push_back(std::move(e));
  }

  const std::filesystem::path mpath = dir / "manifest.json";
  std::ofstream f(mpath, std::ios::trunc);
  if (!f) throw DataError("cannot write " + mpath.string());
  f << to_json(m).dump(2) << '\n';
  if (!f) throw DataError("write failed: " + mpath.string());
  return m;
}

json to_json(const DatasetManifest& m) {
  json j;
  j["format"] = "firediff-dataset";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["config"] = m.config;
  const auto n = m.split_counts();
  j["split_counts"] = {{"train", n[0]}, {"val", n[1]}, {"test", n[2]}};
  j["clips"] = json::array();
  for (const auto& c : m.clips) {
    json seeds = json::array();
    for (const auto& s : c.ignition_seeds) seeds.push_back({s.x, s.y, s.t0});
    j["clips"].push_back({{"id", c.id},
                          {"split", to_string(c.split)},
                          {"seed", c.seed},
                          {"frames", c.frames},
                          {"frame_interval", c.frame_interval},
                          {"start_time", c.start_time},
                          {"infrared", c.infrared_path},
                          {"masks", c.masks_path},
                          {"land_veg", c.land_veg_path},
                          {"telemetry", c.telemetry_path},
                          {"ignition_seeds", seeds},
                          {"sensor", {c.sensor.x, c.sensor.y}}});
  }
  return j;
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path mpath = dir / "manifest.json";
  std::ifstream f(mpath);
  if (!f) throw DataError("dataset manifest not found: " + mpath.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config");
    for (const auto& c : j.at("clips")) {
      ClipEntry e;
      e.id = c.at("id").get<std::string>();
      e.split = split_from_string(c.at("split").get<std::string>());
      e.seed = c.at("seed").get<std::uint64_t>();
      e.frames = c.at("frames").get<int>();
      e.frame_interval = c.at("frame_interval").get<double>();
      e.start_time = c.at("start_time").get<double>();
      e.infrared_path = c.at("infrared").get<std::string>();
      e.masks_path = c.at("masks").get<std::string>();
      e.land_veg_path = c.at("land_veg").get<std::string>();
      e.telemetry_path = c.at("telemetry").get<std::string>();
      for (const auto& s : c.at("ignition_seeds")) {
        e.ignition_seeds.push_back({s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()});
      }
      e.sensor = {c.at("sensor").at(0).get<int>(), c.at("sensor").at(1).get<int>()};
      m.clips.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
  }
  return m;
}

LoadedClip load_clip(const std::filesystem::path& dir, const ClipEntry& entry) {
  LoadedClip c;
  c.entry = entry;
  c.infrared = fsrt::read_clip(dir / entry.infrared_path, entry.frame_interval);
  c.masks = fsrt::read_masks(dir / entry.masks_path);
  c.land_veg = fsrt::read_raster(dir / entry.land_veg_path);
  c.telemetry = sim::read_telemetry_csv(dir / entry.telemetry_path, entry.sensor);
  if (c.infrared.length() != entry.frames || static_cast<int>(c.masks.size()) != entry.frames) {
    throw DataError("clip " + entry.id + ": frame count does not match manifest");
  }
  return c;
}

}  // namespace firediff::data
