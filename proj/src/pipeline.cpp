#include "firediff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "firediff/conditioning.hpp"
#include "firediff/ddpm.hpp"
#include "firediff/error.hpp"
#include "firediff/fsrt.hpp"
#include "firediff/parallel.hpp"
#include "firediff/physics.hpp"
#include "firediff/rng.hpp"
#include "firediff/sim.hpp"

namespace firediff::pipeline {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSampleStream = 0xf0ca57;

std::string stage_message(const char* stage, const std::string& clip, const char* what) {
  return "stage " + std::string(stage) + " (clip " + clip + "): " + what;
}

/// Runs one named stage, records its wall time and prefixes errors with the
/// stage name while keeping their type.
template <typename F>
auto run_stage(const char* stage, ForecastResult& r, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Timer {
    const char* stage;
    ForecastResult& r;
    std::chrono::steady_clock::time_point t0;
    ~Timer() {
      r.timings.push_back(
          {stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    }
  } timer{stage, r, t0};
  try {
    return f();
  } catch (const UsageError& e) {
    throw UsageError(stage_message(stage, r.clip_id, e.what()));
  } catch (const DataError& e) {
    throw DataError(stage_message(stage, r.clip_id, e.what()));
  } catch (const NumericError& e) {
    throw NumericError(stage_message(stage, r.clip_id, e.what()));
  } catch (const std::invalid_argument& e) {
    throw UsageError(stage_message(stage, r.clip_id, e.what()));
  }
}

ForecastResult begin(Predictor p, const data::LoadedClip& clip, const ForecastRequest& req) {
  req.validate();
  if (req.start < 0) throw UsageError("forecast: start must be >= 0, got " + std::to_string(req.start));
  ForecastResult r;
  r.clip_id = clip.entry.id;
  r.predictor = p;
  r.request = req;
  r.request.clip_id = clip.entry.id;
  r.observed_frames = nn::frame_indices(req.start, req.observed, req.stride);
  r.target_frames = nn::frame_indices(req.start + req.observed * req.stride, req.horizon, req.stride);
  const int last = r.target_frames.back();
  if (last >= clip.entry.frames || clip.infrared.length() != clip.entry.frames) {
    throw DataError("forecast: stride " + std::to_string(req.stride) + " unavailable for clip " +
                    clip.entry.id + ": needs source frame " + std::to_string(last) + " but the clip has " +
                    std::to_string(clip.entry.frames) + " frames");
  }
  for (int f : r.observed_frames) r.observed_times.push_back(clip.entry.frame_time(f));
  for (int f : r.target_frames) r.target_times.push_back(clip.entry.frame_time(f));
  r.provenance["version"] = nn::kVersion;
  r.provenance["predictor"] = to_string(p);
  return r;
}

ClipTensor observed_clip(const data::LoadedClip& clip, const ForecastResult& r) {
  ClipTensor c;
  c.frame_interval = clip.infrared.frame_interval * r.request.stride;
  for (int f : r.observed_frames) c.frames.push_back(clip.infrared.frames[static_cast<std::size_t>(f)]);
  return c;
}

std::vector<BinaryMask> empty_masks(int count, int w, int h) {
  return std::vector<BinaryMask>(static_cast<std::size_t>(count), BinaryMask(w, h));
}

/// Stage 2. A failure here leaves the infrared output untouched and yields
/// empty masks plus a warning.
seg::SegmentResult segment_stage(const PredictContext& ctx, ForecastResult& r, const ClipTensor& frames,
                                 const seg::PromptSet& prompts) {
  const auto t0 = std::chrono::steady_clock::now();
  seg::SegmentResult s;
  try {
    s = seg::segment_clip(frames, prompts, ctx.segment);
  } catch (const std::exception& e) {
    s.masks = empty_masks(frames.length(), frames.width(), frames.height());
    s.degenerate = true;
    s.warnings.push_back(std::string("segmentation failed: ") + e.what());
  }
  r.timings.push_back({"segment", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  for (auto& w : s.warnings) r.warnings.push_back(w);
  return s;
}

json segment_provenance(const PredictContext& ctx, const seg::PromptSet& prompts) {
  json pts = json::array();
  for (const auto& p : prompts.points) pts.push_back({p.x, p.y, p.positive});
  return {{"threshold", ctx.segment.threshold},
          {"closing_radius", ctx.segment.closing_radius},
          {"prompt_source", "manifest ignition seeds"},
          {"anchor_frame", prompts.anchor_frame},
          {"prompts", pts}};
}

/// Samples L' frames in model range, chaining blocks of frames_out when the
/// horizon is longer. Each block conditions on the latest L frames, generated
/// ones included; telemetry after the last observation repeats its final row.
std::vector<std::vector<float>> sample_frames(const PredictContext& ctx, const data::LoadedClip& clip,
                                              ForecastResult& r, nn::Modality modality) {
  if (!ctx.model) throw UsageError("forecast: a model artifact is required for predictor " + to_string(r.predictor));
  nn::ModelArtifact model = *ctx.model;
  if (model.modality != modality) {
    throw UsageError("forecast: model generates " + nn::to_string(model.modality) + " but predictor " +
                     to_string(r.predictor) + " needs " + nn::to_string(modality));
  }
  const auto& arch = model.arch;
  if (r.request.observed != arch.frames_in) {
    throw UsageError("forecast: model observes " + std::to_string(arch.frames_in) + " frames, request has " +
                     std::to_string(r.request.observed));
  }
  const int w = clip.infrared.width(), h = clip.infrared.height();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  const bool drop_em = r.request.drop_em || model.drop_em;
  const bool drop_lv = r.request.drop_lv || model.drop_lv;

  std::vector<std::vector<float>> frames;
  std::vector<double> times;
  run_stage("condition", r, [&] {
    const Tensor<float> obs = nn::frames_tensor(clip, modality, r.observed_frames);
    for (int k = 0; k < r.request.observed; ++k) {
      const auto* p = obs.data() + static_cast<std::size_t>(k) * plane;
      frames.emplace_back(p, p + plane);
      times.push_back(r.observed_times[static_cast<std::size_t>(k)]);
    }
  });
  const double last_observed = times.back();
  const Tensor<float> land_veg = nn::land_veg_tensor(clip.land_veg);
  const auto schedule = model.schedule();
  auto eps = model.net.eps_model();
  const std::uint64_t clip_key = std::stoull(fnv1a_hex(clip.entry.id), nullptr, 16);

  int block = 0;
  while (static_cast<int>(frames.size()) - r.request.observed < r.request.horizon) {
    ddpm::ConditionBundle<float> cond;
    run_stage("condition", r, [&] {
      const std::size_t first = frames.size() - static_cast<std::size_t>(arch.frames_in);
      std::vector<float> obs;
      obs.reserve(plane * static_cast<std::size_t>(arch.frames_in));
      std::vector<double> t;
      for (std::size_t k = first; k < frames.size(); ++k) {
        obs.insert(obs.end(), frames[k].begin(), frames[k].end());
        t.push_back(std::min(times[k], last_observed));
      }
      cond.observed = Tensor<float>({arch.frames_in, h, w}, std::move(obs));
      cond.land_veg = land_veg;
      cond.telemetry = nn::telemetry_tensor(clip.telemetry, t, model.telemetry);
      cond.drop_em = drop_em;
      cond.drop_lv = drop_lv;
    });
    Rng rng(hash_key(r.request.seed, kSampleStream, clip_key, static_cast<std::uint64_t>(block)));
    const Tensor<float> x0 = run_stage("sample", r, [&] {
      return nn::decode_target(ddpm::ancestral_sample(cond, eps, schedule, rng, arch.frames_out, model.clamp_x0),
                               cond.observed, model.target);
    });
    for (int k = 0; k < arch.frames_out; ++k) {
      const auto* p = x0.data() + static_cast<std::size_t>(k) * plane;
      std::vector<float> f(p, p + plane);
      if (modality == nn::Modality::Mask) {
        for (float& v : f) v = v > 0.0f ? 1.0f : -1.0f;
      }
      frames.push_back(std::move(f));
      const std::size_t gen = frames.size() - static_cast<std::size_t>(r.request.observed);
      times.push_back(gen <= r.target_times.size() ? r.target_times[gen - 1] : times.back());
    }
    ++block;
  }
  frames.erase(frames.begin(), frames.begin() + r.request.observed);
  frames.resize(static_cast<std::size_t>(r.request.horizon));

  r.provenance["model_digest"] = ctx.model_digest;
  r.provenance["model"] = {{"version", nn::kVersion},
                           {"modality", nn::to_string(model.modality)},
                           {"target", nn::to_string(model.target)},
                           {"diffusion_steps", model.diffusion_steps},
                           {"trained_drop_em", model.drop_em},
                           {"trained_drop_lv", model.drop_lv},
                           {"seed", model.seed}};
  r.provenance["blocks"] = block;
  r.provenance["drop_em"] = drop_em;
  r.provenance["drop_lv"] = drop_lv;
  return frames;
}

/// Predicted masks rendered through the infrared pipeline without sensor noise.
/// A pixel burns from its first appearance for its burn duration, then cools
/// like a simulated scar.
ClipTensor render_masks(const PredictContext& ctx, const data::LoadedClip& clip, const ForecastResult& r,
                        std::span<const BinaryMask> observed, std::span<const BinaryMask> predicted) {
  sim::WorldState world = sim::world_from_land_veg(clip.land_veg);
  world.seed = clip.entry.seed;
  sim::SimConfig cfg = ctx.sim;
  cfg.sensor_noise = 0.0;
  const std::size_t n = world.fire.size();
  std::vector<double> appear(n, -1.0);
  const auto mark = [&](const BinaryMask& m, double t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (appear[i] < 0.0 && m.bits()[i]) appear[i] = t;
    }
  };
  for (std::size_t k = 0; k < observed.size(); ++k) mark(observed[k], r.observed_times[k]);
  ClipTensor out;
  out.frame_interval = clip.infrared.frame_interval * r.request.stride;
  const double dt = clip.entry.frame_interval;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const double now = r.target_times[k];
    mark(predicted[k], now);
    world.step = r.target_frames[k];
    for (std::size_t i = 0; i < n; ++i) {
      if (!predicted[k].bits()[i]) {
        world.fire[i] = sim::FireState::Unburned;
        world.burned_at[i] = -1;
        continue;
      }
      const double out_time = appear[i] + sim::burn_duration(world, i, cfg);
      if (now < out_time) {
        world.fire[i] = sim::FireState::Burning;
        world.burned_at[i] = -1;
      } else {
        world.fire[i] = sim::FireState::Burned;
        world.burned_at[i] = static_cast<int>(std::floor((out_time - clip.entry.start_time) / dt));
      }
    }
    out.frames.push_back(sim::render_infrared(world, cfg));
  }
  return out;
}

ClipTensor to_infrared(const std::vector<std::vector<float>>& frames, const data::LoadedClip& clip, int stride) {
  ClipTensor out;
  out.frame_interval = clip.infrared.frame_interval * stride;
  const int w = clip.infrared.width(), h = clip.infrared.height();
  const double gsd = clip.infrared.frames.front().ground_sample_distance();
  for (const auto& f : frames) {
    RasterGrid g(w, h, gsd, 1);
    for (std::size_t i = 0; i < f.size(); ++i) g.values()[i] = std::clamp(nn::from_model_range(f[i]), 0.0f, 1.0f);
    out.frames.push_back(std::move(g));
  }
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << s;
  if (!out) throw DataError("write failed: " + p.string());
}

}  // namespace

std::string to_string(Predictor p) {
  switch (p) {
    case Predictor::FireDiff: return "firediff";
    case Predictor::DirectMask: return "direct-mask";
    case Predictor::Persistence: return "persistence";
    case Predictor::Physics: return "physics";
    case Predictor::GroundTruth: return "ground-truth";
  }
  return "unknown";
}

Predictor predictor_from_string(const std::string& s) {
  if (s == "firediff") return Predictor::FireDiff;
  if (s == "direct-mask") return Predictor::DirectMask;
  if (s == "persistence") return Predictor::Persistence;
  if (s == "physics") return Predictor::Physics;
  throw UsageError("unknown predictor '" + s + "' (expected firediff, direct-mask, persistence or physics)");
}

void ForecastRequest::validate() const {
  if (std::find(std::begin(kAllowedStrides), std::end(kAllowedStrides), stride) == std::end(kAllowedStrides)) {
    throw UsageError("forecast: stride " + std::to_string(stride) + " not in {1, 30, 60}");
  }
  if (observed < 1) throw UsageError("forecast: observed frame count must be >= 1, got " + std::to_string(observed));
  if (horizon < 1) throw UsageError("forecast: horizon must be >= 1, got " + std::to_string(horizon));
}

json ForecastRequest::to_json() const {
  return {{"clip_id", clip_id}, {"observed", observed}, {"horizon", horizon}, {"stride", stride},
          {"start", start},     {"drop_em", drop_em},   {"drop_lv", drop_lv}, {"seed", seed}};
}

json ForecastResult::sidecar(bool include_timings) const {
  json j;
  j["clip_id"] = clip_id;
  j["predictor"] = to_string(predictor);
  j["request"] = request.to_json();
  j["seed"] = request.seed;
  j["stride"] = request.stride;
  j["horizon"] = request.horizon;
  j["observed_frames"] = observed_frames;
  j["target_frames"] = target_frames;
  j["observed_times"] = observed_times;
  j["target_times"] = target_times;
  j["infrared"] = infrared ? json("infrared.fsrt") : json(nullptr);
  j["infrared_synthetic"] = infrared_synthetic;
  j["masks"] = "masks.fsrt";
  j["segmentation_degenerate"] = segmentation_degenerate;
  j["warnings"] = warnings;
  j["provenance"] = provenance;
  if (include_timings) {
    json t = json::array();
    for (const auto& s : timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
    j["timings"] = t;
  }
  return j;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PredictContext make_context(const std::filesystem::path& dataset_dir,
                            const std::optional<std::filesystem::path>& model_path) {
  PredictContext ctx;
  ctx.dataset_dir = dataset_dir;
  ctx.manifest = data::read_manifest(dataset_dir);
  ctx.sim = data::dataset_config_from_json(ctx.manifest.config).sim;
  if (model_path) {
    if (!std::filesystem::exists(*model_path)) throw DataError("model artifact not found: " + model_path->string());
    ctx.model = nn::load_model(*model_path);
    const auto bytes = read_bytes(*model_path);
    ctx.model_digest = fnv1a_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  return ctx;
}

seg::PromptSet manifest_prompts(const data::ClipEntry& entry, double time, int anchor) {
  seg::PromptSet p;
  p.anchor_frame = anchor;
  for (const auto& s : entry.ignition_seeds) {
    if (s.t0 * entry.frame_interval <= time) p.points.push_back({s.x, s.y, true});
  }
  if (p.points.empty()) {
    for (const auto& s : entry.ignition_seeds) p.points.push_back({s.x, s.y, true});
  }
  return p;
}

ForecastResult firediff_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                                const ForecastRequest& request) {
  ForecastResult r = begin(Predictor::FireDiff, clip, request);
  const auto frames = sample_frames(ctx, clip, r, nn::Modality::Infrared);
  r.infrared = to_infrared(frames, clip, request.stride);
  const auto prompts = manifest_prompts(clip.entry, r.target_times.front(), 0);
  auto s = segment_stage(ctx, r, *r.infrared, prompts);
  r.masks = std::move(s.masks);
  r.segmentation_degenerate = s.degenerate;
  r.provenance["segmenter"] = segment_provenance(ctx, prompts);
  return r;
}

ForecastResult direct_mask_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                                   const ForecastRequest& request) {
  ForecastResult r = begin(Predictor::DirectMask, clip, request);
  const auto frames = sample_frames(ctx, clip, r, nn::Modality::Mask);
  const int w = clip.infrared.width(), h = clip.infrared.height();
  for (const auto& f : frames) {
    BinaryMask m(w, h);
    for (std::size_t i = 0; i < f.size(); ++i) m.bits()[i] = f[i] > 0.0f;
    r.masks.push_back(std::move(m));
  }
  return r;
}

ForecastResult persistence_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                                   const ForecastRequest& request) {
  ForecastResult r = begin(Predictor::Persistence, clip, request);
  const ClipTensor obs = observed_clip(clip, r);
  const int anchor = obs.length() - 1;
  const auto prompts = manifest_prompts(clip.entry, r.observed_times.back(), anchor);
  auto s = segment_stage(ctx, r, obs, prompts);
  r.segmentation_degenerate = s.degenerate;
  ClipTensor out;
  out.frame_interval = obs.frame_interval;
  for (int k = 0; k < request.horizon; ++k) {
    out.frames.push_back(obs.frames.back());
    r.masks.push_back(s.masks.back());
  }
  r.infrared = std::move(out);
  r.provenance["segmenter"] = segment_provenance(ctx, prompts);
  return r;
}

ForecastResult physics_predict(const PredictContext& ctx, const data::LoadedClip& clip,
                               const ForecastRequest& request) {
  ForecastResult r = begin(Predictor::Physics, clip, request);
  const ClipTensor obs = observed_clip(clip, r);
  const auto prompts = manifest_prompts(clip.entry, r.observed_times.back(), obs.length() - 1);
  auto s = segment_stage(ctx, r, obs, prompts);
  r.segmentation_degenerate = s.degenerate;
  const sim::WorldState world = sim::world_from_land_veg(clip.land_veg);
  const auto fc = run_stage("physics", r, [&] {
    return sim::physics_forecast(s.masks, obs.frame_interval, world, request.horizon, ctx.sim);
  });
  if (fc.fallback) r.warnings.push_back("physics: " + fc.warning);
  r.masks = fc.masks;
  r.infrared = run_stage("render", r, [&] { return render_masks(ctx, clip, r, s.masks, r.masks); });
  r.infrared_synthetic = true;
  r.provenance["segmenter"] = segment_provenance(ctx, prompts);
  r.provenance["physics"] = {{"rate_scale", fc.fit.rate_scale},
                             {"kappa", fc.fit.kappa},
                             {"wind_direction", fc.fit.wind_direction},
                             {"replay_error", fc.fit.replay_error},
                             {"fallback", fc.fallback}};
  return r;
}

ForecastResult ground_truth_result(const data::LoadedClip& clip, const ForecastRequest& request) {
  ForecastResult r = begin(Predictor::GroundTruth, clip, request);
  ClipTensor ir;
  ir.frame_interval = clip.infrared.frame_interval * request.stride;
  for (int f : r.target_frames) {
    ir.frames.push_back(clip.infrared.frames[static_cast<std::size_t>(f)]);
    r.masks.push_back(clip.masks[static_cast<std::size_t>(f)]);
  }
  r.infrared = std::move(ir);
  return r;
}

ForecastResult predict(Predictor p, const PredictContext& ctx, const data::LoadedClip& clip,
                       const ForecastRequest& request) {
  switch (p) {
    case Predictor::FireDiff: return firediff_predict(ctx, clip, request);
    case Predictor::DirectMask: return direct_mask_predict(ctx, clip, request);
    case Predictor::Persistence: return persistence_predict(ctx, clip, request);
    case Predictor::Physics: return physics_predict(ctx, clip, request);
    case Predictor::GroundTruth: return ground_truth_result(clip, request);
  }
  throw UsageError("unknown predictor");
}

void write_result(const std::filesystem::path& dir, const ForecastResult& r, bool include_timings) {
  std::filesystem::create_directories(dir);
  if (r.infrared) fsrt::write_clip(dir / "infrared.fsrt", *r.infrared);
  const double gsd = r.infrared ? r.infrared->frames.front().ground_sample_distance() : 2.0;
  fsrt::write_masks(dir / "masks.fsrt", r.masks, gsd);
  write_text(dir / "result.json", r.sidecar(include_timings).dump(2) + "\n");
}

StoredResult read_result(const std::filesystem::path& dir) {
  StoredResult s;
  const auto path = dir / "result.json";
  if (!std::filesystem::exists(path)) throw DataError("missing " + path.string());
  try {
    std::ifstream in(path);
    s.sidecar = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed " + path.string() + ": " + e.what());
  }
  if (!s.sidecar.contains("masks") || !s.sidecar.contains("target_frames")) {
    throw DataError("result.json lacks masks/target_frames: " + path.string());
  }
  s.masks = fsrt::read_masks(dir / s.sidecar["masks"].get<std::string>());
  if (!s.sidecar["infrared"].is_null()) {
    const int stride = s.sidecar.value("stride", 1);
    s.infrared = fsrt::read_clip(dir / s.sidecar["infrared"].get<std::string>(), static_cast<double>(stride));
  }
  return s;
}

std::vector<std::string> run_predictions(const PredictContext& ctx, const RunOptions& options,
                                         const std::filesystem::path& out) {
  options.base.validate();
  const auto entries = ctx.manifest.split(options.split);
  if (entries.empty()) throw DataError("split " + data::to_string(options.split) + " is empty");
  std::vector<std::string> ids;
  for (const auto* e : entries) ids.push_back(e->id);
  std::filesystem::create_directories(out);

  parallel_for(entries.size(), options.jobs, [&](std::size_t i) {
    const auto clip = data::load_clip(ctx.dataset_dir, *entries[i]);
    ForecastRequest req = options.base;
    req.clip_id = clip.entry.id;
    write_result(out / clip.entry.id, predict(options.predictor, ctx, clip, req), options.include_timings);
  });

  json index = {{"predictor", to_string(options.predictor)},
                {"split", data::to_string(options.split)},
                {"request", options.base.to_json()},
                {"dataset_config_hash", ctx.manifest.config_hash},
                {"model_digest", ctx.model_digest},
                {"clips", ids}};
  write_text(out / "index.json", index.dump(2) + "\n");
  return ids;
}

}  // namespace firediff::pipeline
