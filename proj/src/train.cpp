#include "firediff/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>
#include <utility>

#include "firediff/error.hpp"
#include "firediff/rng.hpp"

namespace firediff::nn {

void TrainConfig::validate() const {
  arch.validate();
  if (epochs < 0 || steps_per_epoch < 1 || batch < 1) {
    throw UsageError("train: epochs >= 0, steps_per_epoch >= 1 and batch >= 1 required");
  }
  if (!(adam.lr >= 0.0)) throw UsageError("train: lr must be >= 0");
  if (modality_dropout < 0.0 || modality_dropout > 1.0) throw UsageError("train: modality_dropout in [0,1]");
  if (val_samples < 1) throw UsageError("train: val_samples must be >= 1");
  ddpm::linear_schedule(diffusion_steps, beta_min, beta_max);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"architecture", to_json(c.arch)},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"batch", c.batch},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps_opt", c.adam.eps},
          {"seed", c.seed},
          {"diffusion_steps", c.diffusion_steps},
          {"beta_min", c.beta_min},
          {"beta_max", c.beta_max},
          {"modality", to_string(c.modality)},
          {"target", to_string(c.target)},
          {"drop_em", c.drop_em},
          {"drop_lv", c.drop_lv},
          {"modality_dropout", c.modality_dropout},
          {"val_samples", c.val_samples}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("architecture")) c.arch = denoiser_config_from_json(j["architecture"]);
  c.epochs = j.value("epochs", c.epochs);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.batch = j.value("batch", c.batch);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps_opt", c.adam.eps);
  c.seed = j.value("seed", c.seed);
  c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
  c.beta_min = j.value("beta_min", c.beta_min);
  c.beta_max = j.value("beta_max", c.beta_max);
  if (j.contains("modality")) c.modality = modality_from_string(j["modality"].get<std::string>());
  if (j.contains("target")) c.target = target_from_string(j["target"].get<std::string>());
  c.drop_em = j.value("drop_em", c.drop_em);
  c.drop_lv = j.value("drop_lv", c.drop_lv);
  c.modality_dropout = j.value("modality_dropout", c.modality_dropout);
  c.val_samples = j.value("val_samples", c.val_samples);
  return c;
}

namespace {

struct Sample {
  std::size_t clip = 0;
  int start = 0;
  int t = 0;
  Tensor<float> eps;
  bool drop_em = false;
  bool drop_lv = false;
};

int window_length(const TrainConfig& c) { return c.arch.frames_in + c.arch.frames_out; }

Sample draw_sample(std::span<const data::LoadedClip> clips, const TrainConfig& c,
                   const ddpm::NoiseSchedule& s, Rng& rng, bool random_drop) {
  Sample out;
  out.clip = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(clips.size()) - 1));
  const auto& clip = clips[out.clip];
  out.start = uniform_int(rng, 0, clip.entry.frames - window_length(c));
  const Tensor<float> like({c.arch.frames_out, clip.infrared.height(), clip.infrared.width()});
  ddpm::draw_noise(s, rng, like, out.t, out.eps);
  const double u_em = uniform01(rng), u_lv = uniform01(rng);
  out.drop_em = c.drop_em || (random_drop && u_em < c.modality_dropout);
  out.drop_lv = c.drop_lv || (random_drop && u_lv < c.modality_dropout);
  return out;
}

/// Assembles a batch; the targets are the noised frames and the eps tensor is returned in `eps`.
DenoiserBatch<float> assemble(std::span<const data::LoadedClip> clips, std::span<const Sample> samples,
                              const TrainConfig& c, const TelemetryStats& stats,
                              const ddpm::NoiseSchedule& s, Tensor<float>& eps) {
  const int n = static_cast<int>(samples.size());
  const auto& first = clips[samples[0].clip];
  const int h = first.infrared.height(), w = first.infrared.width();
  const int L = c.arch.frames_in, Lp = c.arch.frames_out, C = c.arch.lv_channels;
  DenoiserBatch<float> b;
  b.x_t = Tensor<float>({n, Lp, h, w});
  b.observed = Tensor<float>({n, L, h, w});
  b.land_veg = Tensor<float>({n, C, h, w});
  b.telemetry = Tensor<float>({n, L, c.arch.em_channels});
  eps = Tensor<float>({n, Lp, h, w});
  for (int i = 0; i < n; ++i) {
    const Sample& sm = samples[static_cast<std::size_t>(i)];
    const auto& clip = clips[sm.clip];
    if (clip.infrared.height() != h || clip.infrared.width() != w) {
      throw DataError("train: clips in one batch must share spatial dims");
    }
    const auto obs = frame_indices(sm.start, L, 1);
    const auto tgt = frame_indices(sm.start + L, Lp, 1);
    const auto cond = make_condition(clip, c.modality, obs, stats, sm.drop_em, sm.drop_lv);
    const Tensor<float> x0 = encode_target(frames_tensor(clip, c.modality, tgt), cond.observed, c.target);
    const Tensor<float> xt = ddpm::forward_sample(x0, sm.t, sm.eps, s);
    const auto put = [i](Tensor<float>& dst, const Tensor<float>& src) {
      std::copy(src.values().begin(), src.values().end(), dst.data() + static_cast<std::size_t>(i) * src.size());
    };
    put(b.x_t, xt);
    put(b.observed, cond.observed);
    put(b.land_veg, cond.land_veg);
    put(b.telemetry, cond.telemetry);
    put(eps, sm.eps);
    b.t.push_back(sm.t);
    b.drop_em.push_back(sm.drop_em);
    b.drop_lv.push_back(sm.drop_lv);
  }
  return b;
}

/// Mean and variance of per-frame spatial means of x0 over every training window.
std::pair<double, double> x0_mean_stats(std::span<const data::LoadedClip> clips, const TrainConfig& c) {
  double sum = 0.0, sq = 0.0;
  long long count = 0;
  for (const auto& clip : clips) {
    for (int start = 0; start + window_length(c) <= clip.entry.frames; ++start) {
      const auto obs = frame_indices(start, c.arch.frames_in, 1);
      const auto tgt = frame_indices(start + c.arch.frames_in, c.arch.frames_out, 1);
      const Tensor<float> x0 =
          encode_target(frames_tensor(clip, c.modality, tgt), frames_tensor(clip, c.modality, obs), c.target);
      const std::size_t plane = x0.size() / static_cast<std::size_t>(c.arch.frames_out);
      for (int k = 0; k < c.arch.frames_out; ++k) {
        double acc = 0.0;
        for (std::size_t q = 0; q < plane; ++q) acc += x0[static_cast<std::size_t>(k) * plane + q];
        const double m = acc / static_cast<double>(plane);
        sum += m;
        sq += m * m;
        ++count;
      }
    }
  }
  if (count == 0) throw DataError("train: no training window fits " + std::to_string(window_length(c)) + " frames");
  const double mean = sum / static_cast<double>(count);
  return {mean, std::max(sq / static_cast<double>(count) - mean * mean, 1e-6)};
}

std::vector<Sample> validation_draws(std::span<const data::LoadedClip> val, const TrainConfig& c,
                                     const ddpm::NoiseSchedule& s) {
  Rng rng(hash_key(c.seed, 0x7a11d));
  std::vector<Sample> out;
  for (int k = 0; k < c.val_samples; ++k) out.push_back(draw_sample(val, c, s, rng, false));
  return out;
}

double evaluate(Denoiser<float>& net, std::span<const data::LoadedClip> val,
                std::span<const Sample> draws, const TrainConfig& c, const TelemetryStats& stats,
                const ddpm::NoiseSchedule& s) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < draws.size(); k += static_cast<std::size_t>(c.batch)) {
    const auto chunk = draws.subspan(k, std::min<std::size_t>(c.batch, draws.size() - k));
    Tensor<float> eps;
    const auto batch = assemble(val, chunk, c, stats, s, eps);
    const Tensor<float> pred = net.predict(batch);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = static_cast<double>(pred[i]) - eps[i];
      acc += d * d;
    }
    count += pred.size();
  }
  return acc / static_cast<double>(count);
}

void check_clips(std::span<const data::LoadedClip> clips, const TrainConfig& c, const char* split) {
  if (clips.empty()) throw DataError(std::string("train: empty ") + split + " split");
  for (const auto& clip : clips) {
    if (clip.entry.frames < window_length(c)) {
      throw DataError("train: clip " + clip.entry.id + " has " + std::to_string(clip.entry.frames) +
                      " frames, fewer than frames_in + frames_out = " + std::to_string(window_length(c)));
    }
  }
}

}  // namespace

double validation_loss(ModelArtifact& model, std::span<const data::LoadedClip> val_clips,
                       const TrainConfig& config) {
  check_clips(val_clips, config, "validation");
  const auto s = model.schedule();
  const auto draws = validation_draws(val_clips, config, s);
  return evaluate(model.net, val_clips, draws, config, model.telemetry, s);
}

TrainResult train(std::span<const data::LoadedClip> train_clips,
                  std::span<const data::LoadedClip> val_clips, const TrainConfig& config,
                  const std::function<void(const LossPoint&)>& progress) {
  config.validate();
  check_clips(train_clips, config, "training");
  check_clips(val_clips, config, "validation");
  TrainConfig c = config;
  c.arch.lv_channels = sim::kLandVegChannels;
  c.arch.em_channels = sim::kTelemetryChannels;

  TrainResult r;
  ModelArtifact& m = r.model;
  m.arch = c.arch;
  m.diffusion_steps = c.diffusion_steps;
  m.beta_min = c.beta_min;
  m.beta_max = c.beta_max;
  m.modality = c.modality;
  m.target = c.target;
  m.drop_em = c.drop_em;
  m.drop_lv = c.drop_lv;
  m.seed = c.seed;
  m.telemetry = telemetry_stats(train_clips);
  m.net = Denoiser<float>(c.arch, hash_key(c.seed, 0x1417));
  const auto s = m.schedule();
  std::tie(m.x0_mean, m.x0_mean_var) = x0_mean_stats(train_clips, c);
  m.bind_mean_prior();

  const auto val_draws = validation_draws(val_clips, c, s);
  r.initial_val_loss = evaluate(m.net, val_clips, val_draws, c, m.telemetry, s);
  double best = r.initial_val_loss;
  std::vector<Parameter<float>> best_params = m.net.params();

  Denoiser<float> net = m.net;
  AdamState opt;
  Rng rng(hash_key(c.seed, 0x7a19));
  long long step = 0;
  for (int epoch = 1; epoch <= c.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int k = 0; k < c.steps_per_epoch; ++k) {
      std::vector<Sample> samples;
      for (int i = 0; i < c.batch; ++i) samples.push_back(draw_sample(train_clips, c, s, rng, true));
      Tensor<float> eps;
      const auto batch = assemble(train_clips, samples, c, m.telemetry, s, eps);
      net.zero_grad();
      Graph<float> g;
      const Var loss = g.mse(net.forward(g, batch), eps);
      const double lv = g.value(loss)[0];
      ++step;
      if (!std::isfinite(lv)) {
        throw NumericError("train: non-finite loss at step " + std::to_string(step));
      }
      g.backward(loss);
      adam_step<float>(net.params(), opt, c.adam);
      epoch_loss += lv;
    }
    LossPoint pt;
    pt.epoch = epoch;
    pt.step = step;
    pt.train_loss = epoch_loss / c.steps_per_epoch;
    pt.val_loss = evaluate(net, val_clips, val_draws, c, m.telemetry, s);
    if (!std::isfinite(pt.val_loss)) {
      throw NumericError("train: non-finite validation loss after step " + std::to_string(step));
    }
    r.curve.push_back(pt);
    if (progress) progress(pt);
    if (pt.val_loss < best) {
      best = pt.val_loss;
      r.best_epoch = epoch;
      best_params = net.params();
    }
  }
  m.net.load_values(best_params);
  m.training = to_json(c);
  m.training["initial_val_loss"] = r.initial_val_loss;
  m.training["best_val_loss"] = best;
  m.training["best_epoch"] = r.best_epoch;
  m.training["steps"] = step;
  return r;
}

TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& config,
                  const std::function<void(const LossPoint&)>& progress) {
  const auto manifest = data::read_manifest(dataset_dir);
  std::vector<data::LoadedClip> tr, va;
  for (const auto* e : manifest.split(data::Split::Train)) tr.push_back(data::load_clip(dataset_dir, *e));
  for (const auto* e : manifest.split(data::Split::Val)) va.push_back(data::load_clip(dataset_dir, *e));
  TrainResult r = train(tr, va, config, progress);
  r.model.training["dataset_config_hash"] = manifest.config_hash;
  return r;
}

void write_loss_curve(const std::filesystem::path& path, std::span<const LossPoint> curve) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << "epoch,step,train_loss,val_loss\n";
  f.precision(17);
  for (const auto& p : curve) f << p.epoch << ',' << p.step << ',' << p.train_loss << ',' << p.val_loss << '\n';
  if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace firediff::nn
