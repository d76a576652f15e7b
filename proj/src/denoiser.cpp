#include "firediff/denoiser.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "firediff/error.hpp"
#include "firediff/rng.hpp"

namespace firediff::nn {

void DenoiserConfig::validate() const {
  if (frames_in < 1 || frames_out < 1) throw UsageError("denoiser: frame counts must be >= 1");
  if (lv_channels < 0 || em_channels < 1) throw UsageError("denoiser: bad conditioning channel counts");
  if (base_width < 1 || levels < 1 || blocks_per_level < 1 || groups < 1) {
    throw UsageError("denoiser: width, levels, blocks and groups must be >= 1");
  }
  if (time_dim < 2 || time_dim % 2 || em_hidden < 1) {
    throw UsageError("denoiser: time_dim must be even and >= 2, em_hidden >= 1");
  }
}

nlohmann::json to_json(const DenoiserConfig& c) {
  return {{"frames_in", c.frames_in},   {"frames_out", c.frames_out},
          {"lv_channels", c.lv_channels}, {"em_channels", c.em_channels},
          {"base_width", c.base_width}, {"levels", c.levels},
          {"blocks_per_level", c.blocks_per_level}, {"groups", c.groups},
          {"time_dim", c.time_dim},     {"em_hidden", c.em_hidden},
          {"zero_init_output", c.zero_init_output}, {"mean_head", c.mean_head}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.frames_in = j.value("frames_in", c.frames_in);
  c.frames_out = j.value("frames_out", c.frames_out);
  c.lv_channels = j.value("lv_channels", c.lv_channels);
  c.em_channels = j.value("em_channels", c.em_channels);
  c.base_width = j.value("base_width", c.base_width);
  c.levels = j.value("levels", c.levels);
  c.blocks_per_level = j.value("blocks_per_level", c.blocks_per_level);
  c.groups = j.value("groups", c.groups);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.em_hidden = j.value("em_hidden", c.em_hidden);
  c.zero_init_output = j.value("zero_init_output", c.zero_init_output);
  c.mean_head = j.value("mean_head", c.mean_head);
  c.validate();
  return c;
}

std::vector<double> time_embedding(int t, int dim) {
  const int half = dim / 2;
  std::vector<double> e(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double f = std::exp(-std::log(10000.0) * i / half);
    e[static_cast<std::size_t>(i)] = std::sin(t * f);
    e[static_cast<std::size_t>(half + i)] = std::cos(t * f);
  }
  return e;
}

template <typename T>
struct Denoiser<T>::Vars {
  std::map<std::string, Var> cache;
  Var time_act;
  Var em_act;

  Var get(Graph<T>& g, Denoiser& d, const std::string& key) {
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const Var r = g.param(d.param(key));
    cache.emplace(key, r);
    return r;
  }
};

template <typename T>
void Denoiser<T>::add_param(const std::string& name, std::vector<int> shape, double bound,
                            std::uint64_t seed, double fill) {
  Parameter<T> p;
  p.name = name;
  p.value = Tensor<T>(std::move(shape), static_cast<T>(fill));
  if (bound > 0.0) {
    const std::uint64_t ordinal = params_.size();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.value[i] = static_cast<T>(bound * (2.0 * counter_uniform(seed, ordinal, i) - 1.0));
    }
  }
  params_.push_back(std::move(p));
}

template <typename T>
void Denoiser<T>::add_conv(const std::string& name, int cin, int cout, int k, std::uint64_t seed,
                           bool zero) {
  const double bound = zero ? 0.0 : 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  add_param(name + ".w", {cout, cin, k, k}, bound, seed);
  add_param(name + ".b", {cout}, bound, seed);
}

template <typename T>
void Denoiser<T>::add_linear(const std::string& name, int in, int out, std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  add_param(name + ".w", {out, in}, bound, seed);
  add_param(name + ".b", {out}, bound, seed);
}

template <typename T>
void Denoiser<T>::add_block(const std::string& name, int cin, int cout, std::uint64_t seed) {
  add_conv(name + ".conv", cin, cout, 3, seed);
  add_param(name + ".gn.gamma", {cout}, 0.0, seed, 1.0);
  add_param(name + ".gn.beta", {cout}, 0.0, seed, 0.0);
  add_linear(name + ".film", config_.em_hidden, 2 * cout, seed);
  add_linear(name + ".time", 2 * config_.time_dim, cout, seed);
}

template <typename T>
Denoiser<T>::Denoiser(const DenoiserConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::uint64_t seed = hash_key(init_seed, 0xde9015e);
  add_linear("time.l1", c.time_dim, 2 * c.time_dim, seed);
  add_linear("time.l2", 2 * c.time_dim, 2 * c.time_dim, seed);
  add_linear("em.l1", c.em_channels, c.em_hidden, seed);
  add_linear("em.l2", c.em_hidden, c.em_hidden, seed);
  add_param("em_null", {c.em_hidden}, 0.0, seed);
  add_param("lv_null", {std::max(c.lv_channels, 1)}, 0.0, seed);
  int cin = c.frames_out + c.frames_in + c.lv_channels;
  for (int i = 0; i < c.levels; ++i) {
    for (int b = 0; b < c.blocks_per_level; ++b) {
      add_block("enc" + std::to_string(i) + "." + std::to_string(b), cin, c.width(i), seed);
      cin = c.width(i);
    }
  }
  for (int i = c.levels - 2; i >= 0; --i) {
    cin = c.width(i + 1) + c.width(i);
    for (int b = 0; b < c.blocks_per_level; ++b) {
      add_block("dec" + std::to_string(i) + "." + std::to_string(b), cin, c.width(i), seed);
      cin = c.width(i);
    }
  }
  add_conv("out", c.width(0), c.frames_out, 1, seed, c.zero_init_output);
  reindex();
}

template <typename T>
void Denoiser<T>::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
}

template <typename T>
Parameter<T>& Denoiser<T>::param(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("denoiser: no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
const Parameter<T>& Denoiser<T>::param(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("denoiser: no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
std::size_t Denoiser<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Denoiser<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Denoiser<T>::load_values(const std::vector<Parameter<T>>& values) {
  if (values.size() != params_.size()) throw DataError("denoiser: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].name != params_[i].name || !values[i].value.same_shape(params_[i].value)) {
      throw DataError("denoiser: parameter '" + values[i].name + "' does not match architecture");
    }
    params_[i].value = values[i].value;
  }
}

MeanPrior::MeanPrior(const ddpm::NoiseSchedule& s, double m, double v) : mean(m), var(v) {
  if (!(v > 0.0) || !std::isfinite(m)) throw UsageError("mean prior: variance must be > 0 and mean finite");
  alpha_bar.resize(static_cast<std::size_t>(s.T) + 1);
  for (int t = 0; t <= s.T; ++t) alpha_bar[static_cast<std::size_t>(t)] = s.alpha_bar_at(t);
}

double MeanPrior::eps_mean(double x_t_mean, int t, std::size_t pixels) const {
  const double ab = alpha_bar[static_cast<std::size_t>(t)];
  const double noise = 1.0 / static_cast<double>(pixels);
  return std::sqrt(1.0 - ab) * noise * (x_t_mean - std::sqrt(ab) * mean) / (ab * var + (1.0 - ab) * noise);
}

template <typename T>
Tensor<T> Denoiser<T>::frame_mean_eps(const DenoiserBatch<T>& b) const {
  const int n = b.size(), lp = config_.frames_out;
  const std::size_t hw = static_cast<std::size_t>(b.x_t.dim(2)) * b.x_t.dim(3);
  Tensor<T> out({n, lp});
  for (int i = 0; i < n; ++i) {
    const int t = b.t[static_cast<std::size_t>(i)];
    if (!prior_.covers(t)) {
      throw std::invalid_argument("denoiser: mean prior has no entry for step " + std::to_string(t));
    }
    for (int k = 0; k < lp; ++k) {
      const std::size_t off = (static_cast<std::size_t>(i) * lp + k) * hw;
      double acc = 0.0;
      for (std::size_t q = 0; q < hw; ++q) acc += b.x_t[off + q];
      out[static_cast<std::size_t>(i) * lp + k] = static_cast<T>(prior_.eps_mean(acc / static_cast<double>(hw), t, hw));
    }
  }
  return out;
}

template <typename T>
Var Denoiser<T>::block(Graph<T>& g, Vars& v, const std::string& name, Var x) {
  auto p = [&](const char* suffix) { return v.get(g, *this, name + suffix); };
  Var h = g.conv2d(x, p(".conv.w"), p(".conv.b"));
  const int c = g.value(h).dim(1);
  h = g.group_norm(h, p(".gn.gamma"), p(".gn.beta"), std::gcd(config_.groups, c));
  h = g.film(h, g.linear(v.em_act, p(".film.w"), p(".film.b")));
  h = g.add_channel(h, g.linear(v.time_act, p(".time.w"), p(".time.b")));
  return g.silu(h);
}

template <typename T>
Var Denoiser<T>::forward(Graph<T>& g, const DenoiserBatch<T>& b) {
  const auto& c = config_;
  const int n = b.size();
  if (b.x_t.rank() != 4 || b.x_t.dim(1) != c.frames_out) {
    throw std::invalid_argument("denoiser: x_t must be (N," + std::to_string(c.frames_out) +
                                ",H,W), got " + b.x_t.shape_string());
  }
  const int h = b.x_t.dim(2), w = b.x_t.dim(3);
  if (h % c.downsample_factor() || w % c.downsample_factor()) {
    throw std::invalid_argument("denoiser: spatial dims " + b.x_t.shape_string() +
                                " not divisible by " + std::to_string(c.downsample_factor()));
  }
  if (b.observed.shape() != std::vector<int>{n, c.frames_in, h, w}) {
    throw std::invalid_argument("denoiser: observed shape " + b.observed.shape_string());
  }
  if (b.land_veg.shape() != std::vector<int>{n, c.lv_channels, h, w}) {
    throw std::invalid_argument("denoiser: land_veg shape " + b.land_veg.shape_string());
  }
  if (b.telemetry.shape() != std::vector<int>{n, c.frames_in, c.em_channels}) {
    throw std::invalid_argument("denoiser: telemetry shape " + b.telemetry.shape_string());
  }
  if (b.t.size() != static_cast<std::size_t>(n) || b.drop_em.size() != b.t.size() ||
      b.drop_lv.size() != b.t.size()) {
    throw std::invalid_argument("denoiser: per-sample step/flag vectors must have N entries");
  }

  Vars v;
  auto p = [&](const std::string& key) { return v.get(g, *this, key); };

  Tensor<T> temb({n, c.time_dim});
  for (int i = 0; i < n; ++i) {
    const auto e = time_embedding(b.t[static_cast<std::size_t>(i)], c.time_dim);
    for (int k = 0; k < c.time_dim; ++k) temb[static_cast<std::size_t>(i) * c.time_dim + k] = static_cast<T>(e[k]);
  }
  Var tv = g.linear(g.constant(std::move(temb)), p("time.l1.w"), p("time.l1.b"));
  tv = g.linear(g.silu(tv), p("time.l2.w"), p("time.l2.b"));
  v.time_act = g.silu(tv);

  Var ev = g.constant(b.telemetry.reshaped({n * c.frames_in, c.em_channels}));
  ev = g.silu(g.linear(ev, p("em.l1.w"), p("em.l1.b")));
  ev = g.linear(ev, p("em.l2.w"), p("em.l2.b"));
  ev = g.mean_groups(ev, n);
  ev = g.select_rows(ev, p("em_null"), b.drop_em);
  v.em_act = g.silu(ev);

  std::vector<Var> inputs{g.constant(b.x_t), g.constant(b.observed)};
  if (c.lv_channels > 0) inputs.push_back(g.fill_channels(g.constant(b.land_veg), p("lv_null"), b.drop_lv));
  Var x = g.concat_channels(inputs);

  std::vector<Var> skips;
  for (int i = 0; i < c.levels; ++i) {
    for (int k = 0; k < c.blocks_per_level; ++k) {
      x = block(g, v, "enc" + std::to_string(i) + "." + std::to_string(k), x);
    }
    skips.push_back(x);
    if (i + 1 < c.levels) x = g.avg_pool2(x);
  }
  for (int i = c.levels - 2; i >= 0; --i) {
    x = g.upsample2(x);
    const Var parts[2] = {x, skips[static_cast<std::size_t>(i)]};
    x = g.concat_channels(parts);
    for (int k = 0; k < c.blocks_per_level; ++k) {
      x = block(g, v, "dec" + std::to_string(i) + "." + std::to_string(k), x);
    }
  }
  const Var y = g.conv2d(x, p("out.w"), p("out.b"));
  if (!c.mean_head) return y;
  return g.add_channel(g.center_channels(y), g.constant(frame_mean_eps(b)));
}

template <typename T>
Tensor<T> Denoiser<T>::predict(const DenoiserBatch<T>& batch) {
  Graph<T> g(false);
  const Var out = forward(g, batch);
  Tensor<T> y = g.value(out);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(static_cast<double>(y[i]))) {
      throw NumericError("denoiser: non-finite activation in output layer 'out'");
    }
  }
  return y;
}

template <typename T>
Tensor<T> Denoiser<T>::predict(const Tensor<T>& x_t, const ddpm::ConditionBundle<T>& cond, int t) {
  cond.validate();
  if (x_t.rank() != 3) throw std::invalid_argument("denoiser: x_t must be (L',X,Y)");
  DenoiserBatch<T> b;
  const auto with_batch = [](const Tensor<T>& a) {
    std::vector<int> s{1};
    s.insert(s.end(), a.shape().begin(), a.shape().end());
    return a.reshaped(std::move(s));
  };
  b.x_t = with_batch(x_t);
  b.observed = with_batch(cond.observed);
  b.land_veg = with_batch(cond.land_veg);
  b.telemetry = with_batch(cond.telemetry);
  b.t = {t};
  b.drop_em = {static_cast<std::uint8_t>(cond.drop_em)};
  b.drop_lv = {static_cast<std::uint8_t>(cond.drop_lv)};
  return predict(b).reshaped(x_t.shape());
}

template <typename T>
ddpm::EpsModel<T> Denoiser<T>::eps_model() {
  return [this](const Tensor<T>& x_t, const ddpm::ConditionBundle<T>& cond, int t) {
    return predict(x_t, cond, t);
  };
}

template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace firediff::nn
