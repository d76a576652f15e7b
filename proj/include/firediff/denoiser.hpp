#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "firediff/autograd.hpp"
#include "firediff/ddpm.hpp"
#include "firediff/tensor.hpp"

namespace firediff::nn {

struct DenoiserConfig {
  int frames_in = 10;        // L, observed frames
  int frames_out = 10;       // L', predicted frames
  int lv_channels = 6;
  int em_channels = 11;
  int base_width = 32;       // doubles per level
  int levels = 3;
  int blocks_per_level = 2;
  int groups = 8;            // group-norm groups, capped at the channel count
  int time_dim = 64;         // sinusoidal embedding size
  int em_hidden = 32;
  bool zero_init_output = true;
  bool mean_head = false;

  int width(int level) const { return base_width << level; }
  /// Spatial dims must be divisible by this.
  int downsample_factor() const { return 1 << (levels - 1); }
  void validate() const;
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

/// Sinusoidal embedding of diffusion step t (sin half then cos half).
std::vector<double> time_embedding(int t, int dim);

/// Gaussian prior N(mean, var) on the per-frame spatial mean of x0. For an
/// H x W frame the mean of unit noise has variance 1/(H W), and eps_mean is
/// the posterior expectation of that noise mean given the frame mean of x_t.
struct MeanPrior {
  std::vector<double> alpha_bar;  // index t, t = 0..T
  double mean = 0.0;
  double var = 4e-4;

  MeanPrior() = default;
  MeanPrior(const ddpm::NoiseSchedule& s, double mean, double var);
  bool covers(int t) const { return t >= 1 && static_cast<std::size_t>(t) < alpha_bar.size(); }
  double eps_mean(double x_t_mean, int t, std::size_t pixels) const;
};

/// A batch of N samples. Telemetry is (N, L, em_channels).
template <typename T>
struct DenoiserBatch {
  Tensor<T> x_t;        // (N, L', H, W)
  Tensor<T> observed;   // (N, L, H, W)
  Tensor<T> land_veg;   // (N, C, H, W)
  Tensor<T> telemetry;  // (N, L, E)
  std::vector<int> t;
  std::vector<std::uint8_t> drop_em;
  std::vector<std::uint8_t> drop_lv;

  int size() const { return x_t.rank() ? x_t.dim(0) : 0; }
};

/// U-Net eps predictor. Observed frames and land-vegetation channels are
/// concatenated with x_t; the diffusion step adds a per-channel bias in every
/// block; telemetry is encoded per frame, mean pooled, and modulates every
/// block through scale/shift. Dropped modalities are replaced by learned
/// placeholders (em_null for the pooled telemetry code, lv_null per channel).
/// With mean_head the output is centered per frame and its frame means come
/// from MeanPrior::eps_mean instead.
template <typename T>
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, std::uint64_t init_seed);

  const DenoiserConfig& config() const { return config_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  Parameter<T>& param(const std::string& name);
  const Parameter<T>& param(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Records the forward pass on g and returns eps_hat (N, L', H, W).
  Var forward(Graph<T>& g, const DenoiserBatch<T>& batch);
  /// Inference without a tape.
  Tensor<T> predict(const DenoiserBatch<T>& batch);
  /// Required before forward() when config().mean_head is set.
  void set_mean_prior(MeanPrior prior) { prior_ = std::move(prior); }
  const MeanPrior& mean_prior() const { return prior_; }

  /// Single-sample adapter matching ddpm::EpsModel: x_t is (L', X, Y).
  Tensor<T> predict(const Tensor<T>& x_t, const ddpm::ConditionBundle<T>& cond, int t);
  ddpm::EpsModel<T> eps_model();

  /// Copy with parameters converted to U.
  template <typename U>
  Denoiser<U> cast() const {
    Denoiser<U> out;
    out.config_ = config_;
    out.prior_ = prior_;
    for (const auto& p : params_) {
      Parameter<U> q;
      q.name = p.name;
      q.value = p.value.template cast<U>();
      out.params_.push_back(std::move(q));
    }
    out.reindex();
    return out;
  }

  /// Replaces all parameter values; names and shapes must match.
  void load_values(const std::vector<Parameter<T>>& values);

 private:
  template <typename U>
  friend class Denoiser;

  struct Vars;
  Var block(Graph<T>& g, Vars& v, const std::string& name, Var x);
  void add_param(const std::string& name, std::vector<int> shape, double bound, std::uint64_t seed,
                 double fill = 0.0);
  void add_conv(const std::string& name, int cin, int cout, int k, std::uint64_t seed, bool zero = false);
  void add_linear(const std::string& name, int in, int out, std::uint64_t seed);
  void add_block(const std::string& name, int cin, int cout, std::uint64_t seed);
  void reindex();

  Tensor<T> frame_mean_eps(const DenoiserBatch<T>& b) const;

  DenoiserConfig config_;
  MeanPrior prior_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace firediff::nn
