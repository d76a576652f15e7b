#pragma once

#include <functional>
#include <vector>

#include "firediff/rng.hpp"
#include "firediff/tensor.hpp"

namespace firediff::ddpm {

/// Diffusion constants, stored for t = 1..T at index t-1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> beta_tilde;

  double beta_at(int t) const { return beta[index(t)]; }
  double alpha_at(int t) const { return alpha[index(t)]; }
  /// alpha_bar for t in 0..T, with alpha_bar(0) = 1.
  double alpha_bar_at(int t) const;
  double beta_tilde_at(int t) const { return beta_tilde[index(t)]; }

  /// Throws std::out_of_range unless 1 <= t <= T.
  void check_step(int t) const;

 private:
  std::size_t index(int t) const {
    check_step(t);
    return static_cast<std::size_t>(t - 1);
  }
};

/// Builds a schedule from explicit betas, each in (0,1).
NoiseSchedule schedule_from_betas(std::vector<double> beta);

/// beta_t linearly spaced from beta_min to beta_max inclusive.
NoiseSchedule linear_schedule(int T, double beta_min = 1e-4, double beta_max = 0.02);

struct BetaRange {
  double min = 1e-4;
  double max = 0.02;
};

/// The (1e-4, 0.02) range at T = 1000, scaled by 1000/T (capped below 1) so
/// alpha_bar_T stays near zero and x_T ~ N(0, I) matches the forward marginal.
BetaRange scaled_beta_range(int T);

template <typename T>
Tensor<T> forward_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                         const NoiseSchedule& s);

template <typename T>
struct PosteriorParams {
  Tensor<T> mean;
  double variance = 0.0;
};

template <typename T>
PosteriorParams<T> posterior(const Tensor<T>& x_t, const Tensor<T>& x0, int t,
                             const NoiseSchedule& s);

template <typename T>
Tensor<T> estimate_x0(const Tensor<T>& x_t, const Tensor<T>& eps_hat, int t,
                      const NoiseSchedule& s, bool clamp);

template <typename T>
Tensor<T> score_from_eps(const Tensor<T>& eps, int t, const NoiseSchedule& s);

/// Conditioning of one forecast: observed frames (L,X,Y), land-vegetation
/// channels (C,X,Y) and per-frame telemetry (L,11), all normalized. Dropped
/// modalities are still carried; the denoiser swaps in its learned
/// placeholders when a flag is set.
template <typename T>
struct ConditionBundle {
  Tensor<T> observed;
  Tensor<T> land_veg;
  Tensor<T> telemetry;
  bool drop_em = false;
  bool drop_lv = false;

  /// Throws std::invalid_argument on inconsistent shapes.
  void validate() const;
};

/// eps_theta(x_t, cond, t). Must return a tensor shaped like x_t.
template <typename T>
using EpsModel = std::function<Tensor<T>(const Tensor<T>& x_t, const ConditionBundle<T>& cond, int t)>;

template <typename T>
struct LossSample {
  double loss = 0.0;
  int t = 0;
  Tensor<T> eps;
};

/// Draws t ~ U{1..T} then eps ~ N(0,I) shaped like `like`, in that order.
template <typename T>
void draw_noise(const NoiseSchedule& s, Rng& rng, const Tensor<T>& like, int& t, Tensor<T>& eps);

/// Mean squared error between eps and eps_theta(sqrt(ab) x0 + sqrt(1-ab) eps, cond, t).
template <typename T>
LossSample<T> firediff_loss(const Tensor<T>& x0_target, const ConditionBundle<T>& cond,
                            const EpsModel<T>& denoiser, const NoiseSchedule& s, Rng& rng);

/// Reverse chain from x_T ~ N(0,I) shaped (horizon, X, Y) down to x_0.
template <typename T>
Tensor<T> ancestral_sample(const ConditionBundle<T>& cond, const EpsModel<T>& denoiser,
                           const NoiseSchedule& s, Rng& rng, int horizon, bool clamp = true);

}  // namespace firediff::ddpm
