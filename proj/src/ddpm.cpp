#include "firediff/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "firediff/error.hpp"

namespace firediff::ddpm {

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t == 0) return 1.0;
  return alpha_bar[index(t)];
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > T) {
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " +
                            std::to_string(T) + "]");
  }
}

NoiseSchedule schedule_from_betas(std::vector<double> beta) {
  if (beta.empty()) throw std::invalid_argument("schedule: T must be >= 1");
  for (double b : beta) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta outside (0,1)");
  }
  NoiseSchedule s;
  s.T = static_cast<int>(beta.size());
  s.beta = std::move(beta);
  s.alpha.resize(s.beta.size());
  s.alpha_bar.resize(s.beta.size());
  s.beta_tilde.resize(s.beta.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < s.beta.size(); ++i) {
    const double prev = prod;
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
    s.beta_tilde[i] = i == 0 ? 0.0 : (1.0 - prev) / (1.0 - prod) * s.beta[i];
  }
  return s;
}

NoiseSchedule linear_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> beta(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    beta[static_cast<std::size_t>(i)] =
        T == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / (T - 1);
  }
  return schedule_from_betas(std::move(beta));
}

BetaRange scaled_beta_range(int T) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  const double scale = 1000.0 / T;
  return {std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999)};
}

template <typename T>
Tensor<T> forward_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                         const NoiseSchedule& s) {
  require_same_shape(x0, eps, "forward_sample");
  s.check_step(t);
  const double ab = s.alpha_bar_at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(a * x0[i] + b * eps[i]);
  }
  return out;
}

template <typename T>
PosteriorParams<T> posterior(const Tensor<T>& x_t, const Tensor<T>& x0, int t,
                             const NoiseSchedule& s) {
  require_same_shape(x_t, x0, "posterior");
  s.check_step(t);
  const double ab_prev = s.alpha_bar_at(t - 1);
  // 1 - ab written via the recursion so t = 1 gives c0 = 1, ct = 0 exactly
  const double one_minus_ab = (1.0 - ab_prev) * s.alpha_at(t) + s.beta_at(t);
  const double c0 = std::sqrt(ab_prev) * s.beta_at(t) / one_minus_ab;
  const double ct = std::sqrt(s.alpha_at(t)) * (1.0 - ab_prev) / one_minus_ab;
  PosteriorParams<T> p;
  p.mean = Tensor<T>(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    p.mean[i] = static_cast<T>(c0 * x0[i] + ct * x_t[i]);
  }
  p.variance = s.beta_tilde_at(t);
  return p;
}

template <typename T>
Tensor<T> estimate_x0(const Tensor<T>& x_t, const Tensor<T>& eps_hat, int t,
                      const NoiseSchedule& s, bool clamp) {
  require_same_shape(x_t, eps_hat, "estimate_x0");
  s.check_step(t);
  const double ab = s.alpha_bar_at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor<T> out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = (x_t[i] - b * eps_hat[i]) / a;
    if (clamp) v = std::clamp(v, -1.0, 1.0);
    out[i] = static_cast<T>(v);
  }
  return out;
}

template <typename T>
Tensor<T> score_from_eps(const Tensor<T>& eps, int t, const NoiseSchedule& s) {
  s.check_step(t);
  const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
  Tensor<T> out(eps.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(-eps[i] / b);
  return out;
}

template <typename T>
void ConditionBundle<T>::validate() const {
  if (observed.rank() != 3) throw std::invalid_argument("condition: observed must be (L,X,Y)");
  if (land_veg.rank() != 3) throw std::invalid_argument("condition: land_veg must be (C,X,Y)");
  if (land_veg.dim(1) != observed.dim(1) || land_veg.dim(2) != observed.dim(2)) {
    throw std::invalid_argument("condition: land_veg spatial dims " + land_veg.shape_string() +
                                " do not match observed " + observed.shape_string());
  }
  if (telemetry.rank() != 2 || telemetry.dim(0) != observed.dim(0)) {
    throw std::invalid_argument("condition: telemetry must be (L,channels) with L = " +
                                std::to_string(observed.dim(0)));
  }
}

template <typename T>
void draw_noise(const NoiseSchedule& s, Rng& rng, const Tensor<T>& like, int& t, Tensor<T>& eps) {
  t = uniform_int(rng, 1, s.T);
  eps = Tensor<T>(like.shape());
  fill_normal(eps.values(), rng);
}

template <typename T>
LossSample<T> firediff_loss(const Tensor<T>& x0_target, const ConditionBundle<T>& cond,
                            const EpsModel<T>& denoiser, const NoiseSchedule& s, Rng& rng) {
  LossSample<T> out;
  draw_noise(s, rng, x0_target, out.t, out.eps);
  const Tensor<T> x_t = forward_sample(x0_target, out.t, out.eps, s);
  const Tensor<T> eps_hat = denoiser(x_t, cond, out.t);
  require_same_shape(eps_hat, out.eps, "firediff_loss: denoiser output");
  double acc = 0.0;
  for (std::size_t i = 0; i < eps_hat.size(); ++i) {
    const double d = static_cast<double>(eps_hat[i]) - out.eps[i];
    acc += d * d;
  }
  out.loss = eps_hat.empty() ? 0.0 : acc / static_cast<double>(eps_hat.size());
  return out;
}

template <typename T>
Tensor<T> ancestral_sample(const ConditionBundle<T>& cond, const EpsModel<T>& denoiser,
                           const NoiseSchedule& s, Rng& rng, int horizon, bool clamp) {
  if (horizon < 1) throw UsageError("ancestral_sample: horizon must be >= 1");
  cond.validate();
  Tensor<T> x({horizon, cond.observed.dim(1), cond.observed.dim(2)});
  fill_normal(x.values(), rng);
  Tensor<T> z(x.shape());
  for (int t = s.T; t >= 1; --t) {
    const Tensor<T> eps_hat = denoiser(x, cond, t);
    require_same_shape(eps_hat, x, "ancestral_sample: denoiser output");
    const Tensor<T> x0_hat = estimate_x0(x, eps_hat, t, s, clamp);
    PosteriorParams<T> post = posterior(x, x0_hat, t, s);
    if (t > 1) {
      fill_normal(z.values(), rng);
      const double sd = std::sqrt(post.variance);
      for (std::size_t i = 0; i < x.size(); ++i) post.mean[i] += static_cast<T>(sd * z[i]);
    }
    x = std::move(post.mean);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(static_cast<double>(x[i]))) {
        throw NumericError("ancestral_sample: non-finite value at diffusion step t=" +
                           std::to_string(t) + ", element " + std::to_string(i));
      }
    }
  }
  return x;
}

#define FIREDIFF_INSTANTIATE(T)                                                               \
  template Tensor<T> forward_sample(const Tensor<T>&, int, const Tensor<T>&,                  \
                                    const NoiseSchedule&);                                    \
  template PosteriorParams<T> posterior(const Tensor<T>&, const Tensor<T>&, int,              \
                                        const NoiseSchedule&);                                \
  template Tensor<T> estimate_x0(const Tensor<T>&, const Tensor<T>&, int,                     \
                                 const NoiseSchedule&, bool);                                 \
  template Tensor<T> score_from_eps(const Tensor<T>&, int, const NoiseSchedule&);             \
  template struct ConditionBundle<T>;                                                         \
  template void draw_noise(const NoiseSchedule&, Rng&, const Tensor<T>&, int&, Tensor<T>&);   \
  template LossSample<T> firediff_loss(const Tensor<T>&, const ConditionBundle<T>&,           \
                                       const EpsModel<T>&, const NoiseSchedule&, Rng&);       \
  template Tensor<T> ancestral_sample(const ConditionBundle<T>&, const EpsModel<T>&,          \
                                      const NoiseSchedule&, Rng&, int, bool);

FIREDIFF_INSTANTIATE(float)
FIREDIFF_INSTANTIATE(double)

}  // namespace firediff::ddpm
