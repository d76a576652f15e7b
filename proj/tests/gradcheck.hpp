#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "firediff/denoiser.hpp"
#include "firediff/rng.hpp"

namespace testutil {

inline firediff::nn::DenoiserConfig tiny_denoiser(int variant) {
  firediff::nn::DenoiserConfig c;
  c.frames_in = 2 + variant % 2;
  c.frames_out = 1 + variant % 3;
  c.levels = 2 + variant % 2;
  c.base_width = c.levels == 3 ? 2 : 4;
  c.blocks_per_level = 1;
  c.groups = 2;
  c.time_dim = 8;
  c.em_hidden = 4;
  c.zero_init_output = false;
  c.mean_head = variant % 2 == 1;
  return c;
}

inline firediff::nn::DenoiserBatch<double> random_batch(const firediff::nn::DenoiserConfig& c, int n, int size,
                                                        firediff::Rng& rng) {
  using firediff::Tensor;
  firediff::nn::DenoiserBatch<double> b;
  b.x_t = Tensor<double>({n, c.frames_out, size, size});
  b.observed = Tensor<double>({n, c.frames_in, size, size});
  b.land_veg = Tensor<double>({n, c.lv_channels, size, size});
  b.telemetry = Tensor<double>({n, c.frames_in, c.em_channels});
  for (auto* t : {&b.x_t, &b.observed, &b.land_veg, &b.telemetry}) firediff::fill_normal(t->values(), rng);
  for (int i = 0; i < n; ++i) {
    b.t.push_back(firediff::uniform_int(rng, 1, 200));
    b.drop_em.push_back(i % 3 == 1);
    b.drop_lv.push_back(i % 3 == 2);
  }
  return b;
}

struct GradCheckResult {
  int checked = 0;
  int failures = 0;
  double worst = 0.0;
  std::size_t parameters = 0;
};

/// Compares backprop gradients of sum(eps_hat * c) with a five-point central
/// difference (step h) on `coords` randomly sampled parameter coordinates.
inline GradCheckResult grad_check(const firediff::nn::DenoiserConfig& config, std::uint64_t seed, int coords,
                                  int size = 16, double h = 1e-3, double tol = 1e-4) {
  using namespace firediff;
  using namespace firediff::nn;
  Rng rng(seed);
  Denoiser<double> net(config, seed);
  if (config.mean_head) net.set_mean_prior(MeanPrior(ddpm::linear_schedule(200), 0.01, 1e-3));
  const auto batch = random_batch(config, 2, size, rng);
  Tensor<double> c(batch.x_t.shape());
  fill_normal(c.values(), rng);

  net.zero_grad();
  Graph<double> g;
  g.backward(g.dot(net.forward(g, batch), c));

  const auto loss = [&] {
    const auto y = net.predict(batch);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
    return s;
  };

  GradCheckResult r;
  r.parameters = net.parameter_count();
  auto& params = net.params();
  for (int k = 0; k < coords; ++k) {
    auto& p = params[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(params.size()) - 1))];
    const auto i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(p.value.size()) - 1));
    const double orig = p.value[i];
    double f[4];
    const double steps[4] = {2 * h, h, -h, -2 * h};
    for (int s = 0; s < 4; ++s) {
      p.value[i] = orig + steps[s];
      f[s] = loss();
    }
    p.value[i] = orig;
    const double fd = (-f[0] + 8 * f[1] - 8 * f[2] + f[3]) / (12 * h);
    const double bp = p.grad[i];
    const double rel = std::abs(bp - fd) / std::max({std::abs(bp), std::abs(fd), 1e-6});
    r.worst = std::max(r.worst, rel);
    r.failures += rel >= tol;
    ++r.checked;
  }
  return r;
}

}  // namespace testutil
