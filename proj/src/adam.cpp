#include "firediff/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "firediff/error.hpp"

namespace firediff::nn {

template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState& state, const AdamConfig& config) {
  for (const auto& p : params) {
    if (p.grad.size() != p.value.size()) {
      throw std::invalid_argument("adam: gradient of '" + p.name + "' is missing or misshapen");
    }
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!std::isfinite(static_cast<double>(p.grad[i]))) {
        throw NumericError("adam: non-finite gradient in '" + p.name + "' at element " +
                           std::to_string(i) + " (step " + std::to_string(state.step + 1) + ")");
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam: state/parameter mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double update = config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
      p.value[i] = static_cast<T>(p.value[i] - update);
    }
  }
}

template void adam_step(std::span<Parameter<float>>, AdamState&, const AdamConfig&);
template void adam_step(std::span<Parameter<double>>, AdamState&, const AdamConfig&);

}  // namespace firediff::nn
