#pragma once

#include <span>
#include <vector>

#include "firediff/autograd.hpp"

namespace firediff::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of every parameter from its .grad. Throws
/// NumericError, leaving params and state untouched, on a non-finite gradient.
template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState& state, const AdamConfig& config);

}  // namespace firediff::nn
