#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP implementation in
// firediff::kernels and a plain serial implementation in
// firediff::kernels::serial that the tests use as the reference. Parallel
// kernels only split work over independent outputs, and cross-sample
// reductions are summed in a fixed order, so results do not depend on the
// thread count.

#include <cstdint>
#include <span>

#include "firediff/raster.hpp"

namespace firediff::kernels {

/// Stride-1 "same" convolution over an NCHW batch. kernel is 1 or 3 (odd).
struct ConvShape {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 3;

  int pad() const { return kernel / 2; }
  long long input_size() const { return 1LL * batch * in_channels * height * width; }
  long long output_size() const { return 1LL * batch * out_channels * height * width; }
  long long weight_size() const { return 1LL * out_channels * in_channels * kernel * kernel; }
};

struct GroupNormShape {
  int batch = 1;
  int channels = 1;
  int groups = 1;
  int spatial = 1;  // height * width
};

// y = conv(x, weight) + bias. weight is (out, in, k, k); bias may be empty.
template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y);

// Accumulates into dx (if non-empty), dweight and dbias.
template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias);

// Writes normalized activations xhat and per-(n,g) inverse std; y = gamma*xhat + beta.
template <typename T>
void group_norm_forward(const GroupNormShape& s, std::span<const T> x, std::span<const T> gamma,
                        std::span<const T> beta, double eps, std::span<T> xhat,
                        std::span<T> inv_std, std::span<T> y);

template <typename T>
void group_norm_backward(const GroupNormShape& s, std::span<const T> xhat,
                         std::span<const T> inv_std, std::span<const T> gamma,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                         std::span<T> dbeta);

void dilate(const BinaryMask& in, std::span<const Pixel> offsets, BinaryMask& out);

namespace serial {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y);

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias);

template <typename T>
void group_norm_forward(const GroupNormShape& s, std::span<const T> x, std::span<const T> gamma,
                        std::span<const T> beta, double eps, std::span<T> xhat,
                        std::span<T> inv_std, std::span<T> y);

template <typename T>
void group_norm_backward(const GroupNormShape& s, std::span<const T> xhat,
                         std::span<const T> inv_std, std::span<const T> gamma,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                         std::span<T> dbeta);

void dilate(const BinaryMask& in, std::span<const Pixel> offsets, BinaryMask& out);

}  // namespace serial

/// Number of threads OpenMP kernels will use.
int max_threads();
void set_threads(int n);

}  // namespace firediff::kernels
