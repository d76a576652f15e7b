#pragma once

// Tape-based reverse-mode differentiation over NCHW tensors. A Graph records
// each op with its backward closure; backward() walks the tape once, after
// which the graph is consumed and rejects further use.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "firediff/tensor.hpp"

namespace firediff::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Graph {
 public:
  /// With record = false ops only compute values (inference).
  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  bool consumed() const { return consumed_; }

  Var constant(Tensor<T> v);
  /// Leaf aliasing p.value; backward() accumulates into p.grad.
  Var param(Parameter<T>& p);

  const Tensor<T>& value(Var v) const;
  /// Gradient of the last backward() w.r.t. v, or nullptr if none reached it.
  const Tensor<T>* gradient(Var v) const;

  /// Same-size convolution; w is (out,in,k,k), b is (out) or invalid.
  Var conv2d(Var x, Var w, Var b);
  Var group_norm(Var x, Var gamma, Var beta, int groups, double eps = 1e-5);
  Var silu(Var x);
  Var add(Var a, Var b);
  /// x (N,C,H,W) + bias (N,C) broadcast over space.
  Var add_channel(Var x, Var bias);
  /// x (N,C,H,W) minus its per-(n,c) spatial mean.
  Var center_channels(Var x);
  /// x * (1 + ss[:, :C]) + ss[:, C:], with ss (N,2C).
  Var film(Var x, Var ss);
  Var avg_pool2(Var x);
  Var upsample2(Var x);
  Var concat_channels(std::span<const Var> parts);
  /// x (N,in) -> x W^T + b with W (out,in), b (out).
  Var linear(Var x, Var w, Var b);
  /// (G*K, D) -> (G, D), averaging each consecutive run of K rows.
  Var mean_groups(Var x, int groups);
  /// Row n of x (N,D) replaced by `fallback` (D) where use_fallback[n] != 0.
  Var select_rows(Var x, Var fallback, std::span<const std::uint8_t> use_fallback);
  /// Sample n of x (N,C,H,W) replaced by the per-channel constants `fallback` (C).
  Var fill_channels(Var x, Var fallback, std::span<const std::uint8_t> use_fallback);
  /// Scalar mean of (pred - target)^2, accumulated in double.
  Var mse(Var pred, const Tensor<T>& target);
  /// Scalar sum(x * c).
  Var dot(Var x, const Tensor<T>& c);

  /// Seeds d(loss)/d(loss) = 1 on a scalar and propagates. Consumes the graph.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor<T>& grad_of(int id);
  bool needs(Var v) const { return v.valid() && node(v).needs_grad; }
  Var push(Tensor<T> value, bool needs_grad);
  void check_live() const;

  bool record_ = true;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

}  // namespace firediff::nn
