#include "firediff/autograd.hpp"

#include <cmath>
#include <stdexcept>

#include "firediff/kernels.hpp"

namespace firediff::nn {

namespace {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

}  // namespace

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw std::out_of_range("graph: bad var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw std::out_of_range("graph: bad var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
void Graph<T>::check_live() const {
  if (consumed_) throw std::logic_error("graph: already consumed by backward()");
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool needs_grad) {
  check_live();
  Node n;
  n.own = std::move(value);
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Tensor<T>& Graph<T>::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty() && !(n.ref ? n.ref->empty() : n.own.empty())) {
    n.grad = Tensor<T>(n.ref ? n.ref->shape() : n.own.shape());
  }
  return n.grad;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> v) {
  return push(std::move(v), false);
}

template <typename T>
Var Graph<T>::param(Parameter<T>& p) {
  check_live();
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  const Node& n = node(v);
  return n.ref ? *n.ref : n.own;
}

template <typename T>
const Tensor<T>* Graph<T>::gradient(Var v) const {
  const Node& n = node(v);
  return n.grad.empty() ? nullptr : &n.grad;
}

template <typename T>
Var Graph<T>::conv2d(Var x, Var w, Var b) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(w);
  if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0 ||
      wv.dim(1) != xv.dim(1)) {
    shape_error("conv2d", "input " + xv.shape_string() + " weight " + wv.shape_string());
  }
  kernels::ConvShape s{xv.dim(0), xv.dim(1), wv.dim(0), xv.dim(2), xv.dim(3), wv.dim(2)};
  std::span<const T> bias;
  if (b.valid()) {
    const Tensor<T>& bv = value(b);
    if (bv.rank() != 1 || bv.dim(0) != s.out_channels) shape_error("conv2d", "bias " + bv.shape_string());
    bias = bv.values();
  }
  Tensor<T> y({s.batch, s.out_channels, s.height, s.width});
  kernels::conv2d_forward<T>(s, xv.values(), wv.values(), bias, y.values());
  const Var out = push(std::move(y), needs(x) || needs(w) || needs(b));
  if (node(out).needs_grad) {
    node(out).back = [this, x, w, b, out, s] {
      const Tensor<T>& dy = grad_of(out.id);
      std::span<T> dx = needs(x) ? grad_of(x.id).values() : std::span<T>();
      Tensor<T> scratch_w, scratch_b;
      std::span<T> dw, db;
      if (needs(w)) {
        dw = grad_of(w.id).values();
      } else {
        scratch_w = Tensor<T>(value(w).shape());
        dw = scratch_w.values();
      }
      if (b.valid() && needs(b)) {
        db = grad_of(b.id).values();
      } else if (b.valid()) {
        scratch_b = Tensor<T>(value(b).shape());
        db = scratch_b.values();
      }
      kernels::conv2d_backward<T>(s, value(x).values(), value(w).values(), dy.values(), dx, dw, db);
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) shape_error("group_norm", "input " + xv.shape_string());
  const int c = xv.dim(1);
  if (groups < 1 || c % groups != 0) {
    shape_error("group_norm", std::to_string(c) + " channels not divisible into " +
                                  std::to_string(groups) + " groups");
  }
  if (value(gamma).size() != static_cast<std::size_t>(c) || value(beta).size() != static_cast<std::size_t>(c)) {
    shape_error("group_norm", "affine parameters must have " + std::to_string(c) + " entries");
  }
  kernels::GroupNormShape s{xv.dim(0), c, groups, xv.dim(2) * xv.dim(3)};
  Tensor<T> y(xv.shape()), xhat(xv.shape()), inv_std({s.batch * groups});
  kernels::group_norm_forward<T>(s, xv.values(), value(gamma).values(), value(beta).values(), eps,
                                 xhat.values(), inv_std.values(), y.values());
  const Var out = push(std::move(y), needs(x) || needs(gamma) || needs(beta));
  if (node(out).needs_grad) {
    node(out).back = [this, x, gamma, beta, out, s, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)] {
      const Tensor<T>& dy = grad_of(out.id);
      std::span<T> dx = needs(x) ? grad_of(x.id).values() : std::span<T>();
      Tensor<T> sg, sb;
      std::span<T> dg, db;
      if (needs(gamma)) dg = grad_of(gamma.id).values(); else { sg = Tensor<T>({s.channels}); dg = sg.values(); }
      if (needs(beta)) db = grad_of(beta.id).values(); else { sb = Tensor<T>({s.channels}); db = sb.values(); }
      kernels::group_norm_backward<T>(s, xhat.values(), inv_std.values(), value(gamma).values(),
                                      dy.values(), dx, dg, db);
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::silu(Var x) {
  const Tensor<T>& xv = value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * sigmoid(xv[i]);
  const Var out = push(std::move(y), needs(x));
  if (node(out).needs_grad) {
    node(out).back = [this, x, out] {
      const Tensor<T>& xv = value(x);
      const Tensor<T>& dy = grad_of(out.id);
      Tensor<T>& dx = grad_of(x.id);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const T sg = sigmoid(xv[i]);
        dx[i] += dy[i] * sg * (T(1) + xv[i] * (T(1) - sg));
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor<T> y = value(a);
  const Tensor<T>& bv = value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const Var out = push(std::move(y), needs(a) || needs(b));
  if (node(out).needs_grad) {
    node(out).back = [this, a, b, out] {
      const Tensor<T>& dy = grad_of(out.id);
      for (Var v : {a, b}) {
        if (!needs(v)) continue;
        Tensor<T>& d = grad_of(v.id);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::add_channel(Var x, Var bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& bv = value(bias);
  if (xv.rank() != 4 || bv.rank() != 2 || bv.dim(0) != xv.dim(0) || bv.dim(1) != xv.dim(1)) {
    shape_error("add_channel", xv.shape_string() + " + " + bv.shape_string());
  }
  const int nc = xv.dim(0) * xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor<T> y = xv;
  for (int k = 0; k < nc; ++k)
    for (std::size_t i = 0; i < hw; ++i) y[k * hw + i] += bv[static_cast<std::size_t>(k)];
  const Var out = push(std::move(y), needs(x) || needs(bias));
  if (node(out).needs_grad) {
    node(out).back = [this, x, bias, out, nc, hw] {
      const Tensor<T>& dy = grad_of(out.id);
      if (needs(x)) {
        Tensor<T>& dx = grad_of(x.id);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
      }
      if (needs(bias)) {
        Tensor<T>& db = grad_of(bias.id);
        for (int k = 0; k < nc; ++k) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += dy[k * hw + i];
          db[static_cast<std::size_t>(k)] += static_cast<T>(acc);
        }
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::center_channels(Var x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) shape_error("center_channels", xv.shape_string());
  const int nc = xv.dim(0) * xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  const auto center = [nc, hw](const Tensor<T>& in, Tensor<T>& out, bool accumulate) {
    for (int k = 0; k < nc; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += in[k * hw + i];
      const T m = static_cast<T>(acc / static_cast<double>(hw));
      for (std::size_t i = 0; i < hw; ++i) {
        if (accumulate) out[k * hw + i] += in[k * hw + i] - m;
        else out[k * hw + i] = in[k * hw + i] - m;
      }
    }
  };
  Tensor<T> y(xv.shape());
  center(xv, y, false);
  const Var out = push(std::move(y), needs(x));
  if (node(out).needs_grad) {
    node(out).back = [this, x, out, center] { center(grad_of(out.id), grad_of(x.id), true); };
  }
  return out;
}

template <typename T>
Var Graph<T>::film(Var x, Var ss) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& sv = value(ss);
  if (xv.rank() != 4 || sv.rank() != 2 || sv.dim(0) != xv.dim(0) || sv.dim(1) != 2 * xv.dim(1)) {
    shape_error("film", xv.shape_string() + " with modulation " + sv.shape_string());
  }
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor<T> y(xv.shape());
  for (int b = 0; b < n; ++b)
    for (int k = 0; k < c; ++k) {
      const T scale = T(1) + sv[static_cast<std::size_t>(b) * 2 * c + k];
      const T shift = sv[static_cast<std::size_t>(b) * 2 * c + c + k];
      const std::size_t off = (static_cast<std::size_t>(b) * c + k) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = xv[off + i] * scale + shift;
    }
  const Var out = push(std::move(y), needs(x) || needs(ss));
  if (node(out).needs_grad) {
    node(out).back = [this, x, ss, out, n, c, hw] {
      const Tensor<T>& xv = value(x);
      const Tensor<T>& sv = value(ss);
      const Tensor<T>& dy = grad_of(out.id);
      Tensor<T>* dx = needs(x) ? &grad_of(x.id) : nullptr;
      Tensor<T>* ds = needs(ss) ? &grad_of(ss.id) : nullptr;
      for (int b = 0; b < n; ++b)
        for (int k = 0; k < c; ++k) {
          const std::size_t si = static_cast<std::size_t>(b) * 2 * c + k;
          const T scale = T(1) + sv[si];
          const std::size_t off = (static_cast<std::size_t>(b) * c + k) * hw;
          double dscale = 0.0, dshift = 0.0;
          for (std::size_t i = 0; i < hw; ++i) {
            if (dx) (*dx)[off + i] += dy[off + i] * scale;
            dscale += static_cast<double>(dy[off + i]) * xv[off + i];
            dshift += dy[off + i];
          }
          if (ds) {
            (*ds)[si] += static_cast<T>(dscale);
            (*ds)[si + c] += static_cast<T>(dshift);
          }
        }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::avg_pool2(Var x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4 || xv.dim(2) % 2 || xv.dim(3) % 2) {
    shape_error("avg_pool2", "needs even spatial dims, got " + xv.shape_string());
  }
  const int nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> y({xv.dim(0), xv.dim(1), h / 2, w / 2});
  for (int k = 0; k < nc; ++k)
    for (int yy = 0; yy < h / 2; ++yy)
      for (int xx = 0; xx < w / 2; ++xx) {
        const std::size_t i = (static_cast<std::size_t>(k) * h + 2 * yy) * w + 2 * xx;
        y[(static_cast<std::size_t>(k) * (h / 2) + yy) * (w / 2) + xx] =
            (xv[i] + xv[i + 1] + xv[i + w] + xv[i + w + 1]) * T(0.25);
      }
  const Var out = push(std::move(y), needs(x));
  if (node(out).needs_grad) {
    node(out).back = [this, x, out, nc, h, w] {
      const Tensor<T>& dy = grad_of(out.id);
      Tensor<T>& dx = grad_of(x.id);
      for (int k = 0; k < nc; ++k)
        for (int yy = 0; yy < h / 2; ++yy)
          for (int xx = 0; xx < w / 2; ++xx) {
            const T g = dy[(static_cast<std::size_t>(k) * (h / 2) + yy) * (w / 2) + xx] * T(0.25);
            const std::size_t i = (static_cast<std::size_t>(k) * h + 2 * yy) * w + 2 * xx;
            dx[i] += g;
            dx[i + 1] += g;
            dx[i + w] += g;
            dx[i + w + 1] += g;
          }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::upsample2(Var x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) shape_error("upsample2", "input " + xv.shape_string());
  const int nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> y({xv.dim(0), xv.dim(1), 2 * h, 2 * w});
  for (int k = 0; k < nc; ++k)
    for (int yy = 0; yy < 2 * h; ++yy)
      for (int xx = 0; xx < 2 * w; ++xx) {
        y[(static_cast<std::size_t>(k) * 2 * h + yy) * 2 * w + xx] =
            xv[(static_cast<std::size_t>(k) * h + yy / 2) * w + xx / 2];
      }
  const Var out = push(std::move(y), needs(x));
  if (node(out).needs_grad) {
    node(out).back = [this, x, out, nc, h, w] {
      const Tensor<T>& dy = grad_of(out.id);
      Tensor<T>& dx = grad_of(x.id);
      for (int k = 0; k < nc; ++k)
        for (int yy = 0; yy < 2 * h; ++yy)
          for (int xx = 0; xx < 2 * w; ++xx) {
            dx[(static_cast<std::size_t>(k) * h + yy / 2) * w + xx / 2] +=
                dy[(static_cast<std::size_t>(k) * 2 * h + yy) * 2 * w + xx];
          }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::concat_channels(std::span<const Var> parts) {
  if (parts.empty()) shape_error("concat_channels", "no inputs");
  const Tensor<T>& first = value(parts[0]);
  if (first.rank() != 4) shape_error("concat_channels", "input " + first.shape_string());
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int c_total = 0;
  bool any = false;
  for (Var p : parts) {
    const Tensor<T>& v = value(p);
    if (v.rank() != 4 || v.dim(0) != n || v.dim(2) != h || v.dim(3) != w) {
      shape_error("concat_channels", first.shape_string() + " vs " + v.shape_string());
    }
    c_total += v.dim(1);
    any = any || needs(p);
  }
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor<T> y({n, c_total, h, w});
  int c0 = 0;
  for (Var p : parts) {
    const Tensor<T>& v = value(p);
    const int c = v.dim(1);
    for (int b = 0; b < n; ++b) {
      std::copy_n(v.data() + static_cast<std::size_t>(b) * c * hw, c * hw,
                  y.data() + (static_cast<std::size_t>(b) * c_total + c0) * hw);
    }
    c0 += c;
  }
  const Var out = push(std::move(y), any);
  if (node(out).needs_grad) {
    std::vector<Var> ins(parts.begin(), parts.end());
    node(out).back = [this, ins, out, n, c_total, hw] {
      const Tensor<T>& dy = grad_of(out.id);
      int c0 = 0;
      for (Var p : ins) {
        const int c = value(p).dim(1);
        if (needs(p)) {
          Tensor<T>& d = grad_of(p.id);
          for (int b = 0; b < n; ++b) {
            const T* src = dy.data() + (static_cast<std::size_t>(b) * c_total + c0) * hw;
            T* dst = d.data() + static_cast<std::size_t>(b) * c * hw;
            for (std::size_t i = 0; i < c * hw; ++i) dst[i] += src[i];
          }
        }
        c0 += c;
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::linear(Var x, Var w, Var b) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(w);
  if (xv.rank() != 2 || wv.rank() != 2 || wv.dim(1) != xv.dim(1)) {
    shape_error("linear", "input " + xv.shape_string() + " weight " + wv.shape_string());
  }
  const int n = xv.dim(0), in = xv.dim(1), o = wv.dim(0);
  if (b.valid() && value(b).size() != static_cast<std::size_t>(o)) shape_error("linear", "bias size");
  Tensor<T> y({n, o});
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < o; ++j) {
      double acc = b.valid() ? static_cast<double>(value(b)[static_cast<std::size_t>(j)]) : 0.0;
      for (int k = 0; k < in; ++k) {
        acc += static_cast<double>(xv[static_cast<std::size_t>(r) * in + k]) *
               wv[static_cast<std::size_t>(j) * in + k];
      }
      y[static_cast<std::size_t>(r) * o + j] = static_cast<T>(acc);
    }
  const Var out = push(std::move(y), needs(x) || needs(w) || needs(b));
  if (node(out).needs_grad) {
    node(out).back = [this, x, w, b, out, n, in, o] {
      const Tensor<T>& xv = value(x);
      const Tensor<T>& wv = value(w);
      const Tensor<T>& dy = grad_of(out.id);
      if (needs(x)) {
        Tensor<T>& dx = grad_of(x.id);
        for (int r = 0; r < n; ++r)
          for (int k = 0; k < in; ++k) {
            double acc = 0.0;
            for (int j = 0; j < o; ++j) {
              acc += static_cast<double>(dy[static_cast<std::size_t>(r) * o + j]) *
                     wv[static_cast<std::size_t>(j) * in + k];
            }
            dx[static_cast<std::size_t>(r) * in + k] += static_cast<T>(acc);
          }
      }
      if (needs(w)) {
        Tensor<T>& dw = grad_of(w.id);
        for (int j = 0; j < o; ++j)
          for (int k = 0; k < in; ++k) {
            double acc = 0.0;
            for (int r = 0; r < n; ++r) {
              acc += static_cast<double>(dy[static_cast<std::size_t>(r) * o + j]) *
                     xv[static_cast<std::size_t>(r) * in + k];
            }
            dw[static_cast<std::size_t>(j) * in + k] += static_cast<T>(acc);
          }
      }
      if (needs(b)) {
        Tensor<T>& db = grad_of(b.id);
        for (int j = 0; j < o; ++j) {
          double acc = 0.0;
          for (int r = 0; r < n; ++r) acc += dy[static_cast<std::size_t>(r) * o + j];
          db[static_cast<std::size_t>(j)] += static_cast<T>(acc);
        }
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::mean_groups(Var x, int groups) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 2 || groups < 1 || xv.dim(0) % groups != 0) {
    shape_error("mean_groups", xv.shape_string() + " into " + std::to_string(groups) + " groups");
  }
  const int k = xv.dim(0) / groups, d = xv.dim(1);
  Tensor<T> y({groups, d});
  for (int g = 0; g < groups; ++g)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int r = 0; r < k; ++r) acc += xv[(static_cast<std::size_t>(g) * k + r) * d + j];
      y[static_cast<std::size_t>(g) * d + j] = static_cast<T>(acc / k);
    }
  const Var out = push(std::move(y), needs(x));
  if (node(out).needs_grad) {
    node(out).back = [this, x, out, groups, k, d] {
      const Tensor<T>& dy = grad_of(out.id);
      Tensor<T>& dx = grad_of(x.id);
      for (int g = 0; g < groups; ++g)
        for (int r = 0; r < k; ++r)
          for (int j = 0; j < d; ++j) {
            dx[(static_cast<std::size_t>(g) * k + r) * d + j] +=
                dy[static_cast<std::size_t>(g) * d + j] / static_cast<T>(k);
          }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::select_rows(Var x, Var fallback, std::span<const std::uint8_t> use_fallback) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& fv = value(fallback);
  if (xv.rank() != 2 || fv.size() != static_cast<std::size_t>(xv.dim(1)) ||
      use_fallback.size() != static_cast<std::size_t>(xv.dim(0))) {
    shape_error("select_rows", xv.shape_string() + " with fallback " + fv.shape_string());
  }
  const int n = xv.dim(0), d = xv.dim(1);
  Tensor<T> y = xv;
  for (int r = 0; r < n; ++r) {
    if (use_fallback[static_cast<std::size_t>(r)]) {
      std::copy_n(fv.data(), d, y.data() + static_cast<std::size_t>(r) * d);
    }
  }
  const Var out = push(std::move(y), needs(x) || needs(fallback));
  if (node(out).needs_grad) {
    std::vector<std::uint8_t> flags(use_fallback.begin(), use_fallback.end());
    node(out).back = [this, x, fallback, out, n, d, flags] {
      const Tensor<T>& dy = grad_of(out.id);
      for (int r = 0; r < n; ++r) {
        const bool fb = flags[static_cast<std::size_t>(r)] != 0;
        const Var dst = fb ? fallback : x;
        if (!needs(dst)) continue;
        Tensor<T>& g = grad_of(dst.id);
        const std::size_t off = fb ? 0 : static_cast<std::size_t>(r) * d;
        for (int j = 0; j < d; ++j) g[off + j] += dy[static_cast<std::size_t>(r) * d + j];
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::fill_channels(Var x, Var fallback, std::span<const std::uint8_t> use_fallback) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& fv = value(fallback);
  if (xv.rank() != 4 || fv.size() != static_cast<std::size_t>(xv.dim(1)) ||
      use_fallback.size() != static_cast<std::size_t>(xv.dim(0))) {
    shape_error("fill_channels", xv.shape_string() + " with fallback " + fv.shape_string());
  }
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor<T> y = xv;
  for (int b = 0; b < n; ++b) {
    if (!use_fallback[static_cast<std::size_t>(b)]) continue;
    for (int k = 0; k < c; ++k) {
      std::fill_n(y.data() + (static_cast<std::size_t>(b) * c + k) * hw, hw,
                  fv[static_cast<std::size_t>(k)]);
    }
  }
  const Var out = push(std::move(y), needs(x) || needs(fallback));
  if (node(out).needs_grad) {
    std::vector<std::uint8_t> flags(use_fallback.begin(), use_fallback.end());
    node(out).back = [this, x, fallback, out, n, c, hw, flags] {
      const Tensor<T>& dy = grad_of(out.id);
      for (int b = 0; b < n; ++b) {
        const bool fb = flags[static_cast<std::size_t>(b)] != 0;
        for (int k = 0; k < c; ++k) {
          const std::size_t off = (static_cast<std::size_t>(b) * c + k) * hw;
          if (fb && needs(fallback)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += dy[off + i];
            grad_of(fallback.id)[static_cast<std::size_t>(k)] += static_cast<T>(acc);
          } else if (!fb && needs(x)) {
            Tensor<T>& g = grad_of(x.id);
            for (std::size_t i = 0; i < hw; ++i) g[off + i] += dy[off + i];
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::mse(Var pred, const Tensor<T>& target) {
  const Tensor<T>& pv = value(pred);
  require_same_shape(pv, target, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = static_cast<double>(pv[i]) - target[i];
    acc += d * d;
  }
  const double n = static_cast<double>(pv.size());
  Tensor<T> y({1}, static_cast<T>(acc / n));
  const Var out = push(std::move(y), needs(pred));
  if (node(out).needs_grad) {
    node(out).back = [this, pred, out, target, n] {
      const Tensor<T>& pv = value(pred);
      const double g = grad_of(out.id)[0];
      Tensor<T>& dp = grad_of(pred.id);
      for (std::size_t i = 0; i < dp.size(); ++i) {
        dp[i] += static_cast<T>(2.0 * g * (static_cast<double>(pv[i]) - target[i]) / n);
      }
    };
  }
  return out;
}

template <typename T>
Var Graph<T>::dot(Var x, const Tensor<T>& c) {
  const Tensor<T>& xv = value(x);
  require_same_shape(xv, c, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv[i]) * c[i];
  const Var out = push(Tensor<T>({1}, static_cast<T>(acc)), needs(x));
  if (node(out).needs_grad) {
    node(out).back = [this, x, out, c] {
      const T g = grad_of(out.id)[0];
      Tensor<T>& dx = grad_of(x.id);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * c[i];
    };
  }
  return out;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  check_live();
  if (!record_) throw std::logic_error("graph: backward() on a non-recording graph");
  if (value(loss).size() != 1) throw std::invalid_argument("graph: backward() needs a scalar loss");
  consumed_ = true;
  if (!node(loss).needs_grad) return;
  grad_of(loss.id)[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) continue;
    if (n.back) n.back();
    if (n.param) {
      Parameter<T>& p = *n.param;
      if (p.grad.size() != p.value.size()) p.zero_grad();
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  }
  for (Node& n : nodes_) n.back = nullptr;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace firediff::nn
