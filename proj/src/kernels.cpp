#include "firediff/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

namespace firediff::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col is (in*k*k, h*w); rows outside the image are zero-padded.
template <typename T>
void im2col(const T* x, int cin, int h, int w, int k, T* col) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < cin; ++c) {
    const T* xc = x + c * plane;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        const int dy = ky - pad, dx = kx - pad;
        for (int y = 0; y < h; ++y) {
          T* out = row + static_cast<std::size_t>(y) * w;
          const int iy = y + dy;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* in = xc + static_cast<std::size_t>(iy) * w;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int xx = 0; xx < x0; ++xx) out[xx] = T(0);
          for (int xx = x0; xx < x1; ++xx) out[xx] = in[xx + dx];
          for (int xx = std::max(x1, x0); xx < w; ++xx) out[xx] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int k, T* dx) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < cin; ++c) {
    T* dxc = dx + c * plane;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        const int dy = ky - pad, ddx = kx - pad;
        for (int y = 0; y < h; ++y) {
          const int iy = y + dy;
          if (iy < 0 || iy >= h) continue;
          const T* in = row + static_cast<std::size_t>(y) * w;
          T* out = dxc + static_cast<std::size_t>(iy) * w;
          const int x0 = std::max(0, -ddx), x1 = std::min(w, w - ddx);
          for (int xx = x0; xx < x1; ++xx) out[xx + ddx] += in[xx];
        }
      }
    }
  }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y) {
  const int P = s.height * s.width;
  const int K = s.in_channels * s.kernel * s.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(s.in_channels) * P;
  const std::size_t out_stride = static_cast<std::size_t>(s.out_channels) * P;
  Eigen::Map<const RowMat<T>> W(weight.data(), s.out_channels, K);
#pragma omp parallel
  {
    std::vector<T> col(s.kernel == 1 ? 0 : static_cast<std::size_t>(K) * P);
#pragma omp for schedule(static)
    for (int n = 0; n < s.batch; ++n) {
      const T* xn = x.data() + n * in_stride;
      const T* cptr = xn;
      if (s.kernel != 1) {
        im2col(xn, s.in_channels, s.height, s.width, s.kernel, col.data());
        cptr = col.data();
      }
      Eigen::Map<const RowMat<T>> C(cptr, K, P);
      Eigen::Map<RowMat<T>> Y(y.data() + n * out_stride, s.out_channels, P);
      Y.noalias() = W * C;
      if (!bias.empty()) {
        for (int o = 0; o < s.out_channels; ++o) Y.row(o).array() += bias[o];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias) {
  const int P = s.height * s.width;
  const int K = s.in_channels * s.kernel * s.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(s.in_channels) * P;
  const std::size_t out_stride = static_cast<std::size_t>(s.out_channels) * P;
  const std::size_t wsize = static_cast<std::size_t>(s.out_channels) * K;
  Eigen::Map<const RowMat<T>> W(weight.data(), s.out_channels, K);
  std::vector<T> partial(wsize * s.batch);
#pragma omp parallel
  {
    std::vector<T> col(s.kernel == 1 ? 0 : static_cast<std::size_t>(K) * P);
    std::vector<T> dcol(dx.empty() || s.kernel == 1 ? 0 : static_cast<std::size_t>(K) * P);
#pragma omp for schedule(static)
    for (int n = 0; n < s.batch; ++n) {
      const T* xn = x.data() + n * in_stride;
      const T* cptr = xn;
      if (s.kernel != 1) {
        im2col(xn, s.in_channels, s.height, s.width, s.kernel, col.data());
        cptr = col.data();
      }
      Eigen::Map<const RowMat<T>> C(cptr, K, P);
      Eigen::Map<const RowMat<T>> dY(dy.data() + n * out_stride, s.out_channels, P);
      Eigen::Map<RowMat<T>> dWn(partial.data() + n * wsize, s.out_channels, K);
      dWn.noalias() = dY * C.transpose();
      if (!dx.empty()) {
        if (s.kernel == 1) {
          Eigen::Map<RowMat<T>> dX(dx.data() + n * in_stride, K, P);
          dX.noalias() += W.transpose() * dY;
        } else {
          Eigen::Map<RowMat<T>> dC(dcol.data(), K, P);
          dC.noalias() = W.transpose() * dY;
          col2im_add(dcol.data(), s.in_channels, s.height, s.width, s.kernel,
                     dx.data() + n * in_stride);
        }
      }
    }
  }
  // Fixed summation order over the batch.
  for (int n = 0; n < s.batch; ++n) {
    const T* p = partial.data() + n * wsize;
    for (std::size_t i = 0; i < wsize; ++i) dweight[i] += p[i];
  }
  if (!dbias.empty()) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < s.out_channels; ++o) {
      double acc = 0.0;
      for (int n = 0; n < s.batch; ++n) {
        const T* d = dy.data() + n * out_stride + static_cast<std::size_t>(o) * P;
        for (int i = 0; i < P; ++i) acc += d[i];
      }
      dbias[o] += static_cast<T>(acc);
    }
  }
}

template <typename T>
void group_norm_forward(const GroupNormShape& s, std::span<const T> x, std::span<const T> gamma,
                        std::span<const T> beta, double eps, std::span<T> xhat,
                        std::span<T> inv_std, std::span<T> y) {
  const int cpg = s.channels / s.groups;
  const std::size_t gsize = static_cast<std::size_t>(cpg) * s.spatial;
  const int total = s.batch * s.groups;
#pragma omp parallel for schedule(static)
  for (int ng = 0; ng < total; ++ng) {
    const std::size_t base = static_cast<std::size_t>(ng) * gsize;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < gsize; ++i) sum += x[base + i];
    const double mean = sum / static_cast<double>(gsize);
    for (std::size_t i = 0; i < gsize; ++i) {
      const double d = x[base + i] - mean;
      sq += d * d;
    }
    const double is = 1.0 / std::sqrt(sq / static_cast<double>(gsize) + eps);
    inv_std[ng] = static_cast<T>(is);
    const int g = ng % s.groups;
    for (int cc = 0; cc < cpg; ++cc) {
      const int c = g * cpg + cc;
      const T gm = gamma[c], bt = beta[c];
      const std::size_t off = base + static_cast<std::size_t>(cc) * s.spatial;
      for (int i = 0; i < s.spatial; ++i) {
        const T h = static_cast<T>((x[off + i] - mean) * is);
        xhat[off + i] = h;
        y[off + i] = gm * h + bt;
      }
    }
  }
}

template <typename T>
void group_norm_backward(const GroupNormShape& s, std::span<const T> xhat,
                         std::span<const T> inv_std, std::span<const T> gamma,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                         std::span<T> dbeta) {
  const int cpg = s.channels / s.groups;
  const std::size_t gsize = static_cast<std::size_t>(cpg) * s.spatial;
  const std::size_t cstride = static_cast<std::size_t>(s.channels) * s.spatial;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.channels; ++c) {
    double dg = 0.0, db = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const std::size_t off = n * cstride + static_cast<std::size_t>(c) * s.spatial;
      for (int i = 0; i < s.spatial; ++i) {
        dg += static_cast<double>(dy[off + i]) * xhat[off + i];
        db += dy[off + i];
      }
    }
    dgamma[c] += static_cast<T>(dg);
    dbeta[c] += static_cast<T>(db);
  }
  if (dx.empty()) return;
  const int total = s.batch * s.groups;
#pragma omp parallel for schedule(static)
  for (int ng = 0; ng < total; ++ng) {
    const std::size_t base = static_cast<std::size_t>(ng) * gsize;
    const int g = ng % s.groups;
    double sum_d = 0.0, sum_dh = 0.0;
    for (int cc = 0; cc < cpg; ++cc) {
      const double gm = gamma[g * cpg + cc];
      const std::size_t off = base + static_cast<std::size_t>(cc) * s.spatial;
      for (int i = 0; i < s.spatial; ++i) {
        const double d = dy[off + i] * gm;
        sum_d += d;
        sum_dh += d * xhat[off + i];
      }
    }
    const double m = static_cast<double>(gsize);
    const double is = inv_std[ng];
    for (int cc = 0; cc < cpg; ++cc) {
      const double gm = gamma[g * cpg + cc];
      const std::size_t off = base + static_cast<std::size_t>(cc) * s.spatial;
      for (int i = 0; i < s.spatial; ++i) {
        const double d = dy[off + i] * gm;
        dx[off + i] += static_cast<T>(is * (d - sum_d / m - xhat[off + i] * sum_dh / m));
      }
    }
  }
}

void dilate(const BinaryMask& in, std::span<const Pixel> offsets, BinaryMask& out) {
  const int w = in.width(), h = in.height();
  const auto& src = in.bits();
  auto& dst = out.bits();

  // Offsets grouped by dy; each group covers [lo, hi] in dx when it has no gaps.
  struct Span {
    int dy, lo, hi, count;
  };
  std::vector<Span> spans;
  for (const auto& o : offsets) {
    auto it = std::find_if(spans.begin(), spans.end(), [&](const Span& s) { return s.dy == o.y; });
    if (it == spans.end()) {
      spans.push_back({o.y, o.x, o.x, 1});
    } else {
      it->lo = std::min(it->lo, o.x);
      it->hi = std::max(it->hi, o.x);
      ++it->count;
    }
  }
  const bool contiguous =
      std::all_of(spans.begin(), spans.end(), [](const Span& s) { return s.count == s.hi - s.lo + 1; });

  if (!contiguous) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::uint8_t v = 0;
        for (const auto& o : offsets) {
          const int sx = x - o.x, sy = y - o.y;
          if (sx >= 0 && sy >= 0 && sx < w && sy < h && src[static_cast<std::size_t>(sy) * w + sx]) {
            v = 1;
            break;
          }
        }
        dst[static_cast<std::size_t>(y) * w + x] = v;
      }
    }
    return;
  }

  // Runs of set pixels per source row; each run widens into one fill per span.
  std::vector<std::vector<std::pair<int, int>>> runs(static_cast<std::size_t>(h));
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const auto* row = src.data() + static_cast<std::size_t>(y) * w;
    auto& r = runs[static_cast<std::size_t>(y)];
    for (int x = 0; x < w; ++x) {
      if (!row[x]) continue;
      const int start = x;
      while (x + 1 < w && row[x + 1]) ++x;
      r.emplace_back(start, x);
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    auto* row = dst.data() + static_cast<std::size_t>(y) * w;
    std::fill(row, row + w, std::uint8_t{0});
    for (const auto& s : spans) {
      const int sy = y - s.dy;
      if (sy < 0 || sy >= h) continue;
      for (const auto& [first, last] : runs[static_cast<std::size_t>(sy)]) {
        const int a = std::max(0, first + s.lo), b = std::min(w - 1, last + s.hi);
        if (a <= b) std::fill(row + a, row + b + 1, std::uint8_t{1});
      }
    }
  }
}

namespace serial {

template <typename T>
void conv2d_forward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y) {
  const int k = s.kernel, pad = s.pad(), H = s.height, W = s.width;
  for (int n = 0; n < s.batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
          for (int c = 0; c < s.in_channels; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = yy + ky - pad, ix = xx + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(weight[((o * s.in_channels + c) * k + ky) * k + kx]) *
                       x[((static_cast<std::size_t>(n) * s.in_channels + c) * H + iy) * W + ix];
              }
          y[((static_cast<std::size_t>(n) * s.out_channels + o) * H + yy) * W + xx] =
              static_cast<T>(acc);
        }
}

template <typename T>
void conv2d_backward(const ConvShape& s, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dweight,
                     std::span<T> dbias) {
  const int k = s.kernel, pad = s.pad(), H = s.height, W = s.width;
  for (int n = 0; n < s.batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          const T g = dy[((static_cast<std::size_t>(n) * s.out_channels + o) * H + yy) * W + xx];
          if (!dbias.empty()) dbias[o] += g;
          for (int c = 0; c < s.in_channels; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = yy + ky - pad, ix = xx + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const std::size_t xi = ((static_cast<std::size_t>(n) * s.in_channels + c) * H + iy) * W + ix;
                const std::size_t wi = ((o * s.in_channels + c) * k + ky) * k + kx;
                dweight[wi] += g * x[xi];
                if (!dx.empty()) dx[xi] += g * weight[wi];
              }
        }
}

template <typename T>
void group_norm_forward(const GroupNormShape& s, std::span<const T> x, std::span<const T> gamma,
                        std::span<const T> beta, double eps, std::span<T> xhat,
                        std::span<T> inv_std, std::span<T> y) {
  const int cpg = s.channels / s.groups;
  for (int n = 0; n < s.batch; ++n)
    for (int g = 0; g < s.groups; ++g) {
      auto idx = [&](int cc, int i) {
        return (static_cast<std::size_t>(n) * s.channels + g * cpg + cc) * s.spatial + i;
      };
      double mean = 0.0;
      for (int cc = 0; cc < cpg; ++cc)
        for (int i = 0; i < s.spatial; ++i) mean += x[idx(cc, i)];
      mean /= static_cast<double>(cpg) * s.spatial;
      double var = 0.0;
      for (int cc = 0; cc < cpg; ++cc)
        for (int i = 0; i < s.spatial; ++i) var += (x[idx(cc, i)] - mean) * (x[idx(cc, i)] - mean);
      var /= static_cast<double>(cpg) * s.spatial;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * s.groups + g] = static_cast<T>(is);
      for (int cc = 0; cc < cpg; ++cc)
        for (int i = 0; i < s.spatial; ++i) {
          const T h = static_cast<T>((x[idx(cc, i)] - mean) * is);
          xhat[idx(cc, i)] = h;
          y[idx(cc, i)] = gamma[g * cpg + cc] * h + beta[g * cpg + cc];
        }
    }
}

template <typename T>
void group_norm_backward(const GroupNormShape& s, std::span<const T> xhat,
                         std::span<const T> inv_std, std::span<const T> gamma,
                         std::span<const T> dy, std::span<T> dx, std::span<T> dgamma,
                         std::span<T> dbeta) {
  const int cpg = s.channels / s.groups;
  const double m = static_cast<double>(cpg) * s.spatial;
  for (int n = 0; n < s.batch; ++n)
    for (int g = 0; g < s.groups; ++g) {
      auto idx = [&](int cc, int i) {
        return (static_cast<std::size_t>(n) * s.channels + g * cpg + cc) * s.spatial + i;
      };
      double a = 0.0, b = 0.0;
      for (int cc = 0; cc < cpg; ++cc)
        for (int i = 0; i < s.spatial; ++i) {
          const double d = static_cast<double>(dy[idx(cc, i)]) * gamma[g * cpg + cc];
          a += d;
          b += d * xhat[idx(cc, i)];
          dgamma[g * cpg + cc] += dy[idx(cc, i)] * xhat[idx(cc, i)];
          dbeta[g * cpg + cc] += dy[idx(cc, i)];
        }
      if (dx.empty()) continue;
      const double is = inv_std[n * s.groups + g];
      for (int cc = 0; cc < cpg; ++cc)
        for (int i = 0; i < s.spatial; ++i) {
          const double d = static_cast<double>(dy[idx(cc, i)]) * gamma[g * cpg + cc];
          dx[idx(cc, i)] += static_cast<T>(is * (d - a / m - xhat[idx(cc, i)] * b / m));
        }
    }
}

void dilate(const BinaryMask& in, std::span<const Pixel> offsets, BinaryMask& out) {
  std::fill(out.bits().begin(), out.bits().end(), std::uint8_t{0});
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x) {
      if (!in.get(x, y)) continue;
      for (const auto& o : offsets) {
        if (out.in_bounds(x + o.x, y + o.y)) out.set(x + o.x, y + o.y);
      }
    }
}

}  // namespace serial

#define FIREDIFF_INSTANTIATE(T)                                                               \
  template void conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,    \
                                  std::span<const T>, std::span<T>);                           \
  template void conv2d_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>,   \
                                   std::span<const T>, std::span<T>, std::span<T>,             \
                                   std::span<T>);                                              \
  template void group_norm_forward<T>(const GroupNormShape&, std::span<const T>,               \
                                      std::span<const T>, std::span<const T>, double,          \
                                      std::span<T>, std::span<T>, std::span<T>);               \
  template void group_norm_backward<T>(const GroupNormShape&, std::span<const T>,              \
                                       std::span<const T>, std::span<const T>,                 \
                                       std::span<const T>, std::span<T>, std::span<T>,         \
                                       std::span<T>);                                          \
  namespace serial {                                                                           \
  template void conv2d_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,    \
                                  std::span<const T>, std::span<T>);                           \
  template void conv2d_backward<T>(const ConvShape&, std::span<const T>, std::span<const T>,   \
                                   std::span<const T>, std::span<T>, std::span<T>,             \
                                   std::span<T>);                                              \
  template void group_norm_forward<T>(const GroupNormShape&, std::span<const T>,               \
                                      std::span<const T>, std::span<const T>, double,          \
                                      std::span<T>, std::span<T>, std::span<T>);               \
  template void group_norm_backward<T>(const GroupNormShape&, std::span<const T>,              \
                                       std::span<const T>, std::span<const T>,                 \
                                       std::span<const T>, std::span<T>, std::span<T>,         \
                                       std::span<T>);                                          \
  }

FIREDIFF_INSTANTIATE(float)
FIREDIFF_INSTANTIATE(double)

}  // namespace firediff::kernels
