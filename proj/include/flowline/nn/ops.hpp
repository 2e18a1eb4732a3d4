#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowline/nn/tensor.hpp"

namespace flowline::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

/// cols[(c*k + ki)*k + kj][oy*wo + ox] = x[c][oy*s - p + ki][ox*s - p + kj], zero outside.
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int s, int p, int ho, int wo, T* cols) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(ch) * k + ki) * k + kj) * plane;
        const T* src = x + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ki;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kj;
            dst[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
          }
        }
      }
}

/// Adjoint of im2col: accumulates columns back into x.
template <typename T>
void col2im(const T* cols, int c, int h, int w, int k, int s, int p, int ho, int wo, T* x) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(ch) * k + ki) * k + kj) * plane;
        T* dst = x + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* drow = dst + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kj;
            if (ix >= 0 && ix < w) drow[ix] += src[ox];
          }
        }
      }
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_op<T>(x.shape(), std::move(out), {x}, [df](Node<T>& self) {
    T* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xin = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.value[i]);
  });
}

}  // namespace detail

/// x [N,C,H,W], weight [O,C,k,k], bias [1,O,1,1] (optional) -> [N,O,Ho,Wo].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w)
    throw std::invalid_argument("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  const int k = ws.h, o = ws.n;
  const int ho = detail::conv_out(xs.h, k, stride, pad), wo = detail::conv_out(xs.w, k, stride, pad);
  if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: input " + xs.str() + " too small for kernel");
  const int ckk = xs.c * k * k;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  const Shape os{xs.n, o, ho, wo};
  std::vector<T> out(os.size());
  std::vector<T> cols(static_cast<std::size_t>(ckk) * plane);
  ConstMatMap<T> W(weight.values().data(), o, ckk);
  for (int n = 0; n < xs.n; ++n) {
    detail::im2col(x.values().data() + n * xs.c * xs.plane(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, cols.data());
    MatMap<T> Y(out.data() + n * o * plane, o, static_cast<Eigen::Index>(plane));
    Y.noalias() = W * ConstMatMap<T>(cols.data(), ckk, static_cast<Eigen::Index>(plane));
    if (bias.defined())
      for (int oc = 0; oc < o; ++oc) Y.row(oc).array() += bias[oc];
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_op<T>(os, std::move(out), inputs, [=](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    T* gw = detail::grad_of(self, 1);
    T* gb = self.inputs.size() > 2 ? detail::grad_of(self, 2) : nullptr;
    const T* xv = self.inputs[0]->value.data();
    ConstMatMap<T> Wm(self.inputs[1]->value.data(), o, ckk);
    std::vector<T> c(static_cast<std::size_t>(ckk) * plane);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap<T> G(self.grad.data() + n * o * plane, o, static_cast<Eigen::Index>(plane));
      if (gw) {
        detail::im2col(xv + n * xs.c * xs.plane(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, c.data());
        MatMap<T>(gw, o, ckk).noalias() += G * ConstMatMap<T>(c.data(), ckk, static_cast<Eigen::Index>(plane)).transpose();
      }
      if (gx) {
        MatMap<T>(c.data(), ckk, static_cast<Eigen::Index>(plane)).noalias() = Wm.transpose() * G;
        detail::col2im(c.data(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, gx + n * xs.c * xs.plane());
      }
      // Sequential sums: Eigen's vectorized reductions over unaligned maps
      // depend on the buffer address and break run-to-run reproducibility.
      if (gb)
        for (int oc = 0; oc < o; ++oc) {
          const T* row = self.grad.data() + (static_cast<std::size_t>(n) * o + oc) * plane;
          T acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += row[i];
          gb[oc] += acc;
        }
    }
  });
}

/// x [N,I,H,W], weight [I,O,k,k], bias [1,O,1,1] (optional) -> [N,O,(H-1)s-2p+k,...].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.n != xs.c || ws.h != ws.w)
    throw std::invalid_argument("conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
  const int k = ws.h, o = ws.c;
  const int ho = (xs.h - 1) * stride - 2 * pad + k, wo = (xs.w - 1) * stride - 2 * pad + k;
  if (ho < 1 || wo < 1) throw std::invalid_argument("conv_transpose2d: empty output");
  const int okk = o * k * k;
  const std::size_t in_plane = xs.plane(), out_plane = static_cast<std::size_t>(ho) * wo;
  const Shape os{xs.n, o, ho, wo};
  std::vector<T> out(os.size(), T(0));
  std::vector<T> cols(static_cast<std::size_t>(okk) * in_plane);
  ConstMatMap<T> W(weight.values().data(), xs.c, okk);
  for (int n = 0; n < xs.n; ++n) {
    ConstMatMap<T> X(x.values().data() + n * xs.c * in_plane, xs.c, static_cast<Eigen::Index>(in_plane));
    MatMap<T>(cols.data(), okk, static_cast<Eigen::Index>(in_plane)).noalias() = W.transpose() * X;
    T* y = out.data() + n * o * out_plane;
    detail::col2im(cols.data(), o, ho, wo, k, stride, pad, xs.h, xs.w, y);
    if (bias.defined())
      for (int oc = 0; oc < o; ++oc)
        for (std::size_t i = 0; i < out_plane; ++i) y[oc * out_plane + i] += bias[oc];
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_op<T>(os, std::move(out), inputs, [=](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    T* gw = detail::grad_of(self, 1);
    T* gb = self.inputs.size() > 2 ? detail::grad_of(self, 2) : nullptr;
    const T* xv = self.inputs[0]->value.data();
    ConstMatMap<T> Wm(self.inputs[1]->value.data(), xs.c, okk);
    std::vector<T> c(static_cast<std::size_t>(okk) * in_plane);
    for (int n = 0; n < xs.n; ++n) {
      const T* g = self.grad.data() + n * o * out_plane;
      if (gx || gw) {
        detail::im2col(g, o, ho, wo, k, stride, pad, xs.h, xs.w, c.data());
        ConstMatMap<T> C(c.data(), okk, static_cast<Eigen::Index>(in_plane));
        if (gx) MatMap<T>(gx + n * xs.c * in_plane, xs.c, static_cast<Eigen::Index>(in_plane)).noalias() += Wm * C;
        if (gw) {
          ConstMatMap<T> X(xv + n * xs.c * in_plane, xs.c, static_cast<Eigen::Index>(in_plane));
          MatMap<T>(gw, xs.c, okk).noalias() += X * C.transpose();
        }
      }
      if (gb)
        for (int oc = 0; oc < o; ++oc)
          for (std::size_t i = 0; i < out_plane; ++i) gb[oc] += g[oc * out_plane + i];
    }
  });
}

/// Per-(sample, channel) normalization without affine parameters.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5)) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  if (plane < 2) throw std::invalid_argument("instance_norm needs at least 2 spatial positions, got " + s.str());
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<T> out(x.size());
  std::vector<T> inv_std(planes);
  const auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.data() + p * plane;
    T mean = 0;
    for (std::size_t i = 0; i < plane; ++i) mean += src[i];
    mean /= static_cast<T>(plane);
    T var = 0;
    for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<T>(plane);
    inv_std[p] = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < plane; ++i) out[p * plane + i] = (src[i] - mean) * inv_std[p];
  }
  return detail::make_op<T>(s, std::move(out), {x}, [planes, plane, inv_std](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const T* g = self.grad.data() + p * plane;
      const T* y = self.value.data() + p * plane;
      T mg = 0, mgy = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        mg += g[i];
        mgy += g[i] * y[i];
      }
      mg /= static_cast<T>(plane);
      mgy /= static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += inv_std[p] * (g[i] - mg - y[i] * mgy);
    }
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return detail::unary(
      x, [slope](T v) { return v > 0 ? v : slope * v; }, [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

/// a * x + b elementwise.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T a, T b) {
  return detail::unary(
      x, [a, b](T v) { return a * v + b; }, [a](T, T) { return a; });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, 2 * s.h, 2 * s.w};
  std::vector<T> out(os.size());
  const auto xv = x.values();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t p = 0; p < planes; ++p)
    for (int y = 0; y < os.h; ++y)
      for (int xx = 0; xx < os.w; ++xx)
        out[p * os.plane() + static_cast<std::size_t>(y) * os.w + xx] =
            xv[p * s.plane() + static_cast<std::size_t>(y / 2) * s.w + xx / 2];
  return detail::make_op<T>(os, std::move(out), {x}, [s, os, planes](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p)
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx)
          gx[p * s.plane() + static_cast<std::size_t>(y / 2) * s.w + xx / 2] +=
              self.grad[p * os.plane() + static_cast<std::size_t>(y) * os.w + xx];
  });
}

namespace detail {

struct LerpTap {
  int i0, i1;
  double f;
};

// Edge-aligned: output sample i sits at i * (in - 1) / (out - 1).
inline std::vector<LerpTap> lerp_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  for (int i = 0; i < out; ++i) {
    const double pos = out == 1 ? (in - 1) / 2.0 : static_cast<double>(i) * (in - 1) / (out - 1);
    const int i0 = std::min(static_cast<int>(std::floor(pos)), in - 1);
    taps[i] = {i0, std::min(i0 + 1, in - 1), pos - i0};
  }
  return taps;
}

}  // namespace detail

/// Edge-aligned bilinear resampling to (h, w).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int h, int w) {
  const Shape s = x.shape();
  if (h < 1 || w < 1) throw std::invalid_argument("resize_bilinear: empty target");
  const Shape os{s.n, s.c, h, w};
  const auto ty = detail::lerp_taps(s.h, h), tx = detail::lerp_taps(s.w, w);
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<T> out(os.size());
  const auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.data() + p * s.plane();
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const auto& a = ty[y];
        const auto& b = tx[xx];
        const T fy = static_cast<T>(a.f), fx = static_cast<T>(b.f);
        const T top = src[a.i0 * s.w + b.i0] * (1 - fx) + src[a.i0 * s.w + b.i1] * fx;
        const T bot = src[a.i1 * s.w + b.i0] * (1 - fx) + src[a.i1 * s.w + b.i1] * fx;
        out[p * os.plane() + static_cast<std::size_t>(y) * w + xx] = top * (1 - fy) + bot * fy;
      }
  }
  return detail::make_op<T>(os, std::move(out), {x}, [s, os, planes, ty, tx](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p) {
      T* dst = gx + p * s.plane();
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx) {
          const T g = self.grad[p * os.plane() + static_cast<std::size_t>(y) * os.w + xx];
          const auto& a = ty[y];
          const auto& b = tx[xx];
          const T fy = static_cast<T>(a.f), fx = static_cast<T>(b.f);
          dst[a.i0 * s.w + b.i0] += g * (1 - fy) * (1 - fx);
          dst[a.i0 * s.w + b.i1] += g * (1 - fy) * fx;
          dst[a.i1 * s.w + b.i0] += g * fy * (1 - fx);
          dst[a.i1 * s.w + b.i1] += g * fy * fx;
        }
    }
  });
}

/// Box average over factor x factor blocks.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int factor) {
  const Shape s = x.shape();
  if (factor < 1 || s.h % factor || s.w % factor)
    throw std::invalid_argument("avg_pool: " + s.str() + " not divisible by " + std::to_string(factor));
  const Shape os{s.n, s.c, s.h / factor, s.w / factor};
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  const T scale = T(1) / static_cast<T>(factor * factor);
  std::vector<T> out(os.size(), T(0));
  const auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p)
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx)
        out[p * os.plane() + static_cast<std::size_t>(y / factor) * os.w + xx / factor] +=
            xv[p * s.plane() + static_cast<std::size_t>(y) * s.w + xx] * scale;
  return detail::make_op<T>(os, std::move(out), {x}, [s, os, planes, factor, scale](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx)
          gx[p * s.plane() + static_cast<std::size_t>(y) * s.w + xx] +=
              self.grad[p * os.plane() + static_cast<std::size_t>(y / factor) * os.w + xx / factor] * scale;
  });
}

/// Channel concatenation; all parts share N, H, W.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape s0 = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw std::invalid_argument("concat_channels: " + s.str() + " does not match " + s0.str());
    channels += s.c;
  }
  const Shape os{s0.n, channels, s0.h, s0.w};
  const std::size_t plane = s0.plane();
  std::vector<T> out(os.size());
  for (int n = 0; n < s0.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const int c = p.shape().c;
      std::copy_n(p.values().data() + n * c * plane, c * plane, out.data() + (n * channels + c0) * plane);
      c0 += c;
    }
  }
  return detail::make_op<T>(os, std::move(out), parts, [os, plane](Node<T>& self) {
    int c0 = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      const int c = self.inputs[i]->shape.c;
      if (T* g = detail::grad_of(self, i))
        for (int n = 0; n < os.n; ++n) {
          const T* src = self.grad.data() + (n * os.c + c0) * plane;
          T* dst = g + n * c * plane;
          for (std::size_t j = 0; j < c * plane; ++j) dst[j] += src[j];
        }
      c0 += c;
    }
  });
}

/// Fixed-weight luma projection of a 3-channel tensor; 1-channel input passes through.
template <typename T>
Tensor<T> grayscale(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.c == 1) return x;
  if (s.c != 3) throw std::invalid_argument("grayscale expects 1 or 3 channels, got " + s.str());
  static constexpr T kLuma[3] = {T(0.299), T(0.587), T(0.114)};
  const Shape os{s.n, 1, s.h, s.w};
  const std::size_t plane = s.plane();
  std::vector<T> out(os.size());
  const auto xv = x.values();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i)
      out[n * plane + i] = kLuma[0] * xv[(n * 3 + 0) * plane + i] + kLuma[1] * xv[(n * 3 + 1) * plane + i] +
                           kLuma[2] * xv[(n * 3 + 2) * plane + i];
  return detail::make_op<T>(os, std::move(out), {x}, [s, plane](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    if (!gx) return;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) gx[(n * 3 + c) * plane + i] += kLuma[c] * self.grad[n * plane + i];
  });
}

/// Per-(sample, channel) spatial mean -> [N,C,1,1].
template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane(), planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<T> out(planes, T(0));
  const auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < plane; ++i) out[p] += xv[p * plane + i];
    out[p] /= static_cast<T>(plane);
  }
  return detail::make_op<T>({s.n, s.c, 1, 1}, std::move(out), {x}, [plane, planes](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += self.grad[p] / static_cast<T>(plane);
  });
}

/// mean(|a - b|) as a scalar.
template <typename T>
Tensor<T> mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  const auto av = a.values(), bv = b.values();
  T sum = 0;
  for (std::size_t i = 0; i < av.size(); ++i) sum += std::abs(av[i] - bv[i]);
  const T n = static_cast<T>(av.size());
  return detail::make_op<T>({1, 1, 1, 1}, {sum / n}, {a, b}, [n](Node<T>& self) {
    const T g = self.grad[0] / n;
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    T* ga = detail::grad_of(self, 0);
    T* gb = detail::grad_of(self, 1);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sg = d > 0 ? g : (d < 0 ? -g : T(0));
      if (ga) ga[i] += sg;
      if (gb) gb[i] -= sg;
    }
  });
}

/// mean(softplus(sign * x)) as a scalar, computed stably.
template <typename T>
Tensor<T> softplus_mean(const Tensor<T>& x, T sign) {
  const auto xv = x.values();
  T sum = 0;
  for (T v : xv) {
    const T z = sign * v;
    sum += std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
  }
  const T n = static_cast<T>(xv.size());
  return detail::make_op<T>({1, 1, 1, 1}, {sum / n}, {x}, [n, sign](Node<T>& self) {
    T* gx = detail::grad_of(self, 0);
    if (!gx) return;
    const T g = self.grad[0] / n;
    const auto& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T z = sign * xv[i];
      const T sig = z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
      gx[i] += g * sign * sig;
    }
  });
}

/// Sum of w_i * s_i over scalar tensors.
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& terms, const std::vector<T>& weights) {
  if (terms.size() != weights.size()) throw std::invalid_argument("weighted_sum: term/weight count mismatch");
  T total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * terms[i].item();
  return detail::make_op<T>({1, 1, 1, 1}, {total}, terms, [weights](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (T* g = detail::grad_of(self, i)) g[0] += weights[i] * self.grad[0];
  });
}

namespace detail {

/// cos/sin tables for an n-point DFT: C[k][j] = cos(2 pi k j / n), S[k][j] = sin(...).
template <typename T>
void dft_tables(int n, RowMat<T>& c, RowMat<T>& s) {
  c.resize(n, n);
  s.resize(n, n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) {
      const long m = (static_cast<long>(k) * j) % n;  // keeps the angle small and exact
      const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / n;
      c(k, j) = static_cast<T>(std::cos(a));
      s(k, j) = static_cast<T>(std::sin(a));
    }
}

}  // namespace detail

/// Sum over bins of |Re| + |Im| of the 2-D DFT of (pred - target), divided by
/// H*W and averaged over the N*C planes.
template <typename T>
Tensor<T> fft_l1(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred.shape(), target.shape(), "fft_l1");
  const Shape s = pred.shape();
  const std::size_t plane = s.plane(), planes = static_cast<std::size_t>(s.n) * s.c;
  RowMat<T> ch, sh, cw, sw;
  detail::dft_tables(s.h, ch, sh);
  detail::dft_tables(s.w, cw, sw);
  // X = F_h D F_w with F = C - iS, so Re = Ch D Cw - Sh D Sw, Im = -(Sh D Cw + Ch D Sw).
  std::vector<RowMat<T>> sign_re(planes), sign_im(planes);
  T total = 0;
  const auto pv = pred.values(), tv = target.values();
  for (std::size_t p = 0; p < planes; ++p) {
    RowMat<T> d(s.h, s.w);
    for (std::size_t i = 0; i < plane; ++i) d.data()[i] = pv[p * plane + i] - tv[p * plane + i];
    const RowMat<T> re = ch * d * cw - sh * d * sw;
    const RowMat<T> im = -(sh * d * cw + ch * d * sw);
    total += re.cwiseAbs().sum() + im.cwiseAbs().sum();
    sign_re[p] = re.unaryExpr([](T v) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
    sign_im[p] = im.unaryExpr([](T v) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
  }
  const T norm = static_cast<T>(plane) * static_cast<T>(planes);
  return detail::make_op<T>(
      {1, 1, 1, 1}, {total / norm}, {pred, target},
      [=](Node<T>& self) {
        T* gp = detail::grad_of(self, 0);
        T* gt = detail::grad_of(self, 1);
        const T g = self.grad[0] / norm;
        for (std::size_t p = 0; p < planes; ++p) {
          // Adjoint of the linear maps above applied to the sign patterns.
          const RowMat<T>& a = sign_re[p];
          const RowMat<T>& b = sign_im[p];
          const RowMat<T> dd = ch.transpose() * a * cw.transpose() - sh.transpose() * a * sw.transpose() -
                               sh.transpose() * b * cw.transpose() - ch.transpose() * b * sw.transpose();
          for (std::size_t i = 0; i < plane; ++i) {
            if (gp) gp[p * plane + i] += g * dd.data()[i];
            if (gt) gt[p * plane + i] -= g * dd.data()[i];
          }
        }
      });
}

}  // namespace flowline::nn
