#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "flowline/core/image.hpp"
#include "flowline/nn/tensor.hpp"

// Network-side conventions: photographs in [-1,1] with 3 channels, tangent
// fields as 2 channels (x, y), drawings and control maps in [0,1].

namespace flowline::nn {

template <typename T>
Tensor<T> image_tensor(const ImageBuf& img) {
  if (img.channels() == 2) throw std::invalid_argument("two-channel images are not supported");
  const int w = img.width(), h = img.height();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<T> v(3 * plane);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float s = img.at(x, y, img.channels() == 1 ? 0 : c);
        v[c * plane + static_cast<std::size_t>(y) * w + x] = static_cast<T>(2.0 * s - 1.0);
      }
  return Tensor<T>::from({1, 3, h, w}, std::move(v));
}

template <typename T>
Tensor<T> etf_tensor(const FlowField& field) {
  const int w = field.width(), h = field.height();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<T> v(2 * plane);
  const auto t = field.tangents().data();
  for (std::size_t i = 0; i < plane; ++i) {
    v[i] = static_cast<T>(t[i].x);
    v[plane + i] = static_cast<T>(t[i].y);
  }
  return Tensor<T>::from({1, 2, h, w}, std::move(v));
}

template <typename T>
Tensor<T> plane_tensor(const Plane<float>& p) {
  std::vector<T> v(p.data().begin(), p.data().end());
  return Tensor<T>::from({1, 1, p.height(), p.width()}, std::move(v));
}

template <typename T>
Tensor<T> constant_map(T value, int w, int h) {
  return Tensor<T>::full({1, 1, h, w}, value);
}

/// Concatenates along the batch axis; the result is a graph leaf.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw std::invalid_argument("stack_batch: no items");
  Shape s = items.front().shape();
  std::vector<T> v;
  for (const auto& t : items) {
    const Shape ts = t.shape();
    if (ts.c != s.c || ts.h != s.h || ts.w != s.w) throw std::invalid_argument("stack_batch: shape mismatch");
    v.insert(v.end(), t.values().begin(), t.values().end());
  }
  s.n = 0;
  for (const auto& t : items) s.n += t.shape().n;
  return Tensor<T>::from(s, std::move(v));
}

/// Sample n of a [N,2,H,W] tensor as a flow field; magnitude 1 where the tangent is nonzero.
template <typename T>
FlowField field_from_tensor(const Tensor<T>& t, int n = 0) {
  const Shape s = t.shape();
  if (s.c != 2) throw std::invalid_argument("field_from_tensor expects 2 channels");
  FlowField f(s.w, s.h);
  const std::size_t plane = s.plane();
  const T* base = t.values().data() + static_cast<std::size_t>(n) * 2 * plane;
  auto tan = f.tangents().data();
  auto mag = f.magnitudes().data();
  for (std::size_t i = 0; i < plane; ++i) {
    tan[i] = {static_cast<float>(base[i]), static_cast<float>(base[plane + i])};
    mag[i] = is_zero(tan[i]) ? 0.0f : 1.0f;
  }
  return f;
}

/// Sample n, channel 0 as a 1-channel image clamped to [0,1].
template <typename T>
ImageBuf image_from_tensor(const Tensor<T>& t, int n = 0) {
  const Shape s = t.shape();
  ImageBuf img(s.w, s.h, 1);
  const T* base = t.values().data() + static_cast<std::size_t>(n) * s.c * s.plane();
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::clamp(static_cast<float>(base[i]), 0.0f, 1.0f);
  return img;
}

}  // namespace flowline::nn
