#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "flowline/core/image.hpp"
#include "flowline/core/parallel.hpp"

namespace flowline {

/// Edge tangent flow construction parameters.
struct EtfParams {
  int kernel_radius = 5;  ///< neighbourhood radius in pixels (strict: |x - y| < radius)
  float eta = 1.0f;       ///< sharpness of the magnitude weight
  int iterations = 3;

  void validate() const {
    if (kernel_radius < 1) throw std::invalid_argument("ETF kernel radius must be >= 1");
    if (!(eta > 0.0f)) throw std::invalid_argument("ETF eta must be > 0");
    if (iterations < 0) throw std::invalid_argument("ETF iterations must be >= 0");
  }
};

struct Gradients {
  Plane<Vec2> gradient;
  Plane<float> magnitude;
};

/// Unnormalized 3x3 Sobel with replicate borders.
inline Gradients sobel_gradients(const ImageBuf& gray) {
  if (gray.channels() != 1) throw std::invalid_argument("sobel_gradients expects a 1-channel image");
  if (gray.width() < 3 || gray.height() < 3) throw std::invalid_argument("image smaller than the 3x3 Sobel kernel");
  const int w = gray.width();
  const int h = gray.height();
  Gradients g{Plane<Vec2>(w, h), Plane<float>(w, h)};
  parallel_for(0, h, [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < w; ++x) {
      auto I = [&](int dx, int dy) { return static_cast<double>(gray.clamped(x + dx, y + dy)); };
      const double gx = (I(1, -1) + 2.0 * I(1, 0) + I(1, 1)) - (I(-1, -1) + 2.0 * I(-1, 0) + I(-1, 1));
      const double gy = (I(-1, 1) + 2.0 * I(0, 1) + I(1, 1)) - (I(-1, -1) + 2.0 * I(0, -1) + I(1, -1));
      g.gradient.at(x, y) = {static_cast<float>(gx), static_cast<float>(gy)};
      g.magnitude.at(x, y) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  });
  return g;
}

/// Tangent = gradient rotated +90 degrees, normalized; magnitude scaled by its maximum.
inline FlowField etf_init(const Plane<Vec2>& gradient, const Plane<float>& magnitude) {
  if (!gradient.same_size(magnitude)) throw std::invalid_argument("gradient and magnitude sizes differ");
  FlowField field(gradient.width(), gradient.height());
  const auto g = gradient.data();
  auto t = field.tangents().data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double gx = g[i].x, gy = g[i].y;
    const double n = std::sqrt(gx * gx + gy * gy);
    t[i] = n > 0.0 ? Vec2{static_cast<float>(-gy / n), static_cast<float>(gx / n)} : Vec2{};
  }
  const auto mag = magnitude.data();
  const float max_mag = mag.empty() ? 0.0f : *std::max_element(mag.begin(), mag.end());
  auto out = field.magnitudes().data();
  for (std::size_t i = 0; i < mag.size(); ++i) out[i] = max_mag > 0.0f ? mag[i] / max_mag : 0.0f;
  return field;
}

namespace detail {

struct Offset {
  int dx;
  int dy;
};

inline std::vector<Offset> disk_offsets(int radius) {
  std::vector<Offset> offsets;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy < radius * radius) offsets.push_back({dx, dy});
  return offsets;
}

}  // namespace detail

/// One smoothing pass. Each output tangent is the normalized sum over the disk
/// neighbourhood of phi * t(y) * w_m * w_d. A zero centre tangent takes w_d = 1
/// and phi = +1, so flat pixels adopt the flow of nearby edges.
inline FlowField etf_refine(const FlowField& field, const EtfParams& params) {
  params.validate();
  const int w = field.width();
  const int h = field.height();
  const int r = params.kernel_radius;
  const double eta = params.eta;
  const auto offsets = detail::disk_offsets(r);
  FlowField out(field.tangents(), field.magnitudes());
  const auto& tin = field.tangents();
  const auto& gin = field.magnitudes();

  parallel_for(0, h, [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    const bool interior_row = y >= r && y < h - r;
    for (int x = 0; x < w; ++x) {
      const Vec2 tc = tin.at(x, y);
      const double gc = gin.at(x, y);
      const bool centre_zero = is_zero(tc);
      const bool interior = interior_row && x >= r && x < w - r;
      double sx = 0.0, sy = 0.0;
      for (const auto& o : offsets) {
        const int nx = interior ? x + o.dx : std::clamp(x + o.dx, 0, w - 1);
        const int ny = interior ? y + o.dy : std::clamp(y + o.dy, 0, h - 1);
        const Vec2 tn = tin.at(nx, ny);
        if (is_zero(tn)) continue;
        const double wm = 0.5 * (1.0 + std::tanh(eta * (gin.at(nx, ny) - gc)));
        double weight = wm;
        // phi * |t(x).t(y)| is just the signed dot product.
        if (!centre_zero) weight *= static_cast<double>(tc.x) * tn.x + static_cast<double>(tc.y) * tn.y;
        sx += weight * tn.x;
        sy += weight * tn.y;
      }
      const double n = std::sqrt(sx * sx + sy * sy);
      out.tangent(x, y) = n > 0.0 ? Vec2{static_cast<float>(sx / n), static_cast<float>(sy / n)} : Vec2{};
    }
  });
  return out;
}

/// grayscale -> Sobel -> init -> `iterations` refinement passes.
inline FlowField compute_etf(const ImageBuf& img, const EtfParams& params = {}) {
  params.validate();
  const ImageBuf gray = to_grayscale(img);
  const Gradients g = sobel_gradients(gray);
  FlowField field = etf_init(g.gradient, g.magnitude);
  for (int i = 0; i < params.iterations; ++i) field = etf_refine(field, params);
  return field;
}

struct VisualizeOptions {
  int arrow_stride = 0;  ///< 0 disables glyphs
};

namespace detail {

inline void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  const float hh = h * 6.0f;
  const int sector = std::min(5, static_cast<int>(std::floor(hh)));
  const float f = hh - sector;
  const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

inline void draw_segment(ImageBuf& img, double x0, double y0, double x1, double y1) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double f = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + f * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + f * (y1 - y0)));
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
    for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.0f;
  }
}

}  // namespace detail

/// Hue = tangent angle mod pi, value = normalized magnitude.
inline ImageBuf visualize_field(const FlowField& field, VisualizeOptions opts = {}) {
  ImageBuf img(field.width(), field.height(), 3);
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      Vec2 t = field.tangent(x, y);
      if (is_zero(t)) continue;
      if (t.y < 0.0f || (t.y == 0.0f && t.x < 0.0f)) t = {-t.x, -t.y};
      const float angle = std::atan2(t.y, t.x);  // [0, pi)
      float hue = angle / std::numbers::pi_v<float>;
      if (hue >= 1.0f) hue = 0.0f;
      const float v = std::clamp(field.magnitude(x, y), 0.0f, 1.0f);
      float r, g, b;
      detail::hsv_to_rgb(hue, 1.0f, v, r, g, b);
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  }
  if (opts.arrow_stride > 0) {
    const int s = opts.arrow_stride;
    const double half = 0.4 * s;
    for (int y = s / 2; y < field.height(); y += s) {
      for (int x = s / 2; x < field.width(); x += s) {
        const Vec2 t = field.tangent(x, y);
        if (is_zero(t)) continue;
        detail::draw_segment(img, x - half * t.x, y - half * t.y, x + half * t.x, y + half * t.y);
      }
    }
  }
  return img;
}

}  // namespace flowline
