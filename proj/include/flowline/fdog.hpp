#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowline/core/image.hpp"
#include "flowline/core/parallel.hpp"

namespace flowline {

/// Flow-guided DoG parameters. Gaussian widths are in pixels.
struct FdogParams {
  double sigma_c = 2.0;  ///< cross-flow centre width
  double sigma_s = 3.2;  ///< cross-flow surround width, 1.6 * sigma_c
  double sigma_m = 4.0;  ///< along-flow accumulation width
  double rho = 0.99;
  double tau = 0.5;
  int passes = 2;
  /// Intensities are scaled by this factor before filtering so that the
  /// tanh threshold operates on the 8-bit range.
  double intensity_scale = 255.0;

  int cross_halfwidth() const { return static_cast<int>(std::ceil(3.0 * sigma_s)); }
  int flow_halflength() const { return static_cast<int>(std::ceil(3.0 * sigma_m)); }

  void validate() const {
    if (!(sigma_c > 0.0)) throw std::invalid_argument("sigma_c must be > 0");
    if (!(sigma_s > 0.0)) throw std::invalid_argument("sigma_s must be > 0");
    if (!(sigma_m > 0.0)) throw std::invalid_argument("sigma_m must be > 0");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in (0,1]");
    if (passes < 1) throw std::invalid_argument("passes must be >= 1");
    if (!(intensity_scale > 0.0)) throw std::invalid_argument("intensity_scale must be > 0");
  }
};

/// Maps the user control alpha in [0,1] to filter parameters: larger alpha
/// gives wider, smoother and sparser lines.
inline FdogParams alpha_to_params(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  FdogParams p;
  p.sigma_c = 1.0 + 2.0 * alpha;
  p.sigma_s = 1.6 * p.sigma_c;
  p.sigma_m = 2.0 + 4.0 * alpha;
  p.tau = 0.6 - 0.2 * alpha;
  p.rho = 0.99;
  p.passes = 2;
  return p;
}

/// Per-pixel control values in [0,1].
class LineControlMatrix : public Plane<float> {
 public:
  LineControlMatrix() = default;
  LineControlMatrix(int width, int height, float alpha) : Plane<float>(width, height, alpha) { check(); }
  explicit LineControlMatrix(Plane<float> plane) : Plane<float>(std::move(plane)) { check(); }

  /// 8-bit grayscale raster, value / 255 = alpha.
  static LineControlMatrix from_image(const ImageBuf& img) {
    const ImageBuf gray = to_grayscale(img);
    return LineControlMatrix(Plane<float>(gray.width(), gray.height(),
                                          std::vector<float>(gray.data().begin(), gray.data().end())));
  }

 private:
  void check() const {
    for (float v : data())
      if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("LCM values must lie in [0,1]");
  }
};

namespace detail {

/// Discrete Gaussian on [-half, half], normalized to unit sum.
inline std::vector<double> gaussian_taps(double sigma, int half) {
  std::vector<double> taps(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    taps[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += taps[i + half];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

/// Centre-minus-surround taps f(t) = Gc(t) - rho * Gs(t) on [-T, T].
inline std::vector<double> dog_taps(const FdogParams& p) {
  const int T = p.cross_halfwidth();
  auto c = gaussian_taps(p.sigma_c, T);
  const auto s = gaussian_taps(p.sigma_s, T);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= p.rho * s[i];
  return c;
}

/// Bilinear image sample with coordinates clamped to the image.
inline double sample_bilinear(const ImageBuf& img, double x, double y) {
  const int w = img.width(), h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  const auto d = img.data();
  const double a = d[static_cast<std::size_t>(y0) * w + x0], b = d[static_cast<std::size_t>(y0) * w + x1];
  const double c = d[static_cast<std::size_t>(y1) * w + x0], e = d[static_cast<std::size_t>(y1) * w + x1];
  return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * e);
}

struct FlowVec {
  double x;
  double y;
};

/// Bilinear tangent with each corner sign-aligned to `ref`; nullopt if it vanishes.
inline std::optional<FlowVec> sample_tangent(const FlowField& field, double x, double y, FlowVec ref) {
  const int w = field.width(), h = field.height();
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  double sx = 0.0, sy = 0.0;
  auto add = [&](int px, int py, double wgt) {
    const Vec2 t = field.tangent(px, py);
    const double sign = (t.x * ref.x + t.y * ref.y) < 0.0 ? -1.0 : 1.0;
    sx += wgt * sign * t.x;
    sy += wgt * sign * t.y;
  };
  add(x0, y0, (1 - fx) * (1 - fy));
  add(x1, y0, fx * (1 - fy));
  add(x0, y1, (1 - fx) * fy);
  add(x1, y1, fx * fy);
  const double n = std::sqrt(sx * sx + sy * sy);
  if (n < 1e-9) return std::nullopt;
  return FlowVec{sx / n, sy / n};
}

struct StreamPoint {
  double x;
  double y;
  FlowVec tangent;
  int s;  ///< signed arc index
};

/// Midpoint (RK2) unit-step streamline through pixel (x, y), up to `half`
/// steps each way. Stops at the image border or on entering a pixel whose
/// tangent is zero. A zero seed tangent traces a straight x-axis line.
inline void trace_streamline(const FlowField& field, int x, int y, int half, std::vector<StreamPoint>& out) {
  out.clear();
  const int w = field.width(), h = field.height();
  const Vec2 seed = field.tangent(x, y);
  if (is_zero(seed)) {
    out.push_back({static_cast<double>(x), static_cast<double>(y), {1.0, 0.0}, 0});
    for (int dir : {1, -1})
      for (int s = 1; s <= half; ++s) {
        const int px = x + dir * s;
        if (px < 0 || px >= w) break;
        out.push_back({static_cast<double>(px), static_cast<double>(y), {1.0, 0.0}, dir * s});
      }
    return;
  }
  const FlowVec t0{seed.x, seed.y};
  out.push_back({static_cast<double>(x), static_cast<double>(y), t0, 0});
  const double max_x = w - 1, max_y = h - 1;
  for (int dir : {1, -1}) {
    double px = x, py = y;
    FlowVec t1{dir * t0.x, dir * t0.y};
    for (int s = 1; s <= half; ++s) {
      const double mx = px + 0.5 * t1.x, my = py + 0.5 * t1.y;
      if (mx < 0.0 || my < 0.0 || mx > max_x || my > max_y) break;
      const auto t2 = sample_tangent(field, mx, my, t1);
      if (!t2) break;
      const double qx = px + t2->x, qy = py + t2->y;
      if (qx < 0.0 || qy < 0.0 || qx > max_x || qy > max_y) break;
      const int nx = static_cast<int>(std::lround(qx)), ny = static_cast<int>(std::lround(qy));
      if (is_zero(field.tangent(nx, ny))) break;
      const auto tq = sample_tangent(field, qx, qy, *t2);
      if (!tq) break;
      out.push_back({qx, qy, *tq, dir * s});
      px = qx;
      py = qy;
      t1 = *tq;
    }
  }
}

}  // namespace detail

/// Flow-guided DoG response: a cross-flow DoG evaluated at every streamline
/// sample, Gaussian-weighted along the flow and normalized by the weights of
/// the samples actually visited.
inline Plane<float> fdog_response(const ImageBuf& gray, const FlowField& field, const FdogParams& params) {
  params.validate();
  if (gray.channels() != 1) throw std::invalid_argument("fdog_response expects a 1-channel image");
  if (gray.width() != field.width() || gray.height() != field.height())
    throw std::invalid_argument("image and flow field dimensions differ");
  const int w = gray.width(), h = gray.height();
  const int T = params.cross_halfwidth();
  const int S = params.flow_halflength();
  const auto dog = detail::dog_taps(params);
  const auto along = detail::gaussian_taps(params.sigma_m, S);
  const auto pixels = gray.data();
  Plane<float> response(w, h);

  parallel_for(0, h, [&](std::ptrdiff_t yi) {
    const int y = static_cast<int>(yi);
    std::vector<detail::StreamPoint> line;
    line.reserve(2 * S + 1);
    for (int x = 0; x < w; ++x) {
      detail::trace_streamline(field, x, y, S, line);
      double acc = 0.0, weight_sum = 0.0;
      for (const auto& p : line) {
        const double nx = -p.tangent.y, ny = p.tangent.x;
        // Whole cross section inside the image: skip the clamping.
        const bool inside = p.x - T >= 0.0 && p.x + T <= w - 1 && p.y - T >= 0.0 && p.y + T <= h - 1;
        double cross = 0.0;
        for (int t = -T; t <= T; ++t) {
          const double sx = p.x + t * nx, sy = p.y + t * ny;
          double v;
          if (inside) {
            const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            const double fx = sx - x0, fy = sy - y0;
            const std::size_t i = static_cast<std::size_t>(y0) * w + x0;
            const int dx = x0 + 1 < w ? 1 : 0;
            const std::size_t dy = y0 + 1 < h ? static_cast<std::size_t>(w) : 0;
            v = (1 - fy) * ((1 - fx) * pixels[i] + fx * pixels[i + dx]) +
                fy * ((1 - fx) * pixels[i + dy] + fx * pixels[i + dy + dx]);
          } else {
            v = detail::sample_bilinear(gray, sx, sy);
          }
          cross += dog[t + T] * v;
        }
        const double g = along[p.s + S];
        acc += g * cross;
        weight_sum += g;
      }
      response.at(x, y) = static_cast<float>(params.intensity_scale * acc / weight_sum);
    }
  });
  return response;
}

/// Ink (0) iff H < 0 and 1 + tanh(H) < tau.
inline LineDrawing threshold_response(const Plane<float>& response, double tau) {
  LineDrawing out(response.width(), response.height(), 1.0f);
  const auto H = response.data();
  auto d = out.data();
  for (std::size_t i = 0; i < H.size(); ++i)
    if (H[i] < 0.0f && 1.0 + std::tanh(static_cast<double>(H[i])) < tau) d[i] = 0.0f;
  return out;
}

/// `passes` rounds of response -> threshold -> darken the working image with the ink.
inline LineDrawing render_line_drawing(const ImageBuf& img, const FlowField& field, const FdogParams& params) {
  params.validate();
  ImageBuf work = to_grayscale(img);
  LineDrawing drawing;
  for (int pass = 0; pass < params.passes; ++pass) {
    drawing = threshold_response(fdog_response(work, field, params), params.tau);
    auto wd = work.data();
    const auto dd = drawing.data();
    for (std::size_t i = 0; i < wd.size(); ++i) wd[i] = std::min(wd[i], dd[i]);
  }
  return drawing;
}

inline LineDrawing render_line_drawing(const ImageBuf& img, const FlowField& field, double alpha, int passes = 2) {
  FdogParams p = alpha_to_params(alpha);
  p.passes = passes;
  return render_line_drawing(img, field, p);
}

inline constexpr std::array<double, 5> kAnchorLevels = {0.1, 0.3, 0.5, 0.7, 0.9};

/// Spatially varying control: renders the anchor levels the LCM needs and,
/// per pixel, linearly blends the two anchors bracketing its value before
/// re-binarizing at 0.5. Values within 1e-9 of an anchor use that anchor's
/// rendering directly; values outside [0.1, 0.9] clamp to the end anchors.
inline LineDrawing render_with_lcm(const ImageBuf& img, const FlowField& field, const LineControlMatrix& lcm,
                                   int passes = 2) {
  if (img.width() != lcm.width() || img.height() != lcm.height())
    throw std::invalid_argument("LCM dimensions differ from the image");
  if (img.width() != field.width() || img.height() != field.height())
    throw std::invalid_argument("image and flow field dimensions differ");
  constexpr std::size_t K = kAnchorLevels.size();

  struct Blend {
    std::size_t lo;
    std::size_t hi;
    double weight;  // of hi
  };
  auto bracket = [](double a) -> Blend {
    for (std::size_t k = 0; k < K; ++k)
      if (std::abs(a - kAnchorLevels[k]) <= 1e-9) return {k, k, 0.0};
    if (a <= kAnchorLevels.front()) return {0, 0, 0.0};
    if (a >= kAnchorLevels.back()) return {K - 1, K - 1, 0.0};
    std::size_t k = 0;
    while (a > kAnchorLevels[k + 1]) ++k;
    return {k, k + 1, (a - kAnchorLevels[k]) / (kAnchorLevels[k + 1] - kAnchorLevels[k])};
  };

  const auto values = lcm.data();
  std::vector<Blend> blends(values.size());
  std::array<bool, K> needed{};
  for (std::size_t i = 0; i < values.size(); ++i) {
    blends[i] = bracket(values[i]);
    needed[blends[i].lo] = true;
    if (blends[i].weight > 0.0) needed[blends[i].hi] = true;
  }

  std::array<std::future<LineDrawing>, K> jobs;
  for (std::size_t k = 0; k < K; ++k)
    if (needed[k])
      jobs[k] = std::async(std::launch::async, [&, k] { return render_line_drawing(img, field, kAnchorLevels[k], passes); });
  std::array<LineDrawing, K> anchors;
  for (std::size_t k = 0; k < K; ++k)
    if (needed[k]) anchors[k] = jobs[k].get();

  LineDrawing out(img.width(), img.height(), 1.0f);
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Blend& b = blends[i];
    if (b.weight == 0.0) {
      d[i] = anchors[b.lo].data()[i];
      continue;
    }
    const double v = (1.0 - b.weight) * anchors[b.lo].data()[i] + b.weight * anchors[b.hi].data()[i];
    d[i] = v < 0.5 ? 0.0f : 1.0f;
  }
  return out;
}

}  // namespace flowline
