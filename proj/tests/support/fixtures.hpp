#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "flowline/core/image.hpp"

namespace fixtures {

using flowline::ImageBuf;
using flowline::LineDrawing;

/// Vertical step: `lo` left of column w/2, `hi` from it on.
inline ImageBuf step_edge(int w, int h, float lo = 0.2f, float hi = 0.8f) {
  ImageBuf img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = x < w / 2 ? lo : hi;
  return img;
}

/// Bright band between w/4 and 3w/4 on a dark ground: one vertical edge per half.
inline ImageBuf two_edges(int w, int h, float lo = 0.2f, float hi = 0.8f) {
  ImageBuf img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = (x >= w / 4 && x < 3 * w / 4) ? hi : lo;
  return img;
}

/// Dark anti-aliased disk of radius r centred in the image (4x4 supersampling).
inline ImageBuf disk(int n, double r) {
  ImageBuf img(n, n, 1);
  const double c = (n - 1) / 2.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      int inside = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
          const double px = x - 0.375 + sx * 0.25 - c, py = y - 0.375 + sy * 0.25 - c;
          inside += px * px + py * py < r * r;
        }
      img.at(x, y) = 0.9f - 0.8f * static_cast<float>(inside) / 16.0f;
    }
  return img;
}

/// 64x64: fine 2-px checkerboard (0.6 +- 0.15) for x < 44, flat 0.6 up to 52, then a dark block.
/// Thin lines resolve the checker cells; thick lines merge them.
inline ImageBuf checker_texture() {
  ImageBuf img(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      float v = 0.6f;
      if (x < 44)
        v = ((x / 2) + (y / 2)) % 2 ? 0.75f : 0.45f;
      else if (x >= 52)
        v = 0.1f;
      img.at(x, y) = v;
    }
  return img;
}

inline ImageBuf constant(int w, int h, float v) { return ImageBuf(w, h, 1, v); }

inline ImageBuf random_image(std::mt19937_64& rng, int w, int h, int channels = 1) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageBuf img(w, h, channels);
  for (float& v : img.data()) v = u(rng);
  return img;
}

/// Piecewise-constant colour scene with rectangles, disks and bars; 8-bit exact.
inline ImageBuf synthetic_scene(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto level = [&] { return static_cast<float>(std::round(u(rng) * 255.0) / 255.0); };
  ImageBuf img(n, n, 3);
  const float bg[3] = {level(), level(), level()};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = bg[c];
  const int shapes = 3 + static_cast<int>(u(rng) * 3);
  for (int s = 0; s < shapes; ++s) {
    const float col[3] = {level(), level(), level()};
    const int kind = static_cast<int>(u(rng) * 3);
    const double cx = u(rng) * n, cy = u(rng) * n, a = (0.1 + 0.25 * u(rng)) * n, b = (0.1 + 0.25 * u(rng)) * n;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        bool in = false;
        if (kind == 0) in = std::abs(x - cx) < a && std::abs(y - cy) < b;
        if (kind == 1) in = (x - cx) * (x - cx) + (y - cy) * (y - cy) < a * a;
        if (kind == 2) in = std::abs((x - cx) + (y - cy)) < 0.15 * a;
        if (in)
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
      }
  }
  return img;
}

/// Mean length of the horizontal ink runs inside columns [x0, x1), i.e. the
/// run length across a vertical edge. 0 when there is no ink.
inline double mean_stroke_width(const LineDrawing& d, int x0, int x1) {
  std::size_t ink = 0, runs = 0;
  for (int y = 0; y < d.height(); ++y) {
    bool in_run = false;
    for (int x = x0; x < x1; ++x) {
      const bool is_ink = d.at(x, y) == 0.0f;
      ink += is_ink;
      runs += is_ink && !in_run;
      in_run = is_ink;
    }
  }
  return runs ? static_cast<double>(ink) / static_cast<double>(runs) : 0.0;
}

inline double mean_stroke_width(const LineDrawing& d) { return mean_stroke_width(d, 0, d.width()); }

/// 8-connected ink components.
inline int ink_components(const LineDrawing& d) {
  const int w = d.width(), h = d.height();
  std::vector<int> label(static_cast<std::size_t>(w) * h, 0);
  int count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (d.at(x, y) != 0.0f || label[y * w + x]) continue;
      label[y * w + x] = ++count;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (d.at(nx, ny) == 0.0f && !label[ny * w + nx]) {
              label[ny * w + nx] = count;
              stack.push_back({nx, ny});
            }
          }
      }
    }
  return count;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("flowline_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
