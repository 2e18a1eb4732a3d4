#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace flowline {

/// Single-plane raster of T, row-major.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, T fill = T{}) : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Plane(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height)
      throw std::invalid_argument("plane data length does not match dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  /// Replicate-border access.
  const T& clamped(int x, int y) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool same_size(int w, int h) const { return w == width_ && h == height_; }
  template <typename U>
  bool same_size(const Plane<U>& o) const {
    return same_size(o.width(), o.height());
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  static void check_dims(int w, int h) {
    if (w < 0 || h < 0) throw std::invalid_argument("negative plane dimensions");
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// H x W x C floating-point raster with samples in [0,1]; interleaved channels.
class ImageBuf {
 public:
  ImageBuf() = default;
  ImageBuf(int width, int height, int channels, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels) {
    check(width, height, channels);
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  ImageBuf(int width, int height, int channels, std::vector<float> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check(width, height, channels);
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
      throw std::invalid_argument("image data length does not match width*height*channels");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  float& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float clamped(int x, int y, int c = 0) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1), c);
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// True when every sample lies in [0,1].
  bool in_range() const {
    return std::all_of(data_.begin(), data_.end(), [](float s) { return s >= 0.0f && s <= 1.0f; });
  }

  friend bool operator==(const ImageBuf&, const ImageBuf&) = default;

 private:
  static void check(int w, int h, int c) {
    if (w < 0 || h < 0) throw std::invalid_argument("negative image dimensions");
    if (c < 1 || c > 3) throw std::invalid_argument("image channels must be 1, 2 or 3");
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<float> data_;
};

/// Binary-valued single channel drawing, 0 = ink, 1 = paper.
class LineDrawing : public Plane<float> {
 public:
  using Plane<float>::Plane;

  bool is_binary() const {
    return std::all_of(data().begin(), data().end(), [](float v) { return v == 0.0f || v == 1.0f; });
  }
  std::size_t ink_count() const {
    return static_cast<std::size_t>(std::count(data().begin(), data().end(), 0.0f));
  }
};

struct Vec2 {
  float x = 0.0f;
  float y = 0.0f;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline float dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline float norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }
inline bool is_zero(Vec2 a) { return a.x == 0.0f && a.y == 0.0f; }

/// Edge tangent field: unit-or-zero tangents plus normalized gradient magnitude.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height)
      : tangents_(width, height), magnitude_(width, height, 0.0f) {}
  FlowField(Plane<Vec2> tangents, Plane<float> magnitude)
      : tangents_(std::move(tangents)), magnitude_(std::move(magnitude)) {
    if (!tangents_.same_size(magnitude_))
      throw std::invalid_argument("tangent and magnitude planes differ in size");
  }

  int width() const { return tangents_.width(); }
  int height() const { return tangents_.height(); }

  Vec2& tangent(int x, int y) { return tangents_.at(x, y); }
  Vec2 tangent(int x, int y) const { return tangents_.at(x, y); }
  float& magnitude(int x, int y) { return magnitude_.at(x, y); }
  float magnitude(int x, int y) const { return magnitude_.at(x, y); }

  Plane<Vec2>& tangents() { return tangents_; }
  const Plane<Vec2>& tangents() const { return tangents_; }
  Plane<float>& magnitudes() { return magnitude_; }
  const Plane<float>& magnitudes() const { return magnitude_; }

  /// Unit-or-zero tangents within 1e-4.
  bool tangents_valid() const {
    return std::all_of(tangents_.data().begin(), tangents_.data().end(), [](Vec2 t) {
      if (is_zero(t)) return true;
      const float n = norm(t);
      return n >= 1.0f - 1e-4f && n <= 1.0f + 1e-4f;
    });
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  Plane<Vec2> tangents_;
  Plane<float> magnitude_;
};

/// BT.601 luma. One-channel input is returned unchanged.
inline ImageBuf to_grayscale(const ImageBuf& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw std::invalid_argument("to_grayscale expects 1 or 3 channels");
  ImageBuf out(img.width(), img.height(), 1);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const float v = 0.299f * src[3 * i] + 0.587f * src[3 * i + 1] + 0.114f * src[3 * i + 2];
    dst[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

/// Bilinear resize with corners mapped to corners.
inline ImageBuf resize(const ImageBuf& img, int w, int h) {
  if (w < 1 || h < 1) throw std::invalid_argument("resize target dimensions must be >= 1");
  if (img.width() < 1 || img.height() < 1) throw std::invalid_argument("cannot resize an empty image");
  if (w == img.width() && h == img.height()) return img;

  auto source_coord = [](int i, int out_n, int in_n) {
    if (out_n == 1) return (in_n - 1) / 2.0;
    return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
  };

  ImageBuf out(w, h, img.channels());
  for (int y = 0; y < h; ++y) {
    const double sy = source_coord(y, h, img.height());
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = sy - y0;
    for (int x = 0; x < w; ++x) {
      const double sx = source_coord(x, w, img.width());
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = sx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bot = (1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out.at(x, y, c) = static_cast<float>(std::clamp((1 - fy) * top + fy * bot, 0.0, 1.0));
      }
    }
  }
  return out;
}

/// Rounds every sample to the nearest multiple of 1/255.
inline ImageBuf quantize8(const ImageBuf& img) {
  ImageBuf out = img;
  for (float& s : out.data()) s = std::round(std::clamp(s, 0.0f, 1.0f) * 255.0f) / 255.0f;
  return out;
}

inline ImageBuf to_image(const Plane<float>& plane) {
  return ImageBuf(plane.width(), plane.height(), 1, plane.values());
}

inline LineDrawing to_drawing(const ImageBuf& img) {
  if (img.channels() != 1) throw std::invalid_argument("line drawing must be single channel");
  return LineDrawing(img.width(), img.height(), std::vector<float>(img.data().begin(), img.data().end()));
}

}  // namespace flowline
