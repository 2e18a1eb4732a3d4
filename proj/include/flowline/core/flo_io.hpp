#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "flowline/core/error.hpp"
#include "flowline/core/image.hpp"
#include "flowline/core/image_io.hpp"

// .flo layout (little-endian): float32 magic 202021.25, int32 width,
// int32 height, then width*height float32 (tx, ty) pairs in row-major order.
// The magnitude plane goes to "<path>.mag": same 12-byte header followed by
// width*height float32 values.

namespace flowline {

inline constexpr float kFloMagic = 202021.25f;
inline constexpr std::size_t kFloHeaderBytes = 12;

namespace detail {

template <typename T>
void put_le(Bytes& out, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, 4);
  return value;
}

struct FloHeader {
  int width;
  int height;
};

inline FloHeader parse_flo_header(std::span<const std::uint8_t> bytes, std::size_t floats_per_pixel,
                                  const char* what) {
  if (bytes.size() < kFloHeaderBytes) throw FormatError(std::string(what) + ": truncated header");
  const auto magic = get_le<float>(bytes, 0);
  if (magic != kFloMagic) throw FormatError(std::string(what) + ": bad magic");
  const auto w = get_le<std::int32_t>(bytes, 4);
  const auto h = get_le<std::int32_t>(bytes, 8);
  if (w < 0 || h < 0) throw FormatError(std::string(what) + ": negative dimensions");
  const std::size_t expected =
      kFloHeaderBytes + static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * floats_per_pixel * 4;
  if (bytes.size() != expected)
    throw FormatError(std::string(what) + ": size mismatch between header (" + std::to_string(w) + "x" +
                      std::to_string(h) + ") and payload");
  return {w, h};
}

inline void put_header(Bytes& out, int w, int h) {
  put_le(out, kFloMagic);
  put_le(out, static_cast<std::int32_t>(w));
  put_le(out, static_cast<std::int32_t>(h));
}

}  // namespace detail

inline Bytes encode_flo(const FlowField& field) {
  Bytes out;
  out.reserve(kFloHeaderBytes + static_cast<std::size_t>(field.width()) * field.height() * 8);
  detail::put_header(out, field.width(), field.height());
  for (const Vec2& t : field.tangents().data()) {
    detail::put_le(out, t.x);
    detail::put_le(out, t.y);
  }
  return out;
}

inline Bytes encode_flo_magnitude(const FlowField& field) {
  Bytes out;
  out.reserve(kFloHeaderBytes + static_cast<std::size_t>(field.width()) * field.height() * 4);
  detail::put_header(out, field.width(), field.height());
  for (float m : field.magnitudes().data()) detail::put_le(out, m);
  return out;
}

/// Without a magnitude payload the plane is filled with the tangent norms.
inline FlowField decode_flo(std::span<const std::uint8_t> tangents,
                            std::optional<std::span<const std::uint8_t>> magnitude = std::nullopt) {
  const auto hdr = detail::parse_flo_header(tangents, 2, ".flo");
  FlowField field(hdr.width, hdr.height);
  auto t = field.tangents().data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i].x = detail::get_le<float>(tangents, kFloHeaderBytes + 8 * i);
    t[i].y = detail::get_le<float>(tangents, kFloHeaderBytes + 8 * i + 4);
  }
  auto m = field.magnitudes().data();
  if (magnitude) {
    const auto mh = detail::parse_flo_header(*magnitude, 1, ".flo.mag");
    if (mh.width != hdr.width || mh.height != hdr.height)
      throw FormatError(".flo.mag: dimensions differ from the tangent file");
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = detail::get_le<float>(*magnitude, kFloHeaderBytes + 4 * i);
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = is_zero(t[i]) ? 0.0f : std::min(1.0f, norm(t[i]));
  }
  return field;
}

inline std::filesystem::path magnitude_path(const std::filesystem::path& flo_path) {
  return std::filesystem::path(flo_path.string() + ".mag");
}

inline void write_flo(const FlowField& field, const std::filesystem::path& path) {
  write_file(path, encode_flo(field));
  write_file(magnitude_path(path), encode_flo_magnitude(field));
}

inline FlowField read_flo(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  const Bytes tangents = read_file(path);
  const auto mag_path = magnitude_path(path);
  try {
    if (std::filesystem::exists(mag_path)) {
      const Bytes mag = read_file(mag_path);
      return decode_flo(tangents, std::span<const std::uint8_t>(mag));
    }
    return decode_flo(tangents);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Reads only the 12-byte header; used for manifest validation.
inline std::pair<int, int> read_flo_dims(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  const auto hdr = detail::parse_flo_header(bytes, 2, ".flo");
  return {hdr.width, hdr.height};
}

}  // namespace flowline
