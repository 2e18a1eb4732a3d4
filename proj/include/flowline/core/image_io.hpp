#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "flowline/core/error.hpp"
#include "flowline/core/image.hpp"

namespace flowline {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw IoError("parent directory does not exist: " + parent.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace detail {

inline bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

inline bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

inline ImageBuf decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw DecodeError(std::string("PNG decode failed: ") + image.message);
  if (image.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&image);
    throw DecodeError("unsupported channel count: PNG has an alpha channel");
  }
  const int channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr))
    throw DecodeError(std::string("PNG decode failed: ") + image.message);

  ImageBuf out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(raw[i]) / 255.0f;
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit_longjmp(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Only trivially destructible locals live between setjmp and the jumps.
inline bool jpeg_decode_raw(const unsigned char* data, unsigned long size, std::vector<unsigned char>& raw,
                            int& width, int& height, int& channels, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit_longjmp;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, size);
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components == 1) {
    cinfo.out_color_space = JCS_GRAYSCALE;
  } else if (cinfo.num_components == 3) {
    cinfo.out_color_space = JCS_RGB;
  } else {
    std::snprintf(message, JMSG_LENGTH_MAX, "unsupported channel count: %d", cinfo.num_components);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  channels = cinfo.output_components;
  raw.resize(static_cast<std::size_t>(width) * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline ImageBuf decode_jpeg(std::span<const std::uint8_t> bytes) {
  std::vector<unsigned char> raw;
  int w = 0, h = 0, c = 0;
  char message[JMSG_LENGTH_MAX] = {0};
  if (!jpeg_decode_raw(bytes.data(), static_cast<unsigned long>(bytes.size()), raw, w, h, c, message))
    throw DecodeError(std::string("JPEG decode failed: ") + message);
  ImageBuf out(w, h, c);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(raw[i]) / 255.0f;
  return out;
}

}  // namespace detail

/// Decodes PNG or JPEG bytes (sniffed by signature) into [0,1] samples.
inline ImageBuf decode_image(std::span<const std::uint8_t> bytes) {
  if (detail::is_png(bytes)) return detail::decode_png(bytes);
  if (detail::is_jpeg(bytes)) return detail::decode_jpeg(bytes);
  throw DecodeError("unrecognized image format (expected PNG or JPEG)");
}

inline ImageBuf load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  const Bytes bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

/// 8-bit PNG encoding; 1-channel -> gray, 3-channel -> RGB.
inline Bytes encode_png(const ImageBuf& img) {
  if (img.channels() == 2) throw std::invalid_argument("PNG encoding supports 1 or 3 channels");
  std::vector<png_byte> raw(img.size());
  const auto src = img.data();
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<png_byte>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, raw.data(), 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + image.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raw.data(), 0, nullptr))
    throw Error(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

inline Bytes encode_png(const Plane<float>& plane) { return encode_png(to_image(plane)); }

inline void save_image(const ImageBuf& img, const std::filesystem::path& path) {
  write_file(path, encode_png(img));
}

inline void save_image(const Plane<float>& plane, const std::filesystem::path& path) {
  write_file(path, encode_png(plane));
}

}  // namespace flowline
