#include <gtest/gtest.h>

#include <random>

#include "flowline/core/error.hpp"
#include "flowline/core/flo_io.hpp"
#include "flowline/core/image.hpp"
#include "flowline/core/image_io.hpp"
#include "support/fixtures.hpp"

using namespace flowline;

TEST(Image, RejectsBadShapes) {
  EXPECT_THROW(ImageBuf(2, 2, 4), std::invalid_argument);
  EXPECT_THROW(ImageBuf(-1, 2, 1), std::invalid_argument);
  EXPECT_THROW(ImageBuf(2, 2, 1, std::vector<float>(3)), std::invalid_argument);
}

TEST(Image, GrayscaleUsesLumaWeights) {
  ImageBuf rgb(1, 1, 3);
  rgb.at(0, 0, 0) = 1.0f;
  EXPECT_NEAR(to_grayscale(rgb).at(0, 0), 0.299f, 1e-7);
  rgb.at(0, 0, 0) = 0.0f;
  rgb.at(0, 0, 1) = 1.0f;
  EXPECT_NEAR(to_grayscale(rgb).at(0, 0), 0.587f, 1e-7);
  rgb = ImageBuf(1, 1, 3, 1.0f);
  EXPECT_FLOAT_EQ(to_grayscale(rgb).at(0, 0), 1.0f);
}

TEST(Image, ResizeMapsCornersToCorners) {
  ImageBuf img(2, 2, 1, std::vector<float>{0.0f, 1.0f, 0.5f, 0.25f});
  const ImageBuf big = resize(img, 5, 5);
  EXPECT_FLOAT_EQ(big.at(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(big.at(4, 0), 1.0f);
  EXPECT_FLOAT_EQ(big.at(0, 4), 0.5f);
  EXPECT_FLOAT_EQ(big.at(4, 4), 0.25f);
  EXPECT_FLOAT_EQ(big.at(2, 0), 0.5f);
  EXPECT_NEAR(resize(img, 1, 1).at(0, 0), (0.0 + 1.0 + 0.5 + 0.25) / 4.0, 1e-6);
}

TEST(Image, QuantizeIsIdempotent) {
  std::mt19937_64 rng(3);
  const ImageBuf q = quantize8(fixtures::random_image(rng, 9, 7, 3));
  EXPECT_EQ(quantize8(q), q);
}

TEST(Png, RoundTripsEightBitImages) {
  std::mt19937_64 rng(5);
  for (int c : {1, 3}) {
    const ImageBuf img = quantize8(fixtures::random_image(rng, 13, 6, c));
    const ImageBuf back = decode_image(encode_png(img));
    ASSERT_EQ(back.channels(), c);
    ASSERT_EQ(back.width(), 13);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_FLOAT_EQ(back.data()[i], img.data()[i]);
  }
}

TEST(Png, EncodingIsDeterministic) {
  std::mt19937_64 rng(6);
  const ImageBuf img = fixtures::random_image(rng, 20, 20, 3);
  EXPECT_EQ(encode_png(img), encode_png(img));
}

TEST(ImageIo, GarbageRaisesDecodeError) {
  const Bytes junk = {'n', 'o', 't', ' ', 'a', 'n', ' ', 'i', 'm', 'a', 'g', 'e'};
  EXPECT_THROW(decode_image(junk), DecodeError);
  Bytes truncated = encode_png(ImageBuf(8, 8, 1, 0.5f));
  truncated.resize(truncated.size() / 2);
  EXPECT_THROW(decode_image(truncated), DecodeError);
}

TEST(ImageIo, MissingFileRaisesIoError) {
  EXPECT_THROW(load_image("/nonexistent/flowline/none.png"), IoError);
}

namespace {

FlowField random_field(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  FlowField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if ((x + y) % 5 == 0) continue;
      const float a = u(rng), b = u(rng), n = std::sqrt(a * a + b * b);
      f.tangent(x, y) = {a / n, b / n};
      f.magnitude(x, y) = 0.5f * (u(rng) + 1.0f);
    }
  return f;
}

}  // namespace

TEST(Flo, RoundTripIsBitExact) {
  std::mt19937_64 rng(9);
  const FlowField f = random_field(rng, 11, 7);
  const auto dir = fixtures::temp_dir("flo_roundtrip");
  write_flo(f, dir / "f.flo");
  EXPECT_EQ(read_flo(dir / "f.flo"), f);
  EXPECT_EQ(read_flo_dims(dir / "f.flo"), std::make_pair(11, 7));
}

TEST(Flo, HeaderLayoutIsMiddleburyLittleEndian) {
  const Bytes b = encode_flo(FlowField(3, 2));
  ASSERT_EQ(b.size(), 12u + 3 * 2 * 8);
  // 202021.25f == 0x50494548, "PIEH" on disk.
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "PIEH");
  EXPECT_EQ(b[4], 3);
  EXPECT_EQ(b[8], 2);
}

TEST(Flo, WithoutMagnitudeFileUsesTangentNorm) {
  std::mt19937_64 rng(1);
  const FlowField f = random_field(rng, 5, 5);
  const FlowField g = decode_flo(encode_flo(f));
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) EXPECT_NEAR(g.magnitude(x, y), is_zero(f.tangent(x, y)) ? 0.0f : 1.0f, 1e-6);
}

TEST(Flo, RejectsCorruptFiles) {
  Bytes b = encode_flo(FlowField(4, 4));
  Bytes bad_magic = b;
  bad_magic[0] ^= 0xff;
  EXPECT_THROW(decode_flo(bad_magic), FormatError);
  Bytes short_payload = b;
  short_payload.pop_back();
  EXPECT_THROW(decode_flo(short_payload), FormatError);
  EXPECT_THROW(decode_flo(Bytes(5, 0)), FormatError);
  const Bytes mag = encode_flo_magnitude(FlowField(3, 4));
  EXPECT_THROW(decode_flo(b, std::span<const std::uint8_t>(mag)), FormatError);
}
