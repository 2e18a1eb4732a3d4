#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "flowline/core/error.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/nn/networks.hpp"

// Layout (little-endian):
//   8 bytes  "FLNNCKPT"
//   u32      format version
//   u64      architecture JSON length L, then L bytes of UTF-8 JSON
//   u64      parameter count P, then P float32 values
//   32 bytes SHA-256 over the JSON bytes followed by the parameter bytes

namespace flowline::nn {

inline constexpr std::array<char, 8> kCheckpointMagic{'F', 'L', 'N', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json arch;
  std::vector<float> params;
};

namespace detail {

inline std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::array<std::uint8_t, 32> digest{};
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("sha256: allocation failed");
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 && EVP_DigestUpdate(ctx, a.data(), a.size()) == 1 &&
                  EVP_DigestUpdate(ctx, b.data(), b.size()) == 1 && EVP_DigestFinal_ex(ctx, digest.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok || len != digest.size()) throw Error("sha256 failed");
  return digest;
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint64_t get_uint(std::span<const std::uint8_t> in, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[off + i]) << (8 * i);
  return v;
}

}  // namespace detail

template <typename T>
Bytes encode_checkpoint(const nlohmann::json& arch, const std::vector<Tensor<T>>& params) {
  const std::string js = arch.dump();
  Bytes payload;
  for (const auto& p : params)
    for (T v : p.values()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::put_u32(payload, bits);
    }
  Bytes out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, js.size());
  out.insert(out.end(), js.begin(), js.end());
  detail::put_u64(out, payload.size() / 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const auto digest = detail::sha256({reinterpret_cast<const std::uint8_t*>(js.data()), js.size()}, payload);
  out.insert(out.end(), digest.begin(), digest.end());
  return out;
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> in) {
  auto need = [&](std::size_t off, std::size_t n) {
    if (off + n > in.size()) throw FormatError("checkpoint truncated");
  };
  need(0, 12);
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), in.begin())) throw FormatError("not a checkpoint file");
  const auto version = detail::get_uint(in, 8, 4);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  need(12, 8);
  const std::size_t jlen = detail::get_uint(in, 12, 8);
  need(20, jlen);
  const auto js = in.subspan(20, jlen);
  need(20 + jlen, 8);
  const std::size_t count = detail::get_uint(in, 20 + jlen, 8);
  const std::size_t poff = 28 + jlen;
  if (count > (in.size() - poff) / 4) throw FormatError("checkpoint truncated");
  need(poff, count * 4 + 32);
  if (poff + count * 4 + 32 != in.size()) throw FormatError("checkpoint has trailing bytes");
  const auto payload = in.subspan(poff, count * 4);
  const auto digest = detail::sha256(js, payload);
  if (!std::equal(digest.begin(), digest.end(), in.begin() + poff + count * 4))
    throw FormatError("checkpoint checksum mismatch");

  Checkpoint ck;
  try {
    ck.arch = nlohmann::json::parse(js.begin(), js.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint architecture JSON: ") + e.what());
  }
  ck.params.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto bits = static_cast<std::uint32_t>(detail::get_uint(payload, 4 * i, 4));
    std::memcpy(&ck.params[i], &bits, 4);
  }
  return ck;
}

template <typename T>
void load_parameters(const Checkpoint& ck, const std::vector<Tensor<T>>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  if (total != ck.params.size())
    throw FormatError("checkpoint holds " + std::to_string(ck.params.size()) + " parameters, network needs " +
                      std::to_string(total));
  std::size_t k = 0;
  for (auto p : params)
    for (T& v : p.mutable_values()) v = static_cast<T>(ck.params[k++]);
}

template <typename Net>
void save_checkpoint(const std::filesystem::path& path, const Net& net) {
  write_file(path, encode_checkpoint(net.arch_json(), net.parameters()));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace detail {
inline void expect_network(const Checkpoint& ck, const char* name) {
  if (ck.arch.value("network", "") != name) throw FormatError(std::string("checkpoint does not hold a ") + name + " network");
}
}  // namespace detail

template <typename T>
I2FGenerator<T> load_i2f(const Checkpoint& ck) {
  detail::expect_network(ck, "i2f");
  I2FGenerator<T> net(UNetConfig::from_json(ck.arch.at("unet")), 0);
  load_parameters(ck, net.parameters());
  return net;
}

template <typename T>
DoubleFlowGenerator<T> load_dfg(const Checkpoint& ck) {
  detail::expect_network(ck, "dfg");
  DoubleFlowGenerator<T> net(UNetConfig::from_json(ck.arch.at("unet")), 0);
  load_parameters(ck, net.parameters());
  return net;
}

template <typename T>
LineControlRegressor<T> load_lcr(const Checkpoint& ck) {
  detail::expect_network(ck, "lcr");
  LineControlRegressor<T> net(LcrConfig::from_json(ck.arch.at("lcr")), 0);
  load_parameters(ck, net.parameters());
  return net;
}

}  // namespace flowline::nn
