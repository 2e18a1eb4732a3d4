#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowline/nn/layers.hpp"
#include "flowline/nn/ops.hpp"
#include "flowline/nn/tensor.hpp"

namespace flowline::nn {

/// Channel width at encoder level i: base * min(2^i, 8).
inline int level_channels(int base, int level) { return base * std::min(1 << std::min(level, 3), 8); }

/// U-Net with one or more parallel encoders whose features are concatenated
/// at every level. Encoder level i < depth-1 halves the resolution; the last
/// level keeps it (k3 p1). Decoder k < depth-2 doubles it, k = depth-2 keeps
/// it and takes the level-0 skip, and a final UCT restores full resolution.
struct UNetConfig {
  std::vector<int> branch_channels{1};
  int depth = 5;
  int base_ch = 64;
  int out_ch = 2;
  bool lcm = false;  ///< append the downsampled LCM to every decoder input

  void validate() const {
    if (branch_channels.empty()) throw std::invalid_argument("U-Net needs at least one encoder branch");
    for (int c : branch_channels)
      if (c < 1) throw std::invalid_argument("encoder input channels must be >= 1");
    if (depth < 2) throw std::invalid_argument("U-Net depth must be >= 2");
    if (base_ch < 1) throw std::invalid_argument("base_ch must be >= 1");
    if (out_ch < 1) throw std::invalid_argument("out_ch must be >= 1");
  }

  /// Input sides must be a multiple of this.
  int size_multiple() const { return 1 << (depth - 1); }

  std::vector<BlockSpec> encoder_specs(int branch) const {
    std::vector<BlockSpec> specs;
    for (int i = 0; i < depth; ++i) {
      const bool last = i == depth - 1;
      specs.push_back({i == 0 ? BlockKind::CL : BlockKind::CIL, i == 0 ? branch_channels[branch] : level_channels(base_ch, i - 1),
                       level_channels(base_ch, i), last ? 3 : 4, last ? 1 : 2, 1});
    }
    return specs;
  }

  std::vector<BlockSpec> decoder_specs() const {
    const int branches = static_cast<int>(branch_channels.size());
    const int extra = lcm ? 1 : 0;
    std::vector<BlockSpec> specs;
    int prev = branches * level_channels(base_ch, depth - 1);
    for (int k = 0; k <= depth - 2; ++k) {
      const int skip = branches * level_channels(base_ch, depth - 2 - k);
      const bool same_res = k == depth - 2;
      const int out = same_res ? base_ch : level_channels(base_ch, depth - 3 - k);
      specs.push_back({k == 0 ? BlockKind::DR : BlockKind::DIR, prev + skip + extra, out, same_res ? 3 : 4,
                       same_res ? 1 : 2, 1});
      prev = out;
    }
    specs.push_back({BlockKind::UCT, prev + extra, out_ch, 3, 1, 1});
    return specs;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t b = 0; b < branch_channels.size(); ++b)
      for (const auto& s : encoder_specs(static_cast<int>(b))) n += s.parameter_count();
    for (const auto& s : decoder_specs()) n += s.parameter_count();
    return n;
  }

  nlohmann::json to_json() const {
    return {{"branch_channels", branch_channels}, {"depth", depth}, {"base_ch", base_ch}, {"out_ch", out_ch}, {"lcm", lcm}};
  }
  static UNetConfig from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.branch_channels = j.at("branch_channels").get<std::vector<int>>();
    c.depth = j.at("depth").get<int>();
    c.base_ch = j.at("base_ch").get<int>();
    c.out_ch = j.at("out_ch").get<int>();
    c.lcm = j.at("lcm").get<bool>();
    c.validate();
    return c;
  }
};

template <typename T>
class UNet {
 public:
  UNet(UNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    ParamInit init(seed);
    for (std::size_t b = 0; b < config_.branch_channels.size(); ++b) {
      std::vector<Block<T>> enc;
      for (const auto& s : config_.encoder_specs(static_cast<int>(b))) enc.emplace_back(s, init);
      encoders_.push_back(std::move(enc));
    }
    for (const auto& s : config_.decoder_specs()) decoder_.emplace_back(s, init);
  }

  /// Raw tanh output [N, out_ch, H, W].
  Tensor<T> forward(const std::vector<Tensor<T>>& inputs, const Tensor<T>& lcm = {}) const {
    if (inputs.size() != encoders_.size())
      throw std::invalid_argument("U-Net expects " + std::to_string(encoders_.size()) + " inputs");
    const Shape s0 = inputs.front().shape();
    const int m = config_.size_multiple();
    if (s0.h % m != 0 || s0.w % m != 0)
      throw std::invalid_argument("input size " + std::to_string(s0.w) + "x" + std::to_string(s0.h) +
                                  " is not divisible by " + std::to_string(m));
    for (const auto& in : inputs)
      if (in.shape().n != s0.n || in.shape().h != s0.h || in.shape().w != s0.w)
        throw std::invalid_argument("encoder inputs differ in batch or spatial size");
    if (config_.lcm) {
      if (!lcm.defined()) throw std::invalid_argument("this network requires a line control matrix");
      const Shape ls = lcm.shape();
      if (ls.n != s0.n || ls.c != 1 || ls.h != s0.h || ls.w != s0.w)
        throw std::invalid_argument("LCM shape " + ls.str() + " does not match input " + s0.str());
    }

    const int depth = config_.depth;
    std::vector<std::vector<Tensor<T>>> per_level(depth);
    for (std::size_t b = 0; b < encoders_.size(); ++b) {
      Tensor<T> x = inputs[b];
      for (int i = 0; i < depth; ++i) {
        x = encoders_[b][i].forward(x);
        per_level[i].push_back(x);
      }
    }
    std::vector<Tensor<T>> levels;
    for (auto& parts : per_level) levels.push_back(parts.size() == 1 ? parts.front() : concat_channels(parts));

    std::map<int, Tensor<T>> lcm_cache;
    auto with_lcm = [&](std::vector<Tensor<T>> parts) {
      if (config_.lcm) {
        const int factor = s0.h / parts.front().shape().h;
        auto it = lcm_cache.find(factor);
        if (it == lcm_cache.end()) it = lcm_cache.emplace(factor, factor == 1 ? lcm : avg_pool(lcm, factor)).first;
        parts.push_back(it->second);
      }
      return parts.size() == 1 ? parts.front() : concat_channels(parts);
    };

    Tensor<T> x = levels[depth - 1];
    for (int k = 0; k <= depth - 2; ++k) x = decoder_[k].forward(with_lcm({x, levels[depth - 2 - k]}));
    return decoder_.back().forward(with_lcm({x}));
  }

  const UNetConfig& config() const { return config_; }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> p;
    for (const auto& enc : encoders_)
      for (const auto& b : enc)
        for (auto& t : b.parameters()) p.push_back(t);
    for (const auto& b : decoder_)
      for (auto& t : b.parameters()) p.push_back(t);
    return p;
  }

 private:
  UNetConfig config_;
  std::vector<std::vector<Block<T>>> encoders_;
  std::vector<Block<T>> decoder_;
};

template <typename T>
std::size_t parameter_count(const std::vector<Tensor<T>>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

template <typename T>
void set_trainable(const std::vector<Tensor<T>>& params, bool on) {
  for (auto p : params) p.set_requires_grad(on);
}

inline UNetConfig i2f_config(int base_ch) { return {{1}, 5, base_ch, 2, false}; }
inline UNetConfig dfg_config(int base_ch, int depth = 6) { return {{3, 2}, depth, base_ch, 1, true}; }

/// Below this norm a predicted tangent is treated as flat.
inline constexpr double kTangentFloor = 0.1;

/// Image -> edge tangent flow. Input [N,1|3,H,W] in [-1,1], H and W divisible by 16.
template <typename T>
class I2FGenerator {
 public:
  explicit I2FGenerator(int base_ch, std::uint64_t seed = 1) : I2FGenerator(i2f_config(base_ch), seed) {}
  I2FGenerator(UNetConfig config, std::uint64_t seed) : net_(std::move(config), seed) {}

  /// Raw two-channel output in [-1,1].
  Tensor<T> forward(const Tensor<T>& image) const { return net_.forward({grayscale(image)}); }

  /// Unit tangents where the raw norm exceeds the floor, zero elsewhere. Not differentiable.
  Tensor<T> predict_field(const Tensor<T>& image) const {
    NoGradGuard guard;
    return normalize_tangents(forward(image));
  }

  static Tensor<T> normalize_tangents(const Tensor<T>& raw) {
    const Shape s = raw.shape();
    if (s.c != 2) throw std::invalid_argument("tangent tensor must have 2 channels");
    std::vector<T> v(raw.values().begin(), raw.values().end());
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        T& tx = v[(n * 2) * plane + i];
        T& ty = v[(n * 2 + 1) * plane + i];
        const double len = std::sqrt(static_cast<double>(tx) * tx + static_cast<double>(ty) * ty);
        if (len > kTangentFloor) {
          tx = static_cast<T>(tx / len);
          ty = static_cast<T>(ty / len);
        } else {
          tx = ty = T(0);
        }
      }
    return Tensor<T>::from(s, std::move(v));
  }

  const UNetConfig& config() const { return net_.config(); }
  std::vector<Tensor<T>> parameters() const { return net_.parameters(); }
  nlohmann::json arch_json() const { return {{"network", "i2f"}, {"unet", net_.config().to_json()}}; }

 private:
  UNet<T> net_;
};

/// (image [N,3], ETF [N,2], LCM [N,1]) -> drawing [N,1] in [0,1].
template <typename T>
class DoubleFlowGenerator {
 public:
  explicit DoubleFlowGenerator(int base_ch, std::uint64_t seed = 2, int depth = 6)
      : DoubleFlowGenerator(dfg_config(base_ch, depth), seed) {}
  DoubleFlowGenerator(UNetConfig config, std::uint64_t seed) : net_(std::move(config), seed) {}

  Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& etf, const Tensor<T>& lcm) const {
    if (image.shape().c != 3) throw std::invalid_argument("DFG image input must have 3 channels");
    if (etf.shape().c != 2) throw std::invalid_argument("DFG ETF input must have 2 channels");
    return affine(net_.forward({image, etf}, lcm), T(0.5), T(0.5));
  }

  const UNetConfig& config() const { return net_.config(); }
  std::vector<Tensor<T>> parameters() const { return net_.parameters(); }
  nlohmann::json arch_json() const { return {{"network", "dfg"}, {"unet", net_.config().to_json()}}; }

 private:
  UNet<T> net_;
};

/// k4 p1 convolutions; first layer CL, last a bare 1-channel conv, CIL between.
struct DiscriminatorConfig {
  int in_ch = 4;
  int base_ch = 64;
  std::vector<int> strides{2, 2, 2, 1, 1, 1};
  int min_input = 64;

  void validate() const {
    if (in_ch < 1 || base_ch < 1) throw std::invalid_argument("discriminator channels must be >= 1");
    if (strides.size() < 2) throw std::invalid_argument("discriminator needs at least 2 layers");
  }

  std::vector<BlockSpec> specs() const {
    std::vector<BlockSpec> out;
    const int n = static_cast<int>(strides.size());
    int prev = in_ch;
    for (int i = 0; i < n; ++i) {
      const bool last = i == n - 1;
      const BlockKind kind = i == 0 ? BlockKind::CL : (last ? BlockKind::Conv : BlockKind::CIL);
      const int out_ch = last ? 1 : level_channels(base_ch, i);
      out.push_back({kind, prev, out_ch, 4, strides[i], 1});
      prev = out_ch;
    }
    return out;
  }

  /// r <- r + (k - 1) * jump, jump <- jump * stride.
  int receptive_field() const {
    int r = 1, jump = 1;
    for (const auto& s : specs()) {
      r += (s.kernel - 1) * jump;
      jump *= s.stride;
    }
    return r;
  }

  int output_size(int in) const {
    for (const auto& s : specs()) in = block_output_size(s, in);
    return in;
  }

  nlohmann::json to_json() const {
    return {{"in_ch", in_ch}, {"base_ch", base_ch}, {"strides", strides}, {"min_input", min_input}};
  }
};

template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(DiscriminatorConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    ParamInit init(seed);
    for (const auto& s : config_.specs()) layers_.emplace_back(s, init);
  }

  /// Patch logits [N,1,h,w].
  Tensor<T> forward(const Tensor<T>& x) const {
    const Shape s = x.shape();
    if (s.h < config_.min_input || s.w < config_.min_input)
      throw std::invalid_argument("discriminator input " + s.str() + " is smaller than the minimum " +
                                  std::to_string(config_.min_input));
    Tensor<T> y = x;
    for (const auto& l : layers_) y = l.forward(y);
    return y;
  }

  const DiscriminatorConfig& config() const { return config_; }
  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> p;
    for (const auto& l : layers_)
      for (auto& t : l.parameters()) p.push_back(t);
    return p;
  }

 private:
  DiscriminatorConfig config_;
  std::vector<Block<T>> layers_;
};

struct LcrConfig {
  int base_ch = 64;
  int layers = 4;
  bool global = false;  ///< collapse the map to its spatial mean

  void validate() const {
    if (base_ch < 1) throw std::invalid_argument("LCR base_ch must be >= 1");
    if (layers < 1) throw std::invalid_argument("LCR needs at least one layer");
  }
  int size_multiple() const { return 1 << layers; }

  nlohmann::json to_json() const { return {{"base_ch", base_ch}, {"layers", layers}, {"global", global}}; }
  static LcrConfig from_json(const nlohmann::json& j) {
    LcrConfig c{j.at("base_ch").get<int>(), j.at("layers").get<int>(), j.at("global").get<bool>()};
    c.validate();
    return c;
  }
};

/// (drawing [N,1], ETF [N,2]) -> per-pixel control estimate [N,1,H,W] in [0,1].
template <typename T>
class LineControlRegressor {
 public:
  explicit LineControlRegressor(LcrConfig config, std::uint64_t seed = 3) : config_(config) {
    config_.validate();
    ParamInit init(seed);
    int prev = 3;
    for (int i = 0; i < config_.layers; ++i) {
      const int out = level_channels(config_.base_ch, i);
      layers_.emplace_back(BlockSpec{BlockKind::CIL, prev, out, 4, 2, 1}, init);
      prev = out;
    }
    head_.emplace_back(BlockSpec{BlockKind::Conv, prev, 1, 1, 1, 0}, init);
  }

  Tensor<T> forward(const Tensor<T>& drawing, const Tensor<T>& etf) const {
    const Shape ds = drawing.shape(), es = etf.shape();
    if (ds.c != 1 || es.c != 2) throw std::invalid_argument("LCR expects a 1-channel drawing and a 2-channel ETF");
    if (ds.n != es.n || ds.h != es.h || ds.w != es.w)
      throw std::invalid_argument("LCR drawing " + ds.str() + " and ETF " + es.str() + " differ in size");
    const int m = config_.size_multiple();
    if (ds.h % m != 0 || ds.w % m != 0)
      throw std::invalid_argument("LCR input size is not divisible by " + std::to_string(m));
    Tensor<T> x = concat_channels<T>({drawing, etf});
    for (const auto& l : layers_) x = l.forward(x);
    Tensor<T> a = sigmoid(head_.front().forward(x));
    if (config_.global) a = spatial_mean(a);
    return resize_bilinear(a, ds.h, ds.w);
  }

  const LcrConfig& config() const { return config_; }
  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> p;
    for (const auto& l : layers_)
      for (auto& t : l.parameters()) p.push_back(t);
    for (auto& t : head_.front().parameters()) p.push_back(t);
    return p;
  }
  nlohmann::json arch_json() const { return {{"network", "lcr"}, {"lcr", config_.to_json()}}; }

 private:
  LcrConfig config_;
  std::vector<Block<T>> layers_;
  std::vector<Block<T>> head_;
};

}  // namespace flowline::nn
