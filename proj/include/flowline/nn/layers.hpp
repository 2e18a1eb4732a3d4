#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowline/nn/ops.hpp"
#include "flowline/nn/tensor.hpp"

namespace flowline::nn {

/// CL: conv + leaky ReLU. CIL: conv + instance norm + leaky ReLU.
/// DR: deconv + ReLU. DIR: deconv + instance norm + ReLU.
/// UCT: nearest 2x upsample + conv + tanh. Conv: bare convolution.
enum class BlockKind { CL, CIL, DR, DIR, UCT, Conv };

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::CL: return "CL";
    case BlockKind::CIL: return "CIL";
    case BlockKind::DR: return "DR";
    case BlockKind::DIR: return "DIR";
    case BlockKind::UCT: return "UCT";
    case BlockKind::Conv: return "Conv";
  }
  return "?";
}

struct BlockSpec {
  BlockKind kind = BlockKind::Conv;
  int in_ch = 1;
  int out_ch = 1;
  int kernel = 4;
  int stride = 2;
  int padding = 1;

  bool transposed() const { return kind == BlockKind::DR || kind == BlockKind::DIR; }

  void validate() const {
    if (in_ch < 1 || out_ch < 1) throw std::invalid_argument("block channel counts must be >= 1");
    if (kernel < 1 || padding < 0) throw std::invalid_argument("block kernel must be >= 1 and padding >= 0");
    if (stride != 1 && stride != 2) throw std::invalid_argument("block stride must be 1 or 2");
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(in_ch) * out_ch * kernel * kernel + static_cast<std::size_t>(out_ch);
  }
};

/// Weights drawn from N(0, 0.02), biases zero.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  template <typename T>
  Tensor<T> normal(Shape shape) {
    std::normal_distribution<double> dist(0.0, 0.02);
    std::vector<T> v(shape.size());
    for (T& x : v) x = static_cast<T>(dist(rng_));
    return Tensor<T>::from(shape, std::move(v), true);
  }

 private:
  std::mt19937_64 rng_;
};

template <typename T>
class Block {
 public:
  Block(BlockSpec spec, ParamInit& init) : spec_(spec) {
    spec_.validate();
    const Shape ws = spec_.transposed() ? Shape{spec_.in_ch, spec_.out_ch, spec_.kernel, spec_.kernel}
                                        : Shape{spec_.out_ch, spec_.in_ch, spec_.kernel, spec_.kernel};
    weight_ = init.template normal<T>(ws);
    bias_ = Tensor<T>::zeros({1, spec_.out_ch, 1, 1}, true);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.shape().c != spec_.in_ch)
      throw std::invalid_argument(std::string(to_string(spec_.kind)) + " block expects " + std::to_string(spec_.in_ch) +
                                  " input channels, got " + x.shape().str());
    const int s = spec_.stride, p = spec_.padding;
    switch (spec_.kind) {
      case BlockKind::CL: return leaky_relu(conv2d(x, weight_, bias_, s, p));
      case BlockKind::CIL: return leaky_relu(instance_norm(conv2d(x, weight_, bias_, s, p)));
      case BlockKind::DR: return relu(conv_transpose2d(x, weight_, bias_, s, p));
      case BlockKind::DIR: return relu(instance_norm(conv_transpose2d(x, weight_, bias_, s, p)));
      case BlockKind::UCT: return tanh(conv2d(upsample_nearest2x(x), weight_, bias_, s, p));
      case BlockKind::Conv: return conv2d(x, weight_, bias_, s, p);
    }
    throw std::logic_error("unknown block kind");
  }

  const BlockSpec& spec() const { return spec_; }
  std::vector<Tensor<T>> parameters() const { return {weight_, bias_}; }

 private:
  BlockSpec spec_;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

/// Output spatial size of a block for a square input of size `in`.
inline int block_output_size(const BlockSpec& b, int in) {
  switch (b.kind) {
    case BlockKind::DR:
    case BlockKind::DIR: return (in - 1) * b.stride - 2 * b.padding + b.kernel;
    case BlockKind::UCT: return (2 * in + 2 * b.padding - b.kernel) / b.stride + 1;
    default: return (in + 2 * b.padding - b.kernel) / b.stride + 1;
  }
}

}  // namespace flowline::nn
