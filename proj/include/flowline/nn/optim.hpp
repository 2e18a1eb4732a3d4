#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flowline/nn/tensor.hpp"

namespace flowline::nn {

struct AdamParams {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and no schedule.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamParams hp) : params_(std::move(params)), hp_(hp) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), T(0));
      v_.emplace_back(p.size(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(hp_.beta1), b2 = static_cast<T>(hp_.beta2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      const auto g = p.grad();
      auto x = p.mutable_values();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = m[i] / static_cast<T>(c1);
        const T vhat = v[i] / static_cast<T>(c2);
        x[i] -= static_cast<T>(hp_.lr) * mhat / (std::sqrt(vhat) + static_cast<T>(hp_.eps));
      }
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamParams hp_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t t_ = 0;
};

}  // namespace flowline::nn
