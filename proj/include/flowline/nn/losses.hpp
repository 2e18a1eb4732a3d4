#pragma once

#include <stdexcept>
#include <vector>

#include "flowline/nn/ops.hpp"
#include "flowline/nn/tensor.hpp"

namespace flowline::nn {

struct LossWeights {
  double adv = 1.0;
  double pixel = 100.0;
  double lc = 1.0;
  double fft = 0.05;
};

/// Mean absolute difference between generated and ground-truth drawings.
template <typename T>
Tensor<T> loss_pixel(const Tensor<T>& pred, const Tensor<T>& target) {
  return mean_abs_diff(pred, target);
}

/// Mean absolute difference between the regressed control map and the LCM.
template <typename T>
Tensor<T> loss_control(const Tensor<T>& alpha_hat, const Tensor<T>& lcm) {
  return mean_abs_diff(alpha_hat, lcm);
}

/// Same quantity as metrics::fft_distance, averaged over planes.
template <typename T>
Tensor<T> loss_fft(const Tensor<T>& pred, const Tensor<T>& target) {
  return fft_l1(pred, target);
}

enum class Role { Generator, Discriminator };

/// Discriminator: mean softplus(-real) + mean softplus(fake).
/// Generator (non-saturating): mean softplus(-fake); d_real is ignored.
template <typename T>
Tensor<T> loss_adversarial(const Tensor<T>& d_real, const Tensor<T>& d_fake, Role role) {
  if (role == Role::Generator) return softplus_mean(d_fake, T(-1));
  if (!d_real.defined()) throw std::invalid_argument("discriminator loss needs real logits");
  const Tensor<T> real = softplus_mean(d_real, T(-1));
  const Tensor<T> fake = softplus_mean(d_fake, T(1));
  return weighted_sum<T>({real, fake}, {T(1), T(1)});
}

template <typename T>
struct LossParts {
  Tensor<T> adv;
  Tensor<T> pixel;
  Tensor<T> lc;
  Tensor<T> fft;
};

template <typename T>
Tensor<T> loss_total(const LossParts<T>& parts, const LossWeights& w) {
  if (!parts.adv.defined() || !parts.pixel.defined() || !parts.lc.defined() || !parts.fft.defined())
    throw std::invalid_argument("loss_total needs all four components");
  return weighted_sum<T>({parts.adv, parts.pixel, parts.lc, parts.fft},
                         {static_cast<T>(w.adv), static_cast<T>(w.pixel), static_cast<T>(w.lc), static_cast<T>(w.fft)});
}

inline double loss_total(double adv, double pixel, double lc, double fft, const LossWeights& w) {
  return w.adv * adv + w.pixel * pixel + w.lc * lc + w.fft * fft;
}

}  // namespace flowline::nn
