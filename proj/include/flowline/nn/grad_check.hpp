#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flowline/core/error.hpp"
#include "flowline/nn/tensor.hpp"

namespace flowline::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `loss()` with central differences
/// (f(x+eps) - f(x-eps)) / 2eps on a random subset of coordinates drawn from
/// `wrt`. Relative error is |a - n| / max(|a|, |n|, floor).
template <typename F>
GradCheckResult grad_check(F&& loss, const std::vector<Tensor<double>>& wrt, double eps,
                           std::size_t min_coordinates = 100, std::uint64_t seed = 0, double floor = 1e-6) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("grad_check: epsilon must be positive and finite");
  if (wrt.empty()) throw std::invalid_argument("grad_check: nothing to differentiate");

  for (auto t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor<double> out = loss();
  if (!std::isfinite(out.item())) throw Error("grad_check: non-finite loss");
  out.backward();

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < wrt.size(); ++t)
    for (std::size_t i = 0; i < wrt[t].size(); ++i) coords.emplace_back(t, i);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(coords.size(), min_coordinates));

  std::vector<std::vector<double>> analytic;
  for (const auto& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckResult result;
  NoGradGuard guard;
  for (const auto& [t, i] : coords) {
    auto values = Tensor<double>(wrt[t]).mutable_values();
    const double original = values[i];
    values[i] = original + eps;
    const double fp = loss().item();
    values[i] = original - eps;
    const double fm = loss().item();
    values[i] = original;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw Error("grad_check: non-finite loss under perturbation");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[t][i];
    if (!std::isfinite(a)) throw Error("grad_check: non-finite analytic gradient");
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
    ++result.coordinates;
  }
  return result;
}

}  // namespace flowline::nn
