#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowline/core/error.hpp"
#include "flowline/nn/losses.hpp"
#include "flowline/nn/networks.hpp"
#include "flowline/nn/ops.hpp"
#include "flowline/nn/optim.hpp"

namespace flowline::nn {

struct TrainConfig {
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double learning_rate = 2e-4;
  int epochs = 200;
  int batch_size = 1;
  int image_size = 64;
  LossWeights weights;
  std::uint64_t seed = 0;
  int base_ch = 64;
  int disc_base_ch = 64;
  std::vector<int> disc_strides{2, 2, 2, 1, 1, 1};
  int disc_min_input = 64;
  std::int64_t max_steps = 0;  ///< 0 runs every epoch to completion

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0))
      throw std::invalid_argument("Adam betas must lie in (0,1)");
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch size must be >= 1");
    if (base_ch < 1 || disc_base_ch < 1) throw std::invalid_argument("channel widths must be >= 1");
    if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
    const auto& w = weights;
    if (w.adv < 0 || w.pixel < 0 || w.lc < 0 || w.fft < 0) throw std::invalid_argument("loss weights must be >= 0");
  }

  AdamParams adam() const { return {learning_rate, adam_beta1, adam_beta2, 1e-8}; }
  DiscriminatorConfig discriminator(int in_ch) const { return {in_ch, disc_base_ch, disc_strides, disc_min_input}; }

  // Distinct, reproducible streams per network.
  std::uint64_t generator_seed() const { return seed * 4 + 1; }
  std::uint64_t discriminator_seed() const { return seed * 4 + 2; }
  std::uint64_t regressor_seed() const { return seed * 4 + 3; }
};

/// Unused components stay zero.
struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double d_loss = 0.0;
  double adv = 0.0;
  double pixel = 0.0;
  double lc = 0.0;
  double fft = 0.0;
  double total = 0.0;

  friend bool operator==(const StepLog&, const StepLog&) = default;
};

inline nlohmann::json to_json(const StepLog& s) {
  return {{"step", s.step}, {"epoch", s.epoch}, {"d_loss", s.d_loss}, {"adv", s.adv},
          {"pixel", s.pixel}, {"lc", s.lc},       {"fft", s.fft},       {"total", s.total}};
}

using StepCallback = std::function<void(const StepLog&)>;

template <typename T>
struct EtfExample {
  Tensor<T> image;  ///< [1,3,H,W] in [-1,1]
  Tensor<T> etf;    ///< [1,2,H,W]
};

template <typename T>
struct DrawingExample {
  Tensor<T> image;    ///< [1,3,H,W] in [-1,1]
  Tensor<T> etf;      ///< [1,2,H,W] ground-truth field
  Tensor<T> drawing;  ///< [1,1,H,W] in [0,1]
  T alpha = 0;
};

namespace detail {

/// Batches of indices, epoch by epoch, each epoch a permutation seeded by seed + epoch.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t count, const TrainConfig& cfg) : count_(count), cfg_(cfg) {}

  template <typename Fn>
  void run(Fn&& fn) {
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::vector<std::size_t> order(count_);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(cfg_.seed + static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t b = 0; b < order.size(); b += cfg_.batch_size) {
        if (cfg_.max_steps > 0 && step >= cfg_.max_steps) return;
        const std::size_t e = std::min(order.size(), b + cfg_.batch_size);
        fn(std::vector<std::size_t>(order.begin() + b, order.begin() + e), step, epoch);
        ++step;
      }
    }
  }

 private:
  std::size_t count_;
  const TrainConfig& cfg_;
};

template <typename T, typename Get>
Tensor<T> gather(const std::vector<std::size_t>& idx, Get get) {
  if (idx.size() == 1) return get(idx.front());
  std::vector<Tensor<T>> parts;
  for (std::size_t i : idx) parts.push_back(get(i));
  Shape s = parts.front().shape();
  std::vector<T> v;
  for (const auto& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
  s.n = static_cast<int>(parts.size());
  return Tensor<T>::from(s, std::move(v));
}

inline void check_finite(const StepLog& s) {
  for (double v : {s.d_loss, s.adv, s.pixel, s.lc, s.fft, s.total})
    if (!std::isfinite(v)) throw Error("non-finite loss at step " + std::to_string(s.step));
}

/// Disables parameter gradients for its lifetime.
template <typename T>
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<Tensor<T>> params) : params_(std::move(params)) {
    for (auto& p : params_) {
      previous_.push_back(p.requires_grad());
      p.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor<T>> params_;
  std::vector<bool> previous_;
};

/// One discriminator update on (condition, real) vs (condition, fake).
template <typename T>
double discriminator_step(const PatchDiscriminator<T>& d, Adam<T>& opt, const Tensor<T>& cond, const Tensor<T>& real,
                          const Tensor<T>& fake) {
  const Tensor<T> d_real = d.forward(concat_channels<T>({cond, real}));
  const Tensor<T> d_fake = d.forward(concat_channels<T>({cond, fake.detach()}));
  Tensor<T> loss = loss_adversarial(d_real, d_fake, Role::Discriminator);
  opt.zero_grad();
  loss.backward();
  opt.step();
  return static_cast<double>(loss.item());
}

}  // namespace detail

template <typename T>
struct I2FTrainResult {
  I2FGenerator<T> generator;
  std::vector<StepLog> history;
};

/// Alternating D/G updates; G minimizes adv + lambda_pixel * L1(field, target).
template <typename T>
I2FTrainResult<T> train_i2fnet(const std::vector<EtfExample<T>>& data, const TrainConfig& cfg,
                               const StepCallback& on_step = {}) {
  cfg.validate();
  if (data.empty()) throw Error("train_i2fnet: no training data");
  I2FGenerator<T> g(cfg.base_ch, cfg.generator_seed());
  PatchDiscriminator<T> d(cfg.discriminator(3 + 2), cfg.discriminator_seed());
  Adam<T> opt_g(g.parameters(), cfg.adam());
  Adam<T> opt_d(d.parameters(), cfg.adam());
  std::vector<StepLog> history;

  detail::BatchSchedule(data.size(), cfg).run([&](const std::vector<std::size_t>& idx, std::int64_t step, int epoch) {
    const Tensor<T> p = detail::gather<T>(idx, [&](std::size_t i) { return data[i].image; });
    const Tensor<T> e = detail::gather<T>(idx, [&](std::size_t i) { return data[i].etf; });
    StepLog log{step, epoch};
    const Tensor<T> fake = g.forward(p);
    log.d_loss = detail::discriminator_step(d, opt_d, p, e, fake);
    {
      detail::FreezeGuard<T> freeze(d.parameters());
      const Tensor<T> adv = loss_adversarial(Tensor<T>{}, d.forward(concat_channels<T>({p, fake})), Role::Generator);
      const Tensor<T> l1 = mean_abs_diff(fake, e);
      Tensor<T> total =
          weighted_sum<T>({adv, l1}, {static_cast<T>(cfg.weights.adv), static_cast<T>(cfg.weights.pixel)});
      opt_g.zero_grad();
      total.backward();
      opt_g.step();
      log.adv = static_cast<double>(adv.item());
      log.pixel = static_cast<double>(l1.item());
      log.total = static_cast<double>(total.item());
    }
    detail::check_finite(log);
    history.push_back(log);
    if (on_step) on_step(log);
  });
  return {std::move(g), std::move(history)};
}

template <typename T>
struct LcrTrainResult {
  LineControlRegressor<T> regressor;
  std::vector<StepLog> history;
};

/// Minimizes mean |R(drawing, etf) - alpha| on ground-truth drawings.
template <typename T>
LcrTrainResult<T> train_lcr(const std::vector<DrawingExample<T>>& data, const TrainConfig& cfg, LcrConfig arch,
                            const StepCallback& on_step = {}) {
  cfg.validate();
  if (data.empty()) throw Error("train_lcr: no training data");
  LineControlRegressor<T> r(arch, cfg.regressor_seed());
  Adam<T> opt(r.parameters(), cfg.adam());
  std::vector<StepLog> history;
  detail::BatchSchedule(data.size(), cfg).run([&](const std::vector<std::size_t>& idx, std::int64_t step, int epoch) {
    const Tensor<T> c = detail::gather<T>(idx, [&](std::size_t i) { return data[i].drawing; });
    const Tensor<T> e = detail::gather<T>(idx, [&](std::size_t i) { return data[i].etf; });
    const Tensor<T> a = detail::gather<T>(idx, [&](std::size_t i) {
      const Shape s = data[i].drawing.shape();
      return Tensor<T>::full(s, data[i].alpha);
    });
    Tensor<T> loss = loss_control(r.forward(c, e), a);
    opt.zero_grad();
    loss.backward();
    opt.step();
    StepLog log{step, epoch};
    log.lc = log.total = static_cast<double>(loss.item());
    detail::check_finite(log);
    history.push_back(log);
    if (on_step) on_step(log);
  });
  return {std::move(r), std::move(history)};
}

template <typename T>
struct DfgTrainResult {
  DoubleFlowGenerator<T> generator;
  std::vector<StepLog> history;
};

/// Full objective: adv + pixel + control + spectral, with the field coming
/// from the frozen I2FNet and the LCM a constant map of each sample's alpha.
/// Neither frozen network is updated.
template <typename T>
DfgTrainResult<T> train_dfg(const std::vector<DrawingExample<T>>& data, const TrainConfig& cfg,
                            const I2FGenerator<T>* frozen_i2f, const LineControlRegressor<T>* frozen_lcr,
                            const StepCallback& on_step = {}) {
  cfg.validate();
  if (!frozen_i2f) throw std::invalid_argument("train_dfg: a trained I2FNet is required");
  if (!frozen_lcr) throw std::invalid_argument("train_dfg: a trained line control regressor is required");
  if (data.empty()) throw Error("train_dfg: no training data");

  std::vector<Tensor<T>> fields;
  for (const auto& ex : data) fields.push_back(frozen_i2f->predict_field(ex.image));

  DoubleFlowGenerator<T> g(cfg.base_ch, cfg.generator_seed());
  PatchDiscriminator<T> d(cfg.discriminator(3 + 1), cfg.discriminator_seed());
  Adam<T> opt_g(g.parameters(), cfg.adam());
  Adam<T> opt_d(d.parameters(), cfg.adam());
  detail::FreezeGuard<T> freeze_lcr(frozen_lcr->parameters());
  detail::FreezeGuard<T> freeze_i2f(frozen_i2f->parameters());
  const auto& w = cfg.weights;
  std::vector<StepLog> history;

  detail::BatchSchedule(data.size(), cfg).run([&](const std::vector<std::size_t>& idx, std::int64_t step, int epoch) {
    const Tensor<T> p = detail::gather<T>(idx, [&](std::size_t i) { return data[i].image; });
    const Tensor<T> e = detail::gather<T>(idx, [&](std::size_t i) { return fields[i]; });
    const Tensor<T> c = detail::gather<T>(idx, [&](std::size_t i) { return data[i].drawing; });
    const Tensor<T> lcm = detail::gather<T>(idx, [&](std::size_t i) {
      return Tensor<T>::full(data[i].drawing.shape(), data[i].alpha);
    });
    StepLog log{step, epoch};
    const Tensor<T> fake = g.forward(p, e, lcm);
    log.d_loss = detail::discriminator_step(d, opt_d, p, c, fake);
    {
      detail::FreezeGuard<T> freeze_d(d.parameters());
      LossParts<T> parts{loss_adversarial(Tensor<T>{}, d.forward(concat_channels<T>({p, fake})), Role::Generator),
                         loss_pixel(fake, c), loss_control(frozen_lcr->forward(fake, e), lcm), loss_fft(fake, c)};
      Tensor<T> total = loss_total(parts, w);
      opt_g.zero_grad();
      total.backward();
      opt_g.step();
      log.adv = static_cast<double>(parts.adv.item());
      log.pixel = static_cast<double>(parts.pixel.item());
      log.lc = static_cast<double>(parts.lc.item());
      log.fft = static_cast<double>(parts.fft.item());
      log.total = static_cast<double>(total.item());
    }
    detail::check_finite(log);
    history.push_back(log);
    if (on_step) on_step(log);
  });
  return {std::move(g), std::move(history)};
}

}  // namespace flowline::nn
