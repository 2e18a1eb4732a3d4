#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>

#include "flowline/core/image.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/etf.hpp"
#include "flowline/fdog.hpp"

namespace flowline::service {

struct ImageEntry {
  ImageBuf image;
  Bytes png;  ///< bytes as uploaded
};

struct LcmEntry {
  LineControlMatrix lcm;
  std::string image_id;
};

/// In-memory store of uploaded images and control matrices keyed by random
/// 128-bit hex ids, bounded by an approximate byte budget with LRU eviction.
/// Entries are handed out as shared pointers, so eviction never invalidates
/// an in-flight request. Each image's flow field is computed at most once
/// while the image is resident; concurrent requests wait for the first.
class SessionStore {
 public:
  explicit SessionStore(std::size_t capacity_bytes, EtfParams etf = {})
      : capacity_(capacity_bytes), etf_params_(etf), rng_(std::random_device{}()) {}

  std::string put_image(ImageBuf image, Bytes png) {
    auto entry = std::make_shared<ImageEntry>(ImageEntry{std::move(image), std::move(png)});
    const std::size_t cost = entry->image.size() * sizeof(float) + entry->png.size();
    std::lock_guard lock(mu_);
    return insert_locked(Slot{entry, nullptr, {}, cost, {}});
  }

  std::string put_lcm(LineControlMatrix lcm, std::string image_id) {
    const std::size_t cost = lcm.data().size() * sizeof(float) + image_id.size();
    auto entry = std::make_shared<LcmEntry>(LcmEntry{std::move(lcm), std::move(image_id)});
    std::lock_guard lock(mu_);
    return insert_locked(Slot{nullptr, entry, {}, cost, {}});
  }

  std::shared_ptr<const ImageEntry> image(const std::string& id) {
    std::lock_guard lock(mu_);
    Slot* s = touch_locked(id);
    return s ? s->image : nullptr;
  }

  std::shared_ptr<const LcmEntry> lcm(const std::string& id) {
    std::lock_guard lock(mu_);
    Slot* s = touch_locked(id);
    return s ? s->lcm : nullptr;
  }

  /// Flow field of a stored image, or nullptr for an unknown id.
  std::shared_ptr<const FlowField> etf(const std::string& id) {
    std::shared_ptr<const ImageEntry> img;
    std::shared_future<std::shared_ptr<const FlowField>> pending;
    std::promise<std::shared_ptr<const FlowField>> promise;
    bool compute = false;
    {
      std::lock_guard lock(mu_);
      Slot* s = touch_locked(id);
      if (!s || !s->image) return nullptr;
      if (!s->etf.valid()) {
        s->etf = promise.get_future().share();
        compute = true;
      }
      pending = s->etf;
      img = s->image;
    }
    if (compute) {
      try {
        auto field = std::make_shared<const FlowField>(compute_etf(img->image, etf_params_));
        etf_computations_.fetch_add(1);
        account_etf(id, *field);
        promise.set_value(std::move(field));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return pending.get();
  }

  std::size_t etf_computations() const { return etf_computations_.load(); }
  std::size_t bytes_used() const {
    std::lock_guard lock(mu_);
    return used_;
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return slots_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  struct Slot {
    std::shared_ptr<const ImageEntry> image;
    std::shared_ptr<const LcmEntry> lcm;
    std::shared_future<std::shared_ptr<const FlowField>> etf;
    std::size_t cost = 0;
    std::list<std::string>::iterator lru;
  };

  std::string new_id_locked() {
    for (;;) {
      char buf[33];
      std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                    static_cast<unsigned long long>(rng_()));
      if (!slots_.count(buf)) return buf;
    }
  }

  std::string insert_locked(Slot slot) {
    const std::string id = new_id_locked();
    lru_.push_front(id);
    slot.lru = lru_.begin();
    used_ += slot.cost;
    slots_.emplace(id, std::move(slot));
    evict_locked(id);
    return id;
  }

  Slot* touch_locked(const std::string& id) {
    auto it = slots_.find(id);
    if (it == slots_.end()) return nullptr;
    lru_.splice(lru_.begin(), lru_, it->second.lru);
    return &it->second;
  }

  void account_etf(const std::string& id, const FlowField& f) {
    std::lock_guard lock(mu_);
    auto it = slots_.find(id);
    if (it == slots_.end()) return;
    lru_.splice(lru_.begin(), lru_, it->second.lru);
    const std::size_t extra = static_cast<std::size_t>(f.width()) * f.height() * (sizeof(Vec2) + sizeof(float));
    it->second.cost += extra;
    used_ += extra;
    evict_locked(id);
  }

  // The most recent entry always survives, even when it alone exceeds the budget.
  void evict_locked(const std::string& keep) {
    while (used_ > capacity_ && lru_.size() > 1) {
      const std::string victim = lru_.back();
      if (victim == keep) break;  // unreachable while keep sits at the front
      lru_.pop_back();
      auto it = slots_.find(victim);
      used_ -= it->second.cost;
      slots_.erase(it);
    }
  }

  std::size_t capacity_;
  EtfParams etf_params_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::unordered_map<std::string, Slot> slots_;
  std::list<std::string> lru_;
  std::size_t used_ = 0;
  std::atomic<std::size_t> etf_computations_{0};
};

}  // namespace flowline::service
