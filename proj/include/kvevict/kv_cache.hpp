// Copyright 2026 The kvevict Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Budget-k KV cache. Slot storage is allocated once; an eviction overwrites
// the victim's slot in place. The most recently admitted tracked tokens are
// kept in a fixed-capacity ring buffer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kvevict/error.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

// Fixed-capacity FIFO over a preallocated buffer. push() on a full queue
// drops the oldest element and returns it.
template <typename T>
class RingQueue {
 public:
  explicit RingQueue(std::size_t capacity) : buffer_(capacity) {}

  std::size_t capacity() const { return buffer_.size(); }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  bool full() const { return count_ == buffer_.size(); }

  // i = 0 is the oldest element.
  const T& operator[](std::size_t i) const { return buffer_[(head_ + i) % buffer_.size()]; }
  const T& front() const { return (*this)[0]; }

  std::optional<T> push(const T& value) {
    if (buffer_.empty()) return value;
    std::optional<T> dropped;
    if (full()) {
      dropped = buffer_[head_];
      head_ = (head_ + 1) % buffer_.size();
      --count_;
    }
    buffer_[(head_ + count_) % buffer_.size()] = value;
    ++count_;
    return dropped;
  }

  bool contains(const T& value) const { return position(value).has_value(); }

  // Removes one occurrence, preserving the order of the others.
  bool erase(const T& value) {
    const auto pos = position(value);
    if (!pos) return false;
    for (std::size_t i = *pos; i + 1 < count_; ++i) {
      buffer_[(head_ + i) % buffer_.size()] = buffer_[(head_ + i + 1) % buffer_.size()];
    }
    --count_;
    return true;
  }

  std::vector<T> to_vector() const {
    std::vector<T> out;
    out.reserve(count_);
    for (std::size_t i = 0; i < count_; ++i) out.push_back((*this)[i]);
    return out;
  }

 private:
  std::optional<std::size_t> position(const T& value) const {
    for (std::size_t i = 0; i < count_; ++i) {
      if ((*this)[i] == value) return i;
    }
    return std::nullopt;
  }

  std::vector<T> buffer_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

struct EvictionEvent {
  TokenIndex step = 0;
  std::optional<TokenIndex> evicted;  // none iff the cache was below budget
  TokenIndex admitted = 0;
  // Slot written, none when the incoming token was itself the victim.
  std::optional<std::size_t> slot;

  friend bool operator==(const EvictionEvent&, const EvictionEvent&) = default;
};

// One JSON-lines record: {"i":..,"evicted":..,"admitted":..,"slot":..}.
inline std::string to_json_line(const EvictionEvent& e) {
  nlohmann::ordered_json j;
  j["i"] = e.step;
  j["evicted"] = e.evicted ? nlohmann::ordered_json(*e.evicted) : nlohmann::ordered_json(nullptr);
  j["admitted"] = e.admitted;
  j["slot"] = e.slot ? nlohmann::ordered_json(*e.slot) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

// Symmetric uniform quantizer with one scale per slot:
// scale = max|x| / (2^(bits-1) - 1).
struct QuantizationSpec {
  int bits = 8;

  void validate() const {
    if (bits != 4 && bits != 8) fail(ErrorCode::kInvalidConfig, "quantization bits must be 4 or 8");
  }
  double levels() const { return static_cast<double>((1 << (bits - 1)) - 1); }
};

// Quantize-dequantize a vector in place; returns the scale used.
inline double fake_quantize(std::span<double> values, const QuantizationSpec& spec) {
  spec.validate();
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  const double levels = spec.levels();
  const double scale = peak / levels;
  for (double& v : values) {
    const double q = std::clamp(std::nearbyint(v / scale), -levels, levels);
    v = q * scale;
  }
  return scale;
}

class CacheState {
 public:
  CacheState(std::size_t budget, std::size_t dim, std::size_t recent_capacity)
      : budget_(budget),
        dim_(dim),
        slot_tokens_(budget, kEmptySlot),
        keys_(budget * dim, 0.0),
        recent_(recent_capacity) {
    if (budget == 0) fail(ErrorCode::kInvalidConfig, "cache budget must be positive");
    if (dim == 0) fail(ErrorCode::kInvalidConfig, "key dimension must be positive");
    if (recent_capacity > budget) {
      fail(ErrorCode::kInvalidConfig, "recent window larger than the budget");
    }
  }

  static constexpr TokenIndex kEmptySlot = 0;

  std::size_t budget() const { return budget_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return slot_of_.size(); }
  bool full() const { return size() == budget_; }
  TokenIndex step() const { return step_; }

  bool tracks(TokenIndex token) const { return slot_of_.contains(token); }

  // Tracked set S_i, ascending.
  std::vector<TokenIndex> tracked() const {
    std::vector<TokenIndex> out;
    out.reserve(slot_of_.size());
    for (const auto& [token, slot] : slot_of_) out.push_back(token);
    return out;
  }

  // Recent window, oldest first.
  std::vector<TokenIndex> recent() const { return recent_.to_vector(); }
  std::size_t recent_capacity() const { return recent_.capacity(); }
  bool is_recent(TokenIndex token) const { return recent_.contains(token); }

  std::optional<std::size_t> slot_of(TokenIndex token) const {
    const auto it = slot_of_.find(token);
    if (it == slot_of_.end()) return std::nullopt;
    return it->second;
  }

  TokenIndex slot_token(std::size_t slot) const { return slot_tokens_.at(slot); }

  std::span<const double> key(std::size_t slot) const {
    return {keys_.data() + slot * dim_, dim_};
  }

  // Address of a slot's key storage; constant for the cache's lifetime.
  const double* slot_address(std::size_t slot) const { return keys_.data() + slot * dim_; }

  // Warmup path: place `token` in the next free slot.
  EvictionEvent admit(TokenIndex token, std::span<const double> key) {
    check_key(key);
    if (full()) fail(ErrorCode::kCacheFull, "cache at budget " + std::to_string(budget_) + "; use swap");
    if (tracks(token)) fail(ErrorCode::kDuplicateToken, "token " + std::to_string(token) + " already cached");
    const std::size_t slot = next_free_++;
    write_slot(slot, token, key);
    recent_.push(token);
    step_ = std::max(step_, token);
    return EvictionEvent{token, std::nullopt, token, slot};
  }

  // Full-cache path: S_i = (S_{i-1} + {admit_token}) - {evict}. When the
  // victim is the incoming token itself nothing is written.
  EvictionEvent swap(TokenIndex evict, TokenIndex admit_token, std::span<const double> key) {
    check_key(key);
    if (!full()) fail(ErrorCode::kNotFull, "swap requires a cache at budget");
    if (tracks(admit_token)) {
      fail(ErrorCode::kDuplicateToken, "token " + std::to_string(admit_token) + " already cached");
    }
    step_ = std::max(step_, admit_token);
    if (evict == admit_token) {
      return EvictionEvent{admit_token, evict, admit_token, std::nullopt};
    }
    const auto it = slot_of_.find(evict);
    if (it == slot_of_.end()) {
      fail(ErrorCode::kEvictNotTracked, "token " + std::to_string(evict) + " is not cached");
    }
    const std::size_t slot = it->second;
    slot_of_.erase(it);
    recent_.erase(evict);
    write_slot(slot, admit_token, key);
    recent_.push(admit_token);
    return EvictionEvent{admit_token, evict, admit_token, slot};
  }

  void quantize(const QuantizationSpec& spec) {
    spec.validate();
    for (std::size_t s = 0; s < budget_; ++s) {
      if (slot_tokens_[s] == kEmptySlot) continue;
      fake_quantize(std::span<double>(keys_.data() + s * dim_, dim_), spec);
    }
  }

 private:
  void check_key(std::span<const double> key) const {
    if (key.size() != dim_) {
      fail(ErrorCode::kDimensionMismatch,
           "key has " + std::to_string(key.size()) + " entries, cache expects " + std::to_string(dim_));
    }
  }

  void write_slot(std::size_t slot, TokenIndex token, std::span<const double> key) {
    slot_tokens_[slot] = token;
    std::copy(key.begin(), key.end(), keys_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
    slot_of_.emplace(token, slot);
  }

  std::size_t budget_;
  std::size_t dim_;
  std::vector<TokenIndex> slot_tokens_;
  std::vector<double> keys_;
  std::map<TokenIndex, std::size_t> slot_of_;
  RingQueue<TokenIndex> recent_;
  std::size_t next_free_ = 0;
  TokenIndex step_ = 0;
};

inline CacheState quantize_slots(CacheState state, const QuantizationSpec& spec) {
  state.quantize(spec);
  return state;
}

}  // namespace kvevict
