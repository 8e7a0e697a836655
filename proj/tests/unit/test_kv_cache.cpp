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

#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

namespace kvevict {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInconsistentState;
}

std::vector<double> key_of(double v, std::size_t d = 2) { return std::vector<double>(d, v); }

TEST(RingQueue, FifoWithDrop) {
  RingQueue<int> q(3);
  EXPECT_FALSE(q.push(1).has_value());
  EXPECT_FALSE(q.push(2).has_value());
  EXPECT_FALSE(q.push(3).has_value());
  EXPECT_TRUE(q.full());
  EXPECT_EQ(q.push(4), std::optional<int>(1));
  EXPECT_EQ(q.to_vector(), (std::vector<int>{2, 3, 4}));
  EXPECT_TRUE(q.erase(3));
  EXPECT_FALSE(q.erase(3));
  EXPECT_EQ(q.to_vector(), (std::vector<int>{2, 4}));
  q.push(5);
  q.push(6);
  EXPECT_EQ(q.to_vector(), (std::vector<int>{4, 5, 6}));
  EXPECT_EQ(q.front(), 4);
}

TEST(RingQueue, ZeroCapacityDropsEverything) {
  RingQueue<int> q(0);
  EXPECT_EQ(q.push(7), std::optional<int>(7));
  EXPECT_TRUE(q.empty());
}

TEST(CacheState, AdmitUpToBudget) {
  CacheState c(3, 2, 1);
  const EvictionEvent e1 = c.admit(1, key_of(1));
  EXPECT_EQ(c.tracked(), std::vector<TokenIndex>{1});
  EXPECT_FALSE(e1.evicted.has_value());
  c.admit(2, key_of(2));
  c.admit(3, key_of(3));
  EXPECT_EQ(c.tracked(), (std::vector<TokenIndex>{1, 2, 3}));
  std::set<std::size_t> slots{*c.slot_of(1), *c.slot_of(2), *c.slot_of(3)};
  EXPECT_EQ(slots.size(), 3u);
  EXPECT_EQ(code_of([&] { c.admit(4, key_of(4)); }), ErrorCode::kCacheFull);
}

TEST(CacheState, AdmitErrors) {
  CacheState c(3, 2, 1);
  c.admit(1, key_of(1));
  EXPECT_EQ(code_of([&] { c.admit(1, key_of(1)); }), ErrorCode::kDuplicateToken);
  EXPECT_EQ(code_of([&] { c.admit(2, key_of(1, 3)); }), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([] { CacheState(0, 2, 0); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(code_of([] { CacheState(2, 2, 3); }), ErrorCode::kInvalidConfig);
}

TEST(CacheState, SwapOverwritesVictimSlotInPlace) {
  CacheState c(3, 2, 1);
  for (TokenIndex t = 1; t <= 3; ++t) c.admit(t, key_of(static_cast<double>(t)));
  const std::size_t slot3 = *c.slot_of(3);
  const double* addr = c.slot_address(slot3);
  const EvictionEvent e = c.swap(3, 4, key_of(4));
  EXPECT_EQ(c.tracked(), (std::vector<TokenIndex>{1, 2, 4}));
  EXPECT_EQ(e.evicted, std::optional<TokenIndex>(3));
  EXPECT_EQ(e.slot, std::optional<std::size_t>(slot3));
  EXPECT_EQ(c.slot_of(4), std::optional<std::size_t>(slot3));
  EXPECT_EQ(c.slot_address(slot3), addr);
  EXPECT_EQ(c.key(slot3)[0], 4.0);
  EXPECT_EQ(c.slot_token(slot3), 4u);
}

TEST(CacheState, SwapDroppingIncomingTokenChangesNothing) {
  CacheState c(3, 2, 2);
  for (TokenIndex t = 1; t <= 3; ++t) c.admit(t, key_of(static_cast<double>(t)));
  const auto before = c.tracked();
  const auto recent = c.recent();
  const EvictionEvent e = c.swap(5, 5, key_of(5));
  EXPECT_EQ(c.tracked(), before);
  EXPECT_EQ(c.recent(), recent);
  EXPECT_EQ(e.evicted, std::optional<TokenIndex>(5));
  EXPECT_FALSE(e.slot.has_value());
  EXPECT_EQ(c.step(), 5u);
}

TEST(CacheState, SwapErrors) {
  CacheState c(3, 2, 1);
  c.admit(1, key_of(1));
  EXPECT_EQ(code_of([&] { c.swap(1, 2, key_of(2)); }), ErrorCode::kNotFull);
  c.admit(2, key_of(2));
  c.admit(3, key_of(3));
  EXPECT_EQ(code_of([&] { c.swap(7, 4, key_of(4)); }), ErrorCode::kEvictNotTracked);
  EXPECT_EQ(code_of([&] { c.swap(1, 2, key_of(2)); }), ErrorCode::kDuplicateToken);
}

TEST(CacheState, EventJsonLine) {
  EXPECT_EQ(to_json_line({4, 2, 4, 1}), R"({"i":4,"evicted":2,"admitted":4,"slot":1})");
  EXPECT_EQ(to_json_line({2, std::nullopt, 2, 1}), R"({"i":2,"evicted":null,"admitted":2,"slot":1})");
  EXPECT_EQ(to_json_line({9, 9, 9, std::nullopt}), R"({"i":9,"evicted":9,"admitted":9,"slot":null})");
}

// Random admit/swap sequences checked against a list model of the recent
// queue and against the budget and slot-stability invariants.
TEST(CacheState, RandomOperationsMatchReference) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.below(8);
    const std::size_t recent_cap = rng.below(k + 1);
    CacheState c(k, 3, recent_cap);
    oracle::ReferenceRecent ref(recent_cap);
    std::set<TokenIndex> tracked;
    std::set<const double*> addresses;
    for (std::size_t s = 0; s < k; ++s) addresses.insert(c.slot_address(s));
    for (TokenIndex i = 1; i <= 40; ++i) {
      if (!c.full()) {
        const EvictionEvent e = c.admit(i, key_of(static_cast<double>(i), 3));
        EXPECT_FALSE(e.evicted.has_value());
        tracked.insert(i);
        ref.admitted(i);
      } else {
        std::vector<TokenIndex> cands(tracked.begin(), tracked.end());
        cands.push_back(i);
        const TokenIndex victim = cands[rng.below(cands.size())];
        const EvictionEvent e = c.swap(victim, i, key_of(static_cast<double>(i), 3));
        EXPECT_EQ(e.evicted, std::optional<TokenIndex>(victim));
        if (victim != i) {
          tracked.erase(victim);
          tracked.insert(i);
          ref.evicted(victim);
          ref.admitted(i);
        }
      }
      EXPECT_EQ(c.size(), std::min<std::size_t>(i, k));
      EXPECT_EQ(c.tracked(), std::vector<TokenIndex>(tracked.begin(), tracked.end()));
      EXPECT_EQ(c.recent(), ref.contents());
      for (TokenIndex t : tracked) {
        const std::size_t slot = *c.slot_of(t);
        EXPECT_EQ(c.slot_token(slot), t);
        EXPECT_EQ(c.key(slot)[0], static_cast<double>(t));
        EXPECT_TRUE(addresses.contains(c.slot_address(slot)));
      }
    }
  }
}

TEST(Quantization, ZeroKeysUnchanged) {
  CacheState c(2, 3, 1);
  c.admit(1, key_of(0.0, 3));
  const CacheState q = quantize_slots(c, {4});
  for (double v : q.key(0)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(q.tracked(), c.tracked());
}

TEST(Quantization, FourBitHandExample) {
  std::vector<double> key{1.0, -1.0};
  const double scale = fake_quantize(key, {4});
  EXPECT_DOUBLE_EQ(scale, 1.0 / 7.0);
  EXPECT_NEAR(key[0], 1.0, 1.0 / 7.0);
  EXPECT_NEAR(key[1], -1.0, 1.0 / 7.0);
}

TEST(Quantization, RejectsOtherWidths) {
  std::vector<double> key{1.0};
  EXPECT_EQ(code_of([&] { fake_quantize(key, {6}); }), ErrorCode::kInvalidConfig);
}

// Per-entry error is bounded by half the scale for both widths and the 8-bit
// bound is the tighter one. The realised 8-bit error can still exceed the
// 4-bit error on a given vector when 4-bit rounding happens to land well.
TEST(Quantization, ErrorBoundsOverRandomVectors) {
  Rng rng(41);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> x(1 + rng.below(16));
    for (double& v : x) v = rng.normal() * rng.uniform(0.01, 10.0);
    auto x4 = x, x8 = x;
    const double s4 = fake_quantize(x4, {4});
    const double s8 = fake_quantize(x8, {8});
    EXPECT_LE(s8, s4);
    for (std::size_t j = 0; j < x.size(); ++j) {
      EXPECT_LE(std::abs(x4[j] - x[j]), s4 / 2 * (1 + 1e-12));
      EXPECT_LE(std::abs(x8[j] - x[j]), s8 / 2 * (1 + 1e-12));
    }
  }
}

TEST(Quantization, CacheQuantizeKeepsTrackedSet) {
  CacheState c(3, 4, 1);
  Rng rng(5);
  for (TokenIndex t = 1; t <= 3; ++t) {
    std::vector<double> key(4);
    for (double& v : key) v = rng.normal();
    c.admit(t, key);
  }
  const CacheState q = quantize_slots(c, {8});
  EXPECT_EQ(q.tracked(), c.tracked());
  for (std::size_t s = 0; s < 3; ++s) {
    double peak = 0.0;
    for (double v : c.key(s)) peak = std::max(peak, std::abs(v));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_LE(std::abs(q.key(s)[j] - c.key(s)[j]), peak / 127 / 2 * (1 + 1e-12));
  }
}

}  // namespace
}  // namespace kvevict
