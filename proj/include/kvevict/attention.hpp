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

// One decode step of softmax attention, either over every earlier token or
// restricted to the set of tokens still held in the cache. Weights are kept
// sparsely over that set; evicted positions are implicitly zero.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "kvevict/error.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

struct StepAttention {
  TokenIndex step = 0;
  std::vector<TokenIndex> tokens;  // ascending
  std::vector<double> weights;     // parallel to tokens
  // log D_i. D_i itself overflows for large logits, so only its log is kept.
  double log_normalizer = 0.0;

  double normalizer() const { return std::exp(log_normalizer); }

  double weight_of(TokenIndex j) const {
    const auto it = std::lower_bound(tokens.begin(), tokens.end(), j);
    if (it == tokens.end() || *it != j) return 0.0;
    return weights[static_cast<std::size_t>(it - tokens.begin())];
  }

  bool contains(TokenIndex j) const {
    return std::binary_search(tokens.begin(), tokens.end(), j);
  }

  double total() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

// Softmax over the given logits, stabilised by subtracting the maximum.
// `tokens` must be ascending and parallel to `logits`.
inline StepAttention attention_from_logits(TokenIndex step, std::vector<TokenIndex> tokens,
                                           std::span<const double> logits) {
  if (tokens.empty()) fail(ErrorCode::kEmptySet, "attention over an empty set");
  const double peak = *std::max_element(logits.begin(), logits.end());
  StepAttention out;
  out.step = step;
  out.tokens = std::move(tokens);
  out.weights.resize(logits.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out.weights[j] = std::exp(logits[j] - peak);
    sum += out.weights[j];
  }
  for (double& w : out.weights) w /= sum;
  out.log_normalizer = peak + std::log(sum);
  return out;
}

namespace detail {

inline void check_step(const AttentionTrace& trace, TokenIndex i) {
  if (i < 1 || i > trace.size()) {
    fail(ErrorCode::kIndexOutOfRange,
         "step " + std::to_string(i) + " outside [1, " + std::to_string(trace.size()) + "]");
  }
}

inline std::vector<TokenIndex> normalized_set(std::span<const TokenIndex> set, TokenIndex i) {
  if (set.empty()) fail(ErrorCode::kEmptySet, "attention set is empty");
  std::vector<TokenIndex> sorted(set.begin(), set.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 1 || sorted.back() > i) {
    fail(ErrorCode::kIndexOutOfRange, "attention set must lie in [1, " + std::to_string(i) + "]");
  }
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    fail(ErrorCode::kDuplicateToken, "attention set contains a repeated token");
  }
  return sorted;
}

}  // namespace detail

// Softmax of Q_i against K_j for j in `set` (any subset of [i], i need not be
// a member). Used by deviation metrics, where the cache after eviction may
// no longer contain the query token.
inline StepAttention restricted_step(const AttentionTrace& trace, TokenIndex i,
                                     std::span<const TokenIndex> set) {
  detail::check_step(trace, i);
  std::vector<TokenIndex> tokens = detail::normalized_set(set, i);
  std::vector<double> logits(tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) logits[j] = trace.logit(i, tokens[j]);
  return attention_from_logits(i, std::move(tokens), logits);
}

// Full causal attention of token i over tokens 1..i.
inline StepAttention exact_step(const AttentionTrace& trace, TokenIndex i) {
  detail::check_step(trace, i);
  std::vector<TokenIndex> tokens(i);
  std::vector<double> logits(i);
  const auto q = trace.queries().row(static_cast<Eigen::Index>(i - 1));
  for (TokenIndex j = 1; j <= i; ++j) {
    tokens[j - 1] = j;
    logits[j - 1] = q.dot(trace.keys().row(static_cast<Eigen::Index>(j - 1)));
  }
  return attention_from_logits(i, std::move(tokens), logits);
}

// Attention of token i over the cached set S (i must be cached). Equal to
// exponentiating the full row with evicted columns zeroed and subtracting
// their exp(0) contributions from the normaliser.
inline StepAttention masked_step(const AttentionTrace& trace, TokenIndex i,
                                 std::span<const TokenIndex> set) {
  if (set.empty()) fail(ErrorCode::kEmptySet, "cached set is empty");
  if (std::find(set.begin(), set.end(), i) == set.end()) {
    fail(ErrorCode::kCurrentTokenEvicted,
         "token " + std::to_string(i) + " is not in its own attention set");
  }
  return restricted_step(trace, i, set);
}

}  // namespace kvevict
