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

// Eviction policies and the decode loop that drives them.
//
// Every policy sees the same per-step protocol. At step i the query attends
// over C = S_{i-1} + {i}; accumulated scores are updated from that
// attention; if the cache is below budget, i is admitted, otherwise the
// policy names one member of C to drop and S_i = C - {victim}.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvevict/attention.hpp"
#include "kvevict/error.hpp"
#include "kvevict/kv_cache.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

// h in F_score(T) = h(sum of accumulated scores over T). All three are
// non-decreasing on [0, inf), so they rank single removals identically.
enum class ScoreFunction { kIdentity, kSqrt1p, kLog1p };

inline double apply(ScoreFunction h, double z) {
  switch (h) {
    case ScoreFunction::kIdentity: return z;
    case ScoreFunction::kSqrt1p: return std::sqrt(z + 1.0);
    case ScoreFunction::kLog1p: return std::log1p(z);
  }
  return z;
}

constexpr std::string_view to_string(ScoreFunction h) {
  switch (h) {
    case ScoreFunction::kIdentity: return "identity";
    case ScoreFunction::kSqrt1p: return "sqrt1p";
    case ScoreFunction::kLog1p: return "log1p";
  }
  return "unknown";
}

inline std::optional<ScoreFunction> parse_score_function(std::string_view name) {
  for (auto h : {ScoreFunction::kIdentity, ScoreFunction::kSqrt1p, ScoreFunction::kLog1p}) {
    if (to_string(h) == name) return h;
  }
  return std::nullopt;
}

enum class PolicyKind {
  kFull,
  kLocal,
  kH2O,
  kH2Only,
  kSinkLocal,
  kSparseStrided,
  kSparseFixed,
  kTopK,
};

inline constexpr PolicyKind kAllPolicies[] = {
    PolicyKind::kFull,      PolicyKind::kLocal,         PolicyKind::kH2O,
    PolicyKind::kH2Only,    PolicyKind::kSinkLocal,     PolicyKind::kSparseStrided,
    PolicyKind::kSparseFixed, PolicyKind::kTopK,
};

constexpr std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFull: return "full";
    case PolicyKind::kLocal: return "local";
    case PolicyKind::kH2O: return "h2o";
    case PolicyKind::kH2Only: return "h2_only";
    case PolicyKind::kSinkLocal: return "sink_local";
    case PolicyKind::kSparseStrided: return "sparse_strided";
    case PolicyKind::kSparseFixed: return "sparse_fixed";
    case PolicyKind::kTopK: return "topk";
  }
  return "unknown";
}

inline std::optional<PolicyKind> parse_policy_kind(std::string_view name) {
  for (auto kind : kAllPolicies) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kH2O;
  std::size_t budget = 0;
  double recent_fraction = 0.5;
  std::size_t sink = 4;
  std::size_t stride = 8;
  ScoreFunction score = ScoreFunction::kIdentity;
  // Start a new token's accumulated score at 0 instead of its self-weight.
  bool zero_init_new_token = false;

  // floor(rho * k) most recent tokens are protected under h2o.
  std::size_t recent_window() const {
    return static_cast<std::size_t>(std::floor(recent_fraction * static_cast<double>(budget)));
  }
  std::size_t heavy_budget() const { return budget - recent_window(); }

  void validate() const {
    if (budget == 0) fail(ErrorCode::kInvalidConfig, "budget must be positive");
    if (!(recent_fraction >= 0.0 && recent_fraction <= 1.0)) {
      fail(ErrorCode::kInvalidConfig, "recent fraction must lie in [0, 1]");
    }
    if (stride == 0) fail(ErrorCode::kInvalidConfig, "stride must be positive");
  }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// Running accumulated attention score per cached token. Entries exist only
// for tokens still in the cache.
class AccumulatedScores {
 public:
  // Adds this step's weights. The query token, seen for the first time,
  // starts from its own weight (or 0 when zero_init_new_token is set).
  void update(const StepAttention& attention, bool zero_init_new_token = false) {
    for (std::size_t j = 0; j < attention.tokens.size(); ++j) {
      const TokenIndex token = attention.tokens[j];
      const double w = attention.weights[j];
      auto it = scores_.find(token);
      if (it != scores_.end()) {
        it->second += w;
      } else if (token == attention.step) {
        scores_.emplace(token, zero_init_new_token ? 0.0 : w);
      } else {
        fail(ErrorCode::kInconsistentState,
             "attention mentions token " + std::to_string(token) + " with no accumulated score");
      }
    }
    last_updated_step_ = attention.step;
  }

  void drop(TokenIndex token) { scores_.erase(token); }

  bool contains(TokenIndex token) const { return scores_.contains(token); }
  double at(TokenIndex token) const {
    const auto it = scores_.find(token);
    if (it == scores_.end()) {
      fail(ErrorCode::kInconsistentState, "no accumulated score for token " + std::to_string(token));
    }
    return it->second;
  }
  void set(TokenIndex token, double score) { scores_[token] = score; }

  std::size_t size() const { return scores_.size(); }
  const std::map<TokenIndex, double>& entries() const { return scores_; }
  TokenIndex last_updated_step() const { return last_updated_step_; }

  friend bool operator==(const AccumulatedScores&, const AccumulatedScores&) = default;

 private:
  std::map<TokenIndex, double> scores_;
  TokenIndex last_updated_step_ = 0;
};

inline AccumulatedScores update_scores(AccumulatedScores scores, const StepAttention& attention,
                                       bool zero_init_new_token = false) {
  scores.update(attention, zero_init_new_token);
  return scores;
}

// Static Sparse Transformer patterns on 0-based positions p (query) and q.
//   strided: q within the last `stride` positions, or p - q a multiple of it.
//   fixed:   q in the same block of `stride`, or q a block's summary column.
inline bool in_strided_pattern(TokenIndex i, TokenIndex j, std::size_t stride) {
  const std::size_t gap = i - j;
  return gap < stride || gap % stride == 0;
}

inline bool in_fixed_pattern(TokenIndex i, TokenIndex j, std::size_t stride) {
  const std::size_t p = i - 1;
  const std::size_t q = j - 1;
  return q / stride == p / stride || q % stride == stride - 1;
}

namespace detail {

// Argmin of `key` over candidates, lowest token on ties.
template <typename Key>
TokenIndex argmin_token(const std::vector<TokenIndex>& candidates, Key key) {
  TokenIndex best = candidates.front();
  double best_value = key(best);
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    const double v = key(candidates[c]);
    if (v < best_value || (v == best_value && candidates[c] < best)) {
      best = candidates[c];
      best_value = v;
    }
  }
  return best;
}

}  // namespace detail

// The h2o recent window at step i: the floor(rho * k) newest members of
// S_{i-1} + {i}, ascending. The incoming token always belongs to it (when
// the window is non-empty) and the oldest member of the cache's recent
// queue retires into the heavy-hitter pool, where it competes on score.
inline std::vector<TokenIndex> h2o_protected(const CacheState& cache, const PolicyConfig& policy,
                                             TokenIndex i) {
  const std::size_t window = policy.recent_window();
  if (window == 0) return {};
  const std::vector<TokenIndex> recent = cache.recent();
  const std::size_t keep = std::min(window - 1, recent.size());
  std::vector<TokenIndex> out(recent.end() - static_cast<std::ptrdiff_t>(keep), recent.end());
  out.push_back(i);
  std::sort(out.begin(), out.end());
  return out;
}

// Chooses the token to drop at step i, or none when no eviction is needed.
// `attention` is the step-i attention over S_{i-1} + {i}, and `scores` have
// already been updated with it.
//
// h2o removes the unprotected candidate v maximising F_score(C - {v}).
// Because h is non-decreasing and scores are non-negative, that is the
// candidate with the smallest accumulated score, which is what is computed
// here. With rho = 0 nothing is protected and v may be the incoming token.
inline std::optional<TokenIndex> decide(const PolicyConfig& policy, const AccumulatedScores& scores,
                                        const CacheState& cache, const StepAttention& attention,
                                        TokenIndex i) {
  if (!cache.full()) return std::nullopt;
  if (cache.tracks(i)) {
    fail(ErrorCode::kInconsistentState, "incoming token " + std::to_string(i) + " already cached");
  }
  if (policy.kind == PolicyKind::kFull) {
    fail(ErrorCode::kBudgetExceeded,
         "full policy needs budget >= n; cache of " + std::to_string(cache.budget()) + " is full at step " +
             std::to_string(i));
  }

  const std::vector<TokenIndex> previous = cache.tracked();
  std::vector<TokenIndex> all = previous;
  all.push_back(i);

  auto score_of = [&](TokenIndex t) { return scores.at(t); };
  auto oldest = [](const std::vector<TokenIndex>& set) { return *std::min_element(set.begin(), set.end()); };

  switch (policy.kind) {
    case PolicyKind::kLocal:
      return oldest(all);

    case PolicyKind::kH2Only:
      return detail::argmin_token(all, score_of);

    case PolicyKind::kH2O: {
      // With rho = 1 the only candidate left is the retiring token, so the
      // window simply slides.
      const auto window = h2o_protected(cache, policy, i);
      std::vector<TokenIndex> candidates;
      for (TokenIndex t : all) {
        if (!std::binary_search(window.begin(), window.end(), t)) candidates.push_back(t);
      }
      return detail::argmin_token(candidates, score_of);
    }

    case PolicyKind::kSinkLocal: {
      std::vector<TokenIndex> candidates;
      for (TokenIndex t : all) {
        if (t > policy.sink) candidates.push_back(t);
      }
      return candidates.empty() ? i : oldest(candidates);
    }

    case PolicyKind::kSparseStrided:
    case PolicyKind::kSparseFixed: {
      const bool strided = policy.kind == PolicyKind::kSparseStrided;
      for (TokenIndex t : previous) {  // ascending: lowest off-pattern token first
        const bool on = strided ? in_strided_pattern(i, t, policy.stride)
                                : in_fixed_pattern(i, t, policy.stride);
        if (!on) return t;
      }
      return previous.front();
    }

    case PolicyKind::kTopK:
      return detail::argmin_token(all, [&](TokenIndex t) { return attention.weight_of(t); });

    case PolicyKind::kFull:
      break;
  }
  fail(ErrorCode::kInconsistentState, "unhandled policy kind");
}

struct StepRecord {
  TokenIndex step = 0;
  std::vector<TokenIndex> tracked;  // S_i after this step, ascending
  StepAttention attention;          // over S_{i-1} + {i}
  EvictionEvent event;
};

struct SimulationRecord {
  PolicyConfig config;
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<StepRecord> steps;
  AccumulatedScores final_scores;
};

// Replays the decode loop over the whole trace under `policy`.
inline SimulationRecord run_policy(const AttentionTrace& trace, const PolicyConfig& policy) {
  trace.validate();
  policy.validate();
  if (policy.kind == PolicyKind::kFull && policy.budget < trace.size()) {
    fail(ErrorCode::kBudgetExceeded, "full policy needs budget >= n (" + std::to_string(trace.size()) + ")");
  }

  const std::size_t n = trace.size();
  const std::size_t d = trace.dim();
  CacheState cache(policy.budget, d, policy.recent_window());
  AccumulatedScores scores;

  SimulationRecord record;
  record.config = policy;
  record.n = n;
  record.d = d;
  record.steps.reserve(n);

  for (TokenIndex i = 1; i <= n; ++i) {
    std::vector<TokenIndex> attended = cache.tracked();
    attended.push_back(i);
    StepAttention attention = masked_step(trace, i, attended);
    scores.update(attention, policy.zero_init_new_token);

    const auto key_row = trace.keys().row(static_cast<Eigen::Index>(i - 1));
    const std::span<const double> key(key_row.data(), d);

    EvictionEvent event;
    if (!cache.full()) {
      event = cache.admit(i, key);
    } else {
      const auto victim = decide(policy, scores, cache, attention, i);
      if (!victim) fail(ErrorCode::kInconsistentState, "full cache but no victim chosen");
      event = cache.swap(*victim, i, key);
      scores.drop(*victim);
    }
    record.steps.push_back(StepRecord{i, cache.tracked(), std::move(attention), event});
  }
  record.final_scores = std::move(scores);
  return record;
}

}  // namespace kvevict
