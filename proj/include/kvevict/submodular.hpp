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

// Monotone submodular maximisation under a cardinality constraint: instance
// families, the greedy algorithm, greedy with a noisy marginal-gain oracle,
// exhaustive optimum, a submodularity certifier, and a checker for the
// step-dependent ("dynamic") score-function conditions that carry the
// greedy guarantee across decode steps.
//
// Static instances use 0-based ground elements. Dynamic families are indexed
// by decode step and use 1-based token sets, like the rest of the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvevict/error.hpp"
#include "kvevict/policies.hpp"
#include "kvevict/random.hpp"

namespace kvevict {

using ElementSet = std::vector<std::size_t>;  // ascending, no duplicates

inline constexpr double kGreedyFactor = 1.0 - 1.0 / std::numbers::e;

// (1 - 1/e) * opt
inline double greedy_bound(double opt) { return kGreedyFactor * opt; }

// (1 - 1/e) * opt - k (2 - 1/e) eps
inline double robust_greedy_bound(double opt, std::size_t k, double eps) {
  return kGreedyFactor * opt - static_cast<double>(k) * (2.0 - 1.0 / std::numbers::e) * eps;
}

enum class InstanceKind { kCoverage, kBudgetAdditive, kModular, kConcaveOverModular, kCustom };

constexpr std::string_view to_string(InstanceKind kind) {
  switch (kind) {
    case InstanceKind::kCoverage: return "coverage";
    case InstanceKind::kBudgetAdditive: return "budget_additive";
    case InstanceKind::kModular: return "modular";
    case InstanceKind::kConcaveOverModular: return "concave_over_modular";
    case InstanceKind::kCustom: return "custom";
  }
  return "unknown";
}

class SubmodularInstance {
 public:
  using Oracle = std::function<double(std::span<const std::size_t>)>;

  SubmodularInstance(InstanceKind kind, std::size_t n, Oracle f)
      : kind_(kind), n_(n), f_(std::move(f)) {}

  // f(S) = total weight of universe items covered by the chosen subsets.
  static SubmodularInstance coverage(std::vector<std::vector<std::size_t>> subsets,
                                     std::vector<double> item_weights = {}) {
    std::size_t universe = 0;
    for (const auto& s : subsets)
      for (std::size_t item : s) universe = std::max(universe, item + 1);
    if (item_weights.empty()) item_weights.assign(universe, 1.0);
    if (item_weights.size() < universe) {
      fail(ErrorCode::kDimensionMismatch, "coverage item weights shorter than the universe");
    }
    for (double w : item_weights) check_weight(w);
    const std::size_t n = subsets.size();
    return SubmodularInstance(
        InstanceKind::kCoverage, n,
        [subsets = std::move(subsets), weights = std::move(item_weights)](std::span<const std::size_t> set) {
          std::vector<bool> covered(weights.size(), false);
          double value = 0.0;
          for (std::size_t e : set) {
            for (std::size_t item : subsets[e]) {
              if (!covered[item]) {
                covered[item] = true;
                value += weights[item];
              }
            }
          }
          return value;
        });
  }

  // f(S) = min(B, sum of w_e).
  static SubmodularInstance budget_additive(std::vector<double> weights, double budget) {
    for (double w : weights) check_weight(w);
    check_weight(budget);
    const std::size_t n = weights.size();
    return SubmodularInstance(InstanceKind::kBudgetAdditive, n,
                              [weights = std::move(weights), budget](std::span<const std::size_t> set) {
                                double s = 0.0;
                                for (std::size_t e : set) s += weights[e];
                                return std::min(budget, s);
                              });
  }

  static SubmodularInstance modular(std::vector<double> weights) {
    for (double w : weights) check_weight(w);
    const std::size_t n = weights.size();
    return SubmodularInstance(InstanceKind::kModular, n,
                              [weights = std::move(weights)](std::span<const std::size_t> set) {
                                double s = 0.0;
                                for (std::size_t e : set) s += weights[e];
                                return s;
                              });
  }

  // f(S) = h(sum of scores over S) - h(0); submodular for concave h.
  static SubmodularInstance concave_over_modular(std::vector<double> scores, ScoreFunction h) {
    for (double s : scores) check_weight(s);
    const std::size_t n = scores.size();
    const double base = apply(h, 0.0);
    return SubmodularInstance(InstanceKind::kConcaveOverModular, n,
                              [scores = std::move(scores), h, base](std::span<const std::size_t> set) {
                                double s = 0.0;
                                for (std::size_t e : set) s += scores[e];
                                return apply(h, s) - base;
                              });
  }

  InstanceKind kind() const { return kind_; }
  std::size_t size() const { return n_; }

  double operator()(std::span<const std::size_t> set) const { return f_(set); }

  // f(S + {e}) - f(S)
  double marginal(std::span<const std::size_t> set, std::size_t e) const {
    ElementSet with(set.begin(), set.end());
    with.insert(std::upper_bound(with.begin(), with.end(), e), e);
    return f_(with) - f_(set);
  }

 private:
  static void check_weight(double w) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      fail(ErrorCode::kInvalidConfig, "instance weights must be finite and non-negative");
    }
  }

  InstanceKind kind_;
  std::size_t n_;
  Oracle f_;
};

struct Solution {
  ElementSet set;
  double value = 0.0;
};

namespace detail {

inline void check_budget(std::size_t n, std::size_t k) {
  if (k < 1 || k > n) {
    fail(ErrorCode::kBadBudget, "budget " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
}

// Picks argmax_e score(e) over e not in `chosen`, lowest index on ties.
template <typename Score>
std::size_t argmax_outside(std::size_t n, const std::vector<bool>& chosen, Score score) {
  std::size_t best = n;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < n; ++e) {
    if (chosen[e]) continue;
    const double v = score(e);
    if (best == n || v > best_value) {
      best = e;
      best_value = v;
    }
  }
  return best;
}

}  // namespace detail

// Adds the element with the largest f(S + {e}) k times.
inline Solution greedy(const SubmodularInstance& f, std::size_t k) {
  const std::size_t n = f.size();
  detail::check_budget(n, k);
  Solution sol;
  std::vector<bool> chosen(n, false);
  ElementSet trial;
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t pick = detail::argmax_outside(n, chosen, [&](std::size_t e) {
      trial = sol.set;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), e), e);
      return f(trial);
    });
    chosen[pick] = true;
    sol.set.insert(std::upper_bound(sol.set.begin(), sol.set.end(), pick), pick);
  }
  sol.value = f(sol.set);
  return sol;
}

inline constexpr std::size_t kBruteForceLimit = 22;

// Exact maximum over all size-k subsets, visited in lexicographic order; the
// first maximiser wins.
inline Solution brute_force_opt(const SubmodularInstance& f, std::size_t k) {
  const std::size_t n = f.size();
  if (n > kBruteForceLimit) {
    fail(ErrorCode::kTooLarge, "exhaustive search limited to n <= " + std::to_string(kBruteForceLimit));
  }
  detail::check_budget(n, k);
  ElementSet combo(k);
  for (std::size_t j = 0; j < k; ++j) combo[j] = j;
  Solution best;
  best.value = -std::numeric_limits<double>::infinity();
  while (true) {
    const double v = f(combo);
    if (v > best.value) {
      best.value = v;
      best.set = combo;
    }
    // Advance to the next combination in lexicographic order.
    std::size_t j = k;
    while (j > 0 && combo[j - 1] == n - k + (j - 1)) --j;
    if (j == 0) break;
    ++combo[j - 1];
    for (std::size_t m = j; m < k; ++m) combo[m] = combo[m - 1] + 1;
  }
  return best;
}

// Marginal-gain oracle with bounded additive error:
//   Delta(e | S) - eps <= O(S, e) <= Delta(e | S) + eps.
// The error is eps * noise(S, e) with noise clamped to [-1, 1]; the default
// noise is a seeded hash of (S, e), so repeated queries agree.
class NoisyOracle {
 public:
  using Noise = std::function<double(std::span<const std::size_t>, std::size_t)>;

  NoisyOracle(SubmodularInstance base, double eps, std::uint64_t seed)
      : base_(std::move(base)), eps_(eps), noise_([seed](std::span<const std::size_t> set, std::size_t e) {
          std::uint64_t h = mix64(seed ^ 0x5bd1e995ULL);
          for (std::size_t x : set) h = mix64(h ^ (x + 1));
          h = mix64(h ^ (0x9e37ULL + e));
          return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
        }) {
    check_eps();
  }

  NoisyOracle(SubmodularInstance base, double eps, Noise noise)
      : base_(std::move(base)), eps_(eps), noise_(std::move(noise)) {
    check_eps();
  }

  const SubmodularInstance& base() const { return base_; }
  double epsilon() const { return eps_; }

  double query(std::span<const std::size_t> set, std::size_t e) const {
    const double noise = std::clamp(noise_(set, e), -1.0, 1.0);
    return base_.marginal(set, e) + eps_ * noise;
  }

 private:
  void check_eps() const {
    if (!(eps_ >= 0.0) || !std::isfinite(eps_)) fail(ErrorCode::kInvalidConfig, "epsilon must be >= 0");
  }

  SubmodularInstance base_;
  double eps_;
  Noise noise_;
};

// Greedy driven by the noisy oracle; the returned value is under the true f.
inline Solution robust_greedy(const NoisyOracle& oracle, std::size_t k) {
  const std::size_t n = oracle.base().size();
  detail::check_budget(n, k);
  Solution sol;
  std::vector<bool> chosen(n, false);
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t pick =
        detail::argmax_outside(n, chosen, [&](std::size_t e) { return oracle.query(sol.set, e); });
    chosen[pick] = true;
    sol.set.insert(std::upper_bound(sol.set.begin(), sol.set.end(), pick), pick);
  }
  sol.value = oracle.base()(sol.set);
  return sol;
}

// ---------------------------------------------------------------------------
// Certification

struct CertificateResult {
  bool submodular = true;
  bool monotone = true;
  bool normalized = true;  // f(empty) == 0
  // A failing diminishing-returns triple (X, Y, x) when !submodular.
  std::uint32_t witness_x_mask = 0;
  std::uint32_t witness_y_mask = 0;
  std::size_t witness_element = 0;
};

inline constexpr std::size_t kCertifyLimit = 14;

// Exhaustive check of f(X + x) - f(X) >= f(Y + x) - f(Y) for all X within Y
// and x outside Y, plus monotonicity and f(empty) = 0. O(3^n n).
inline CertificateResult certify(const SubmodularInstance& f, double tol = 1e-12) {
  const std::size_t n = f.size();
  if (n > kCertifyLimit) fail(ErrorCode::kTooLarge, "certification limited to n <= 14");
  const std::uint32_t full = (1U << n) - 1U;
  std::vector<double> value(static_cast<std::size_t>(full) + 1);
  ElementSet set;
  for (std::uint32_t mask = 0; mask <= full; ++mask) {
    set.clear();
    for (std::size_t e = 0; e < n; ++e)
      if (mask & (1U << e)) set.push_back(e);
    value[mask] = f(set);
  }
  auto slack = [&](double a, double b) { return tol * (1.0 + std::abs(a) + std::abs(b)); };

  CertificateResult out;
  out.normalized = std::abs(value[0]) <= tol;
  for (std::uint32_t y = 0; y <= full; ++y) {
    for (std::size_t e = 0; e < n; ++e) {
      const std::uint32_t bit = 1U << e;
      if (y & bit) continue;
      const double gain_y = value[y | bit] - value[y];
      if (gain_y < -slack(value[y | bit], value[y])) out.monotone = false;
      // Every X within Y, via submask enumeration.
      for (std::uint32_t x = y;; x = (x - 1) & y) {
        const double gain_x = value[x | bit] - value[x];
        if (gain_x < gain_y - slack(gain_x, gain_y) && out.submodular) {
          out.submodular = false;
          out.witness_x_mask = x;
          out.witness_y_mask = y;
          out.witness_element = e;
        }
        if (x == 0) break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random instances for property sweeps.

inline SubmodularInstance random_instance(Rng& rng, InstanceKind kind, std::size_t n) {
  switch (kind) {
    case InstanceKind::kCoverage: {
      const std::size_t universe = 2 * n;
      std::vector<std::vector<std::size_t>> subsets(n);
      for (auto& s : subsets) {
        for (std::size_t item = 0; item < universe; ++item)
          if (rng.uniform() < 0.25) s.push_back(item);
      }
      std::vector<double> weights(universe);
      for (double& w : weights) w = static_cast<double>(1 + rng.below(5));
      return SubmodularInstance::coverage(std::move(subsets), std::move(weights));
    }
    case InstanceKind::kBudgetAdditive: {
      std::vector<double> weights(n);
      double total = 0.0;
      for (double& w : weights) total += (w = rng.uniform(0.0, 10.0));
      return SubmodularInstance::budget_additive(std::move(weights), rng.uniform(0.2, 0.6) * total);
    }
    case InstanceKind::kModular: {
      std::vector<double> weights(n);
      for (double& w : weights) w = rng.uniform(0.0, 10.0);
      return SubmodularInstance::modular(std::move(weights));
    }
    case InstanceKind::kConcaveOverModular: {
      std::vector<double> scores(n);
      for (double& s : scores) s = rng.uniform(0.0, 5.0);
      const auto h = rng.coin() ? ScoreFunction::kSqrt1p : ScoreFunction::kLog1p;
      return SubmodularInstance::concave_over_modular(std::move(scores), h);
    }
    case InstanceKind::kCustom:
      break;
  }
  fail(ErrorCode::kInvalidConfig, "no random generator for this instance kind");
}

// ---------------------------------------------------------------------------
// Attention score as a set function.

struct AttentionScoreInstance {
  SubmodularInstance instance;
  std::vector<TokenIndex> tokens;  // ground element e is tokens[e]
};

// F_score(T) = h(sum of accumulated scores over T), shifted so F(empty) = 0.
inline AttentionScoreInstance attention_score_function(const AccumulatedScores& scores, ScoreFunction h) {
  std::vector<TokenIndex> tokens;
  std::vector<double> values;
  for (const auto& [token, s] : scores.entries()) {
    tokens.push_back(token);
    values.push_back(s);
  }
  return {SubmodularInstance::concave_over_modular(std::move(values), h), std::move(tokens)};
}

// ---------------------------------------------------------------------------
// Dynamic framework.
//
// A family f_{X,i}(Y) is the step-i score function given cache state X
// (X within [i-1]) evaluated on Y within [i]. `approx`, when present, is the
// surrogate the eviction rule actually maximises; otherwise the rule uses f.

using TokenSet = std::vector<TokenIndex>;  // ascending, 1-based

struct DynamicFamily {
  std::size_t steps = 0;  // n
  std::size_t budget = 0;  // k
  std::function<double(const TokenSet& state, std::size_t step, const TokenSet& set)> exact;
  std::function<double(const TokenSet& state, std::size_t step, const TokenSet& set)> approx;

  double surrogate(const TokenSet& state, std::size_t step, const TokenSet& set) const {
    return approx ? approx(state, step, set) : exact(state, step, set);
  }
};

struct DynamicParams {
  double theta = 0.0;
  double gamma = 0.0;
  double eps0 = 0.0;
  double tol = 1e-12;
};

namespace detail {

inline TokenSet with_element(TokenSet s, TokenIndex e) {
  s.insert(std::upper_bound(s.begin(), s.end(), e), e);
  return s;
}

inline TokenSet without_element(TokenSet s, TokenIndex e) {
  s.erase(std::remove(s.begin(), s.end(), e), s.end());
  return s;
}

// Calls visit(subset) for every subset of {1..m} with at most max_size
// elements.
template <typename Visit>
void for_each_small_subset(std::size_t m, std::size_t max_size, Visit visit) {
  TokenSet current;
  std::function<void(TokenIndex)> rec = [&](TokenIndex next) {
    visit(current);
    if (current.size() == max_size) return;
    for (TokenIndex e = next; e <= m; ++e) {
      current.push_back(e);
      rec(e + 1);
      current.pop_back();
    }
  };
  rec(1);
}

}  // namespace detail

// The cache-state sequence produced by the eviction rule: S_1 = {} and
//   S_{i+1} = S_i + {i}                      if |S_i| < k
//   S_{i+1} = S_i + {i} - {u},  u = argmax_v g_{S_i,i}(S_i + {i} - {v})
// with g the surrogate. Returns S_1..S_n (element i-1 is S_i).
inline std::vector<TokenSet> build_sequence(const DynamicFamily& family) {
  std::vector<TokenSet> seq;
  if (family.steps == 0) return seq;
  seq.reserve(family.steps);
  seq.push_back({});
  for (std::size_t i = 1; i < family.steps; ++i) {
    const TokenSet& current = seq.back();
    TokenSet grown = detail::with_element(current, i);
    if (current.size() < family.budget) {
      seq.push_back(std::move(grown));
      continue;
    }
    TokenIndex best = grown.front();
    double best_value = -std::numeric_limits<double>::infinity();
    for (TokenIndex v : grown) {
      const double value = family.surrogate(current, i, detail::without_element(grown, v));
      if (value > best_value) {
        best_value = value;
        best = v;
      }
    }
    seq.push_back(detail::without_element(grown, best));
  }
  return seq;
}

// opt_i = max f_{X,i}(Y) over X within [i-1], Y within [i], |X|, |Y| <= k,
// |Y - X| <= 1.
inline double dynamic_opt(const DynamicFamily& family, std::size_t i) {
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t k = family.budget;
  detail::for_each_small_subset(i - 1, k, [&](const TokenSet& x) {
    // Y = (subset of X) + at most one element of [i] outside X.
    const std::size_t m = x.size();
    for (std::uint32_t mask = 0; mask < (1U << m); ++mask) {
      TokenSet kept;
      for (std::size_t b = 0; b < m; ++b)
        if (mask & (1U << b)) kept.push_back(x[b]);
      best = std::max(best, family.exact(x, i, kept));
      if (kept.size() + 1 > k) continue;
      for (TokenIndex y = 1; y <= i; ++y) {
        if (std::binary_search(x.begin(), x.end(), y)) continue;
        best = std::max(best, family.exact(x, i, detail::with_element(kept, y)));
      }
    }
  });
  return best;
}

struct DynamicStepReport {
  std::size_t step = 0;
  bool monotone = true;      // surrogate f_{S_i,i} non-decreasing under inclusion
  bool dynamic1 = true;      // g_{S_i,i}(S_i) >= (1-theta) g_{S_{i-1},i-1}(S_i)
  bool dynamic2 = true;      // opt_i >= (1-gamma) opt_{i+1}
  bool approximate = true;   // f_{S_i,i}(X) >= g_{S_i,i}(X) - eps0
  bool follows_rule = true;  // S_{i+1} attains the eviction rule's maximum
  double opt = 0.0;
  double value = 0.0;  // f_{S_{i-1},i-1}(S_i), for i >= 2
  double bound = 0.0;  // (1-1/e)(1-theta)^i (1-gamma)^i opt_i - i eps0
  bool value_condition = true;

  bool conditions() const { return monotone && dynamic1 && dynamic2 && approximate; }
};

struct DynamicConditionReport {
  std::vector<DynamicStepReport> steps;
  bool all_conditions = true;
  bool trajectory_holds = true;  // value condition at every step i >= 2
  std::optional<std::size_t> first_condition_violation;
  std::string first_violation_kind;
  std::optional<std::size_t> first_value_violation;
  // Conditions and value condition at i (with the rule followed) imply the
  // value condition at i + 1 at every step where the premises held.
  bool induction_consistent = true;
};

inline DynamicConditionReport check_dynamic_conditions(const DynamicFamily& family,
                                                       const std::vector<TokenSet>& sequence,
                                                       const DynamicParams& params) {
  const std::size_t n = family.steps;
  const std::size_t k = family.budget;
  if (!family.exact) fail(ErrorCode::kInvalidConfig, "dynamic family has no exact function");
  if (sequence.size() != n) {
    fail(ErrorCode::kSequenceViolation, "sequence length differs from the number of steps");
  }
  for (std::size_t i = 1; i <= n; ++i) {
    const TokenSet& s = sequence[i - 1];
    if (!std::is_sorted(s.begin(), s.end()) || std::adjacent_find(s.begin(), s.end()) != s.end()) {
      fail(ErrorCode::kSequenceViolation, "S_" + std::to_string(i) + " is not an ascending set");
    }
    if (s.size() > k || (!s.empty() && (s.front() < 1 || s.back() > i - 1))) {
      fail(ErrorCode::kSequenceViolation, "S_" + std::to_string(i) + " breaks the set or budget condition");
    }
    if (i >= 2) {
      const TokenSet& prev = sequence[i - 2];
      std::size_t added = 0;
      for (TokenIndex t : s)
        if (!std::binary_search(prev.begin(), prev.end(), t)) ++added;
      if (added > 1) {
        fail(ErrorCode::kSequenceViolation, "S_" + std::to_string(i) + " adds more than one token");
      }
    }
  }

  const double tol = params.tol;
  auto ge = [tol](double a, double b) { return a >= b - tol * (1.0 + std::abs(a) + std::abs(b)); };

  std::vector<double> opt(n + 2, 0.0);
  for (std::size_t i = 1; i <= n; ++i) opt[i] = dynamic_opt(family, i);

  DynamicConditionReport report;
  report.steps.resize(n);
  for (std::size_t i = 1; i <= n; ++i) {
    DynamicStepReport& r = report.steps[i - 1];
    const TokenSet& s = sequence[i - 1];
    r.step = i;
    r.opt = opt[i];

    detail::for_each_small_subset(i, k + 1, [&](const TokenSet& x) {
      for (TokenIndex e : x) {
        if (!ge(family.surrogate(s, i, x), family.surrogate(s, i, detail::without_element(x, e)))) {
          r.monotone = false;
        }
      }
      if (family.approx && !ge(family.exact(s, i, x), family.approx(s, i, x) - params.eps0)) {
        r.approximate = false;
      }
    });
    if (i >= 2) {
      const TokenSet& prev = sequence[i - 2];
      r.dynamic1 = ge(family.surrogate(s, i, s), (1.0 - params.theta) * family.surrogate(prev, i - 1, s));
    }
    if (i < n) {
      r.dynamic2 = ge(opt[i], (1.0 - params.gamma) * opt[i + 1]);
      // The rule's maximum over single removals from S_i + {i}.
      const TokenSet& next = sequence[i];
      const TokenSet grown = detail::with_element(s, i);
      if (s.size() < k) {
        r.follows_rule = next == grown;
      } else {
        double best = -std::numeric_limits<double>::infinity();
        for (TokenIndex v : grown) best = std::max(best, family.surrogate(s, i, detail::without_element(grown, v)));
        r.follows_rule = next.size() == k && std::includes(grown.begin(), grown.end(), next.begin(), next.end()) &&
                         ge(family.surrogate(s, i, next), best);
      }
    }
    const double fi = static_cast<double>(i);
    r.bound = kGreedyFactor * std::pow(1.0 - params.theta, fi) * std::pow(1.0 - params.gamma, fi) * opt[i] -
              fi * params.eps0;
    if (i >= 2) {
      r.value = family.exact(sequence[i - 2], i - 1, s);
      r.value_condition = ge(r.value, r.bound);
    }

    if (!r.conditions() && !report.first_condition_violation) {
      report.first_condition_violation = i;
      report.first_violation_kind = !r.monotone    ? "monotone"
                                    : !r.dynamic1  ? "dynamic1"
                                    : !r.dynamic2  ? "dynamic2"
                                                   : "approximate";
    }
    if (!r.value_condition && !report.first_value_violation) report.first_value_violation = i;
    report.all_conditions = report.all_conditions && r.conditions();
    if (i >= 2) report.trajectory_holds = report.trajectory_holds && r.value_condition;
  }
  for (std::size_t i = 2; i < n; ++i) {
    const auto& r = report.steps[i - 1];
    if (r.conditions() && r.follows_rule && r.value_condition && !report.steps[i].value_condition) {
      report.induction_consistent = false;
    }
  }
  return report;
}

}  // namespace kvevict
