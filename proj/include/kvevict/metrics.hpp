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

// Measurements over traces and simulation records: attention sparsity,
// deviation of an evicting run from full attention, accumulated-score
// concentration, (alpha, tau, k)-good support checks and memory accounting.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kvevict/attention.hpp"
#include "kvevict/error.hpp"
#include "kvevict/kv_cache.hpp"
#include "kvevict/policies.hpp"
#include "kvevict/trace.hpp"

namespace kvevict {

// ---------------------------------------------------------------------------
// Sparsity

// Fraction of entries strictly below threshold_frac * max(weights).
inline double row_sparsity(std::span<const double> weights, double threshold_frac) {
  if (weights.empty()) fail(ErrorCode::kEmptyRow, "sparsity of an empty row");
  if (!(threshold_frac > 0.0 && threshold_frac < 1.0)) {
    fail(ErrorCode::kInvalidConfig, "threshold fraction must lie in (0, 1)");
  }
  const double peak = *std::max_element(weights.begin(), weights.end());
  const double cut = threshold_frac * peak;
  const auto below = std::count_if(weights.begin(), weights.end(), [&](double w) { return w < cut; });
  return static_cast<double>(below) / static_cast<double>(weights.size());
}

// Row i of the causal attention matrix either spans all n columns (masked
// future positions count as zeros) or only the i visible ones.
enum class RowExtent { kFullRow, kCausalOnly };

struct SparsityReport {
  std::vector<double> row_fractions;
  double mean = 0.0;
  double threshold_frac = 0.01;
  RowExtent extent = RowExtent::kFullRow;
  std::optional<std::uint32_t> head_id;
  std::optional<std::uint32_t> layer_id;

  std::string rule() const {
    return "entries < " + std::to_string(threshold_frac) + " * row max, " +
           (extent == RowExtent::kFullRow ? "full rows incl. causal zeros" : "visible prefix only");
  }
};

inline SparsityReport sparsity_report(const AttentionTrace& trace, double threshold_frac = 0.01,
                                      RowExtent extent = RowExtent::kFullRow) {
  trace.validate();
  SparsityReport report;
  report.threshold_frac = threshold_frac;
  report.extent = extent;
  report.head_id = trace.head_id();
  report.layer_id = trace.layer_id();
  const std::size_t n = trace.size();
  report.row_fractions.reserve(n);
  std::vector<double> row;
  for (TokenIndex i = 1; i <= n; ++i) {
    const StepAttention a = exact_step(trace, i);
    row = a.weights;
    if (extent == RowExtent::kFullRow) row.resize(n, 0.0);
    report.row_fractions.push_back(row_sparsity(row, threshold_frac));
  }
  double sum = 0.0;
  for (double f : report.row_fractions) sum += f;
  report.mean = sum / static_cast<double>(n);
  return report;
}

// Row-weighted means over several traces: overall, per head and per layer.
// Traces without a head (layer) id are grouped under -1.
struct SparsityAggregate {
  double overall = 0.0;
  std::map<long, double> per_head;
  std::map<long, double> per_layer;
};

inline SparsityAggregate aggregate_sparsity(std::span<const SparsityReport> reports) {
  SparsityAggregate agg;
  std::map<long, std::pair<double, std::size_t>> heads, layers;
  double sum = 0.0;
  std::size_t rows = 0;
  for (const auto& r : reports) {
    double s = 0.0;
    for (double f : r.row_fractions) s += f;
    const std::size_t m = r.row_fractions.size();
    sum += s;
    rows += m;
    auto& h = heads[r.head_id ? static_cast<long>(*r.head_id) : -1L];
    h.first += s;
    h.second += m;
    auto& l = layers[r.layer_id ? static_cast<long>(*r.layer_id) : -1L];
    l.first += s;
    l.second += m;
  }
  if (rows == 0) fail(ErrorCode::kEmptyRow, "no rows to aggregate");
  agg.overall = sum / static_cast<double>(rows);
  for (const auto& [id, acc] : heads) agg.per_head[id] = acc.first / static_cast<double>(acc.second);
  for (const auto& [id, acc] : layers) agg.per_layer[id] = acc.first / static_cast<double>(acc.second);
  return agg;
}

// ---------------------------------------------------------------------------
// Deviation from full attention

struct DeviationReport {
  std::vector<double> retained_mass;  // sum of exact weights over S_i
  std::vector<double> tv_distance;    // TV(exact row, restricted softmax over S_i)
  double mean_retained_mass = 0.0;
  double mean_tv_distance = 0.0;
};

inline DeviationReport retained_mass(const AttentionTrace& trace, const SimulationRecord& sim) {
  if (sim.n != trace.size() || sim.d != trace.dim() || sim.steps.size() != trace.size()) {
    fail(ErrorCode::kTraceMismatch, "simulation record was not produced from this trace");
  }
  DeviationReport report;
  const std::size_t n = trace.size();
  report.retained_mass.reserve(n);
  report.tv_distance.reserve(n);
  for (const StepRecord& step : sim.steps) {
    const StepAttention exact = exact_step(trace, step.step);
    const StepAttention masked = restricted_step(trace, step.step, step.tracked);
    double kept = 0.0;
    double tv = 0.0;
    std::size_t m = 0;
    for (std::size_t j = 0; j < exact.tokens.size(); ++j) {
      double q = 0.0;
      if (m < masked.tokens.size() && masked.tokens[m] == exact.tokens[j]) {
        kept += exact.weights[j];
        q = masked.weights[m++];
      }
      tv += std::abs(exact.weights[j] - q);
    }
    if (m != masked.tokens.size()) {
      fail(ErrorCode::kTraceMismatch, "tracked set mentions a token beyond the current step");
    }
    report.retained_mass.push_back(std::min(kept, 1.0));
    report.tv_distance.push_back(0.5 * tv);
  }
  double rs = 0.0, ts = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rs += report.retained_mass[i];
    ts += report.tv_distance[i];
  }
  report.mean_retained_mass = rs / static_cast<double>(n);
  report.mean_tv_distance = ts / static_cast<double>(n);
  return report;
}

// ---------------------------------------------------------------------------
// Accumulated-score concentration

// Column sums of the full causal attention matrix: the accumulated score
// every token would hold with an unbounded cache.
inline std::vector<double> exact_accumulated_scores(const AttentionTrace& trace) {
  std::vector<double> acc(trace.size(), 0.0);
  for (TokenIndex i = 1; i <= trace.size(); ++i) {
    const StepAttention a = exact_step(trace, i);
    for (std::size_t j = 0; j < a.tokens.size(); ++j) acc[a.tokens[j] - 1] += a.weights[j];
  }
  return acc;
}

struct HeavyHitterProfile {
  std::vector<double> curve;  // descending
  double total = 0.0;
  double top5_share = 0.0;
  double top10_share = 0.0;
  double top20_share = 0.0;

  // Share of the total held by the ceil(fraction * m) largest scores.
  double top_share(double fraction) const {
    if (curve.empty() || total <= 0.0) return 0.0;
    auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(curve.size()) - 1e-9));
    count = std::clamp<std::size_t>(count, 1, curve.size());
    double s = 0.0;
    for (std::size_t j = 0; j < count; ++j) s += curve[j];
    return s / total;
  }
};

inline HeavyHitterProfile heavy_hitter_profile(std::span<const double> scores) {
  HeavyHitterProfile p;
  p.curve.assign(scores.begin(), scores.end());
  std::sort(p.curve.begin(), p.curve.end(), std::greater<>());
  for (double s : p.curve) p.total += s;
  p.top5_share = p.top_share(0.05);
  p.top10_share = p.top_share(0.10);
  p.top20_share = p.top_share(0.20);
  return p;
}

inline HeavyHitterProfile heavy_hitter_profile(const AccumulatedScores& scores) {
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& [token, s] : scores.entries()) values.push_back(s);
  return heavy_hitter_profile(values);
}

// ---------------------------------------------------------------------------
// (alpha, tau, k)-good distributions
//
// Coordinates here are 0-based positions in each sample vector. The tau
// support of x is {j : x_j >= tau}.

struct GoodDistributionCheck {
  std::vector<std::size_t> core;  // S_0, ascending
  double tau = 0.0;
  double alpha = 0.0;
  std::size_t k = 0;
  std::vector<bool> contains_core;      // S_0 within supp_tau(x)
  std::vector<std::size_t> excess;      // |supp_tau(x) - S_0|
  std::vector<bool> excess_within;      // excess <= alpha * k
  std::vector<bool> sample_good;
  bool good = false;
  // Aggregate consequences over all samples.
  bool intersection_contains_core = false;
  std::size_t union_excess = 0;
  double union_bound = 0.0;  // alpha * k * number of samples
  bool union_within_bound = false;
};

inline GoodDistributionCheck check_good_distribution(std::span<const std::vector<double>> samples,
                                                     std::span<const std::size_t> core, double tau,
                                                     double alpha) {
  if (!(tau > 0.0)) fail(ErrorCode::kInvalidConfig, "tau must be positive");
  if (samples.empty()) fail(ErrorCode::kDimensionMismatch, "no samples");
  const std::size_t m = samples.front().size();
  for (const auto& x : samples) {
    if (x.size() != m) fail(ErrorCode::kDimensionMismatch, "samples have different lengths");
  }
  GoodDistributionCheck out;
  out.core.assign(core.begin(), core.end());
  std::sort(out.core.begin(), out.core.end());
  out.core.erase(std::unique(out.core.begin(), out.core.end()), out.core.end());
  for (std::size_t c : out.core) {
    if (c >= m) fail(ErrorCode::kDimensionMismatch, "core coordinate outside the sample length");
  }
  out.tau = tau;
  out.alpha = alpha;
  out.k = out.core.size();
  const double allowed = alpha * static_cast<double>(out.k);

  std::vector<bool> in_core(m, false);
  for (std::size_t c : out.core) in_core[c] = true;
  std::vector<bool> in_all(m, true);
  std::vector<bool> in_any(m, false);

  out.good = true;
  for (const auto& x : samples) {
    bool contains = true;
    std::size_t excess = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const bool supported = x[j] >= tau;
      if (!supported) in_all[j] = false;
      if (supported) in_any[j] = true;
      if (in_core[j] && !supported) contains = false;
      if (!in_core[j] && supported) ++excess;
    }
    const bool within = static_cast<double>(excess) <= allowed;
    out.contains_core.push_back(contains);
    out.excess.push_back(excess);
    out.excess_within.push_back(within);
    out.sample_good.push_back(contains && within);
    out.good = out.good && contains && within;
  }

  out.intersection_contains_core = true;
  for (std::size_t c : out.core) out.intersection_contains_core = out.intersection_contains_core && in_all[c];
  for (std::size_t j = 0; j < m; ++j) {
    if (in_any[j] && !in_core[j]) ++out.union_excess;
  }
  out.union_bound = allowed * static_cast<double>(samples.size());
  out.union_within_bound = static_cast<double>(out.union_excess) <= out.union_bound;

  // Per-sample goodness implies both aggregate properties.
  if (out.good && !(out.intersection_contains_core && out.union_within_bound)) {
    fail(ErrorCode::kInconsistentState, "aggregate support properties do not follow from per-sample verdicts");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Memory accounting

struct MemoryFootprint {
  std::size_t budget = 0;  // effective cached tokens, min(k, n)
  double cache_bytes = 0.0;
  double score_bytes = 0.0;
  double full_bytes = 0.0;
  double ratio = 0.0;  // cache_bytes / full_bytes (unquantized: k / n)
};

// Keys only: k * d scalars per head. Quantized slots store bits/8 bytes per
// scalar against a full-precision baseline of bytes_per_scalar.
inline MemoryFootprint memory_footprint(const PolicyConfig& policy, std::size_t n, std::size_t d,
                                        double bytes_per_scalar,
                                        std::optional<QuantizationSpec> quantization = std::nullopt) {
  if (n == 0 || d == 0 || !(bytes_per_scalar > 0.0)) {
    fail(ErrorCode::kInvalidConfig, "memory accounting needs positive n, d and scalar size");
  }
  MemoryFootprint m;
  m.budget = policy.kind == PolicyKind::kFull ? n : std::min(policy.budget, n);
  double per_scalar = bytes_per_scalar;
  if (quantization) {
    quantization->validate();
    per_scalar = static_cast<double>(quantization->bits) / 8.0;
  }
  m.cache_bytes = static_cast<double>(m.budget * d) * per_scalar;
  m.full_bytes = static_cast<double>(n * d) * bytes_per_scalar;
  const bool keeps_scores = policy.kind == PolicyKind::kH2O || policy.kind == PolicyKind::kH2Only;
  m.score_bytes = keeps_scores ? static_cast<double>(m.budget) * bytes_per_scalar : 0.0;
  m.ratio = m.cache_bytes / m.full_bytes;
  return m;
}

}  // namespace kvevict
