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

// Attention traces: per-head query/key matrices that drive a decode
// simulation, their on-disk formats, and synthetic generators.
//
// Binary layout ("KVT1"):
//   bytes 0..3   magic "KVT1"
//   bytes 4..7   n, little-endian u32
//   bytes 8..11  d, little-endian u32
//   then n*d f64 (little-endian) query entries, row-major,
//   then n*d f64 key entries, row-major.
//
// JSON layout: {"n":..,"d":..,"Q":[[..]],"K":[[..]]} with optional
// "head_id" / "layer_id". load_trace() picks the format from the magic.

#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvevict/error.hpp"
#include "kvevict/random.hpp"

namespace kvevict {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Token positions are 1-based throughout the library, matching the decode
// step numbering (token i is the query at step i).
using TokenIndex = std::size_t;

class AttentionTrace {
 public:
  // An empty trace (n = 0). Not valid; exists so that I/O paths can reject it.
  AttentionTrace() = default;

  AttentionTrace(Matrix queries, Matrix keys,
                 std::optional<std::uint32_t> head_id = std::nullopt,
                 std::optional<std::uint32_t> layer_id = std::nullopt)
      : queries_(std::move(queries)),
        keys_(std::move(keys)),
        head_id_(head_id),
        layer_id_(layer_id) {
    validate();
  }

  std::size_t size() const { return static_cast<std::size_t>(queries_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(queries_.cols()); }
  bool empty() const { return size() == 0; }

  const Matrix& queries() const { return queries_; }
  const Matrix& keys() const { return keys_; }
  std::optional<std::uint32_t> head_id() const { return head_id_; }
  std::optional<std::uint32_t> layer_id() const { return layer_id_; }

  // Q_i . K_j for 1-based token positions.
  double logit(TokenIndex i, TokenIndex j) const {
    return queries_.row(static_cast<Eigen::Index>(i - 1))
        .dot(keys_.row(static_cast<Eigen::Index>(j - 1)));
  }

  void validate() const {
    if (queries_.rows() == 0 || queries_.cols() == 0) {
      fail(ErrorCode::kInvalidTrace, "trace must have n >= 1 and d >= 1");
    }
    if (queries_.rows() != keys_.rows() || queries_.cols() != keys_.cols()) {
      fail(ErrorCode::kInvalidTrace,
           "Q is " + shape(queries_) + " but K is " + shape(keys_));
    }
    if (!queries_.allFinite() || !keys_.allFinite()) {
      fail(ErrorCode::kInvalidTrace, "trace contains a non-finite entry");
    }
  }

  // Bitwise comparison of the matrices and the bookkeeping ids.
  friend bool operator==(const AttentionTrace& a, const AttentionTrace& b) {
    return a.head_id_ == b.head_id_ && a.layer_id_ == b.layer_id_ &&
           same_bits(a.queries_, b.queries_) && same_bits(a.keys_, b.keys_);
  }

 private:
  static std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

  static bool same_bits(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(),
                       static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
  }

  Matrix queries_;
  Matrix keys_;
  std::optional<std::uint32_t> head_id_;
  std::optional<std::uint32_t> layer_id_;
};

enum class TraceKind {
  kUniformGaussian,
  kPowerLawKeys,
  kSinkDominant,
  kMidHeavy,
};

constexpr std::string_view to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::kUniformGaussian: return "uniform-gaussian";
    case TraceKind::kPowerLawKeys: return "power-law-keys";
    case TraceKind::kSinkDominant: return "sink-dominant";
    case TraceKind::kMidHeavy: return "mid-heavy";
  }
  return "unknown";
}

inline std::optional<TraceKind> parse_trace_kind(std::string_view name) {
  for (auto kind : {TraceKind::kUniformGaussian, TraceKind::kPowerLawKeys,
                    TraceKind::kSinkDominant, TraceKind::kMidHeavy}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

struct SyntheticTraceSpec {
  std::size_t n = 0;
  std::size_t d = 0;
  TraceKind kind = TraceKind::kUniformGaussian;
  double power_exponent = 1.0;  // power-law-keys only
  std::uint64_t seed = 0;
};

namespace detail {

// Logit scale for the structured generators. Queries share a unit direction
// u with magnitude 1; a key of norm g along u therefore has logit about g.
inline constexpr double kStructuredKeyGain = 16.0;
inline constexpr double kDirectionNoise = 0.35;

inline Vector random_unit(Rng& rng, std::size_t d) {
  Vector v(static_cast<Eigen::Index>(d));
  do {
    for (Eigen::Index c = 0; c < v.size(); ++c) v[c] = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

inline Vector noisy_direction(Rng& rng, const Vector& u, double noise) {
  Vector v = u;
  const double per_coord = noise / std::sqrt(static_cast<double>(u.size()));
  for (Eigen::Index c = 0; c < v.size(); ++c) v[c] += per_coord * rng.normal();
  const double norm = v.norm();
  return norm > 0.0 ? Vector(v / norm) : u;
}

}  // namespace detail

// Deterministic in spec.seed. Kinds:
//   uniform-gaussian  iid N(0, d^-1/2) entries, so logits have unit variance.
//   power-law-keys    token j gets a rank r_j from a seeded permutation; its key
//                     has norm g * r_j^-p along a shared direction, so a few
//                     tokens absorb most of the attention.
//   sink-dominant     token 1's key has the largest norm; the rest are small.
//   mid-heavy         a single dominant key placed in the middle third.
inline AttentionTrace generate_trace(const SyntheticTraceSpec& spec) {
  if (spec.n == 0 || spec.d == 0) {
    fail(ErrorCode::kInvalidSpec, "n and d must be positive");
  }
  if (spec.n > UINT32_MAX || spec.d > UINT32_MAX) {
    fail(ErrorCode::kInvalidSpec, "n and d must fit in 32 bits");
  }
  if (spec.kind == TraceKind::kPowerLawKeys &&
      !(spec.power_exponent > 0.0 && std::isfinite(spec.power_exponent))) {
    fail(ErrorCode::kInvalidSpec, "power_exponent must be a positive number");
  }

  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.d);
  Rng rng(spec.seed);
  Matrix q(n, d);
  Matrix k(n, d);

  if (spec.kind == TraceKind::kUniformGaussian) {
    const double sigma = std::pow(static_cast<double>(spec.d), -0.25);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < d; ++c) q(i, c) = sigma * rng.normal();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < d; ++c) k(i, c) = sigma * rng.normal();
    return AttentionTrace(std::move(q), std::move(k));
  }

  const Vector u = detail::random_unit(rng, spec.d);
  for (Eigen::Index i = 0; i < n; ++i) {
    q.row(i) = detail::noisy_direction(rng, u, detail::kDirectionNoise);
  }

  const double gain = detail::kStructuredKeyGain;
  // Background keys for the sink / mid-heavy kinds: small and isotropic.
  const double background = 0.5 / std::sqrt(static_cast<double>(spec.d));

  switch (spec.kind) {
    case TraceKind::kPowerLawKeys: {
      const auto ranks = rng.permutation(spec.n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double rank = static_cast<double>(ranks[static_cast<std::size_t>(j)] + 1);
        const double norm = gain * std::pow(rank, -spec.power_exponent);
        k.row(j) = norm * detail::noisy_direction(rng, u, detail::kDirectionNoise);
      }
      break;
    }
    case TraceKind::kSinkDominant: {
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index c = 0; c < d; ++c) k(j, c) = background * rng.normal();
      k.row(0) = gain * u;
      break;
    }
    case TraceKind::kMidHeavy: {
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index c = 0; c < d; ++c) k(j, c) = background * rng.normal();
      const std::size_t third = spec.n / 3;
      const std::size_t pos = third + (third > 0 ? rng.below(third) : 0);
      k.row(static_cast<Eigen::Index>(pos)) = gain * u;
      break;
    }
    case TraceKind::kUniformGaussian:
      break;
  }
  return AttentionTrace(std::move(q), std::move(k));
}

// Position (1-based) of the dominant key planted by the mid-heavy generator.
inline TokenIndex dominant_key_position(const AttentionTrace& trace) {
  Eigen::Index best = 0;
  trace.keys().rowwise().norm().maxCoeff(&best);
  return static_cast<TokenIndex>(best) + 1;
}

enum class TraceFormat { kBinary, kJson };

namespace detail {

inline constexpr std::array<char, 4> kTraceMagic = {'K', 'V', 'T', '1'};
inline constexpr std::size_t kTraceHeaderBytes = 12;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffU));
}

inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
}

inline std::uint64_t get_le(const std::string& in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + static_cast<std::size_t>(b)]))
         << (8 * b);
  }
  return v;
}

inline std::string encode_binary(const AttentionTrace& t) {
  std::string out;
  out.reserve(kTraceHeaderBytes + 2 * t.size() * t.dim() * 8);
  out.append(kTraceMagic.data(), kTraceMagic.size());
  put_u32(out, static_cast<std::uint32_t>(t.size()));
  put_u32(out, static_cast<std::uint32_t>(t.dim()));
  for (const Matrix* m : {&t.queries(), &t.keys()}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) put_f64(out, m->data()[i]);
  }
  return out;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string encode_json(const AttentionTrace& t) {
  nlohmann::json j;
  j["n"] = t.size();
  j["d"] = t.dim();
  if (t.head_id()) j["head_id"] = *t.head_id();
  if (t.layer_id()) j["layer_id"] = *t.layer_id();
  j["Q"] = matrix_to_json(t.queries());
  j["K"] = matrix_to_json(t.keys());
  return j.dump();
}

inline AttentionTrace decode_binary(const std::string& bytes) {
  if (bytes.size() < kTraceHeaderBytes) {
    throw MalformedTraceError(bytes.size(), "truncated header");
  }
  const std::uint64_t n = get_le(bytes, 4, 4);
  const std::uint64_t d = get_le(bytes, 8, 4);
  if (n == 0) throw MalformedTraceError(4, "n must be positive");
  if (d == 0) throw MalformedTraceError(8, "d must be positive");

  const std::uint64_t block = n * d * 8;
  const std::uint64_t row_bytes = d * 8;
  const std::uint64_t expected = kTraceHeaderBytes + 2 * block;
  if (bytes.size() < expected) {
    const std::uint64_t have = bytes.size() - kTraceHeaderBytes;
    const bool in_keys = have >= block;
    const std::uint64_t rows = (in_keys ? have - block : have) / row_bytes;
    const std::uint64_t offset =
        kTraceHeaderBytes + (in_keys ? block : 0) + rows * row_bytes;
    throw MalformedTraceError(
        offset, std::string(in_keys ? "K" : "Q") + " block has " +
                    std::to_string(rows) + " complete rows, expected " +
                    std::to_string(n));
  }
  if (bytes.size() > expected) {
    throw MalformedTraceError(expected, "trailing bytes after K block");
  }

  Matrix q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Matrix k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::size_t offset = kTraceHeaderBytes;
  for (Matrix* m : {&q, &k}) {
    for (Eigen::Index i = 0; i < m->size(); ++i, offset += 8) {
      const double v = std::bit_cast<double>(get_le(bytes, offset, 8));
      if (!std::isfinite(v)) throw MalformedTraceError(offset, "non-finite entry");
      m->data()[i] = v;
    }
  }
  return AttentionTrace(std::move(q), std::move(k));
}

inline Matrix json_to_matrix(const nlohmann::json& rows, std::size_t n,
                             std::size_t d, std::string_view name) {
  if (!rows.is_array()) {
    throw MalformedTraceError(0, std::string(name) + " must be an array of rows");
  }
  if (rows.size() != n) {
    throw MalformedTraceError(0, std::string(name) + " has " +
                                     std::to_string(rows.size()) +
                                     " rows, expected " + std::to_string(n));
  }
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != d) {
      throw MalformedTraceError(0, std::string(name) + " row " + std::to_string(i) +
                                       " does not have d entries");
    }
    for (std::size_t c = 0; c < d; ++c) {
      if (!row[c].is_number()) {
        throw MalformedTraceError(0, std::string(name) + " entry is not a number");
      }
      const double v = row[c].get<double>();
      if (!std::isfinite(v)) {
        throw MalformedTraceError(0, std::string(name) + " entry is not finite");
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return m;
}

inline AttentionTrace decode_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedTraceError(e.byte, "invalid JSON");
  }
  if (!j.is_object() || !j.contains("n") || !j.contains("d") ||
      !j["n"].is_number_unsigned() || !j["d"].is_number_unsigned()) {
    throw MalformedTraceError(0, "missing or invalid n/d header");
  }
  const auto n = j["n"].get<std::size_t>();
  const auto d = j["d"].get<std::size_t>();
  if (n == 0 || d == 0) throw MalformedTraceError(0, "n and d must be positive");
  if (!j.contains("Q") || !j.contains("K")) {
    throw MalformedTraceError(0, "missing Q or K");
  }
  auto read_id = [&](const char* key) -> std::optional<std::uint32_t> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_number_unsigned()) throw MalformedTraceError(0, std::string(key) + " must be unsigned");
    return j[key].get<std::uint32_t>();
  };
  return AttentionTrace(json_to_matrix(j["Q"], n, d, "Q"),
                        json_to_matrix(j["K"], n, d, "K"), read_id("head_id"),
                        read_id("layer_id"));
}

}  // namespace detail

inline AttentionTrace parse_trace(const std::string& bytes) {
  if (bytes.size() >= 4 &&
      std::equal(detail::kTraceMagic.begin(), detail::kTraceMagic.end(), bytes.begin())) {
    return detail::decode_binary(bytes);
  }
  return detail::decode_json(bytes);
}

inline AttentionTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::kIoError, "read failed for " + path.string());
  return parse_trace(bytes);
}

inline std::string serialize_trace(const AttentionTrace& trace, TraceFormat format) {
  trace.validate();
  return format == TraceFormat::kBinary ? detail::encode_binary(trace)
                                        : detail::encode_json(trace);
}

inline void save_trace(const AttentionTrace& trace, const std::filesystem::path& path,
                       TraceFormat format = TraceFormat::kBinary) {
  const std::string bytes = serialize_trace(trace, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace kvevict
