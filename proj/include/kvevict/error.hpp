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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kvevict {

enum class ErrorCode {
  // trace_model
  kInvalidTrace,
  kMalformedTrace,
  kInvalidSpec,
  kIoError,
  // attention_engine
  kIndexOutOfRange,
  kCurrentTokenEvicted,
  kEmptySet,
  // kv_cache
  kCacheFull,
  kDuplicateToken,
  kEvictNotTracked,
  kNotFull,
  // eviction_policies
  kBudgetExceeded,
  kInconsistentState,
  kInvalidConfig,
  // metrics
  kEmptyRow,
  kTraceMismatch,
  kDimensionMismatch,
  // submodular_lab
  kBadBudget,
  kTooLarge,
  kSequenceViolation,
  // softmax_regression
  kNonFinite,
  kInvalidProblem,
  kSingularHessian,
  kMaxIterExceeded,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidTrace: return "InvalidTrace";
    case ErrorCode::kMalformedTrace: return "MalformedTrace";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kCurrentTokenEvicted: return "CurrentTokenEvicted";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kCacheFull: return "CacheFull";
    case ErrorCode::kDuplicateToken: return "DuplicateToken";
    case ErrorCode::kEvictNotTracked: return "EvictNotTracked";
    case ErrorCode::kNotFull: return "NotFull";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
    case ErrorCode::kInconsistentState: return "InconsistentState";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kEmptyRow: return "EmptyRow";
    case ErrorCode::kTraceMismatch: return "TraceMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kBadBudget: return "BadBudget";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kSequenceViolation: return "SequenceViolation";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kInvalidProblem: return "InvalidProblem";
    case ErrorCode::kSingularHessian: return "SingularHessian";
    case ErrorCode::kMaxIterExceeded: return "MaxIterExceeded";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed trace files additionally report where parsing stopped.
class MalformedTraceError : public Error {
 public:
  MalformedTraceError(std::size_t byte_offset, const std::string& message)
      : Error(ErrorCode::kMalformedTrace,
              message + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace kvevict
