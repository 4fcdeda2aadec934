#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emlmc {

/// Error categories. Each maps to a distinct process exit code in the CLI.
enum class ErrorCode {
  kUsage = 2,
  kInvalidArgument = 3,
  kUnsupportedOperation = 4,
  kNumericOverflow = 5,
  kAdaptivityFailure = 6,
  kInvalidData = 7,
  kConfigParse = 8,
  kConfigConflict = 9,
  kIo = 10,
};

[[nodiscard]] inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
      return "usage";
    case ErrorCode::kInvalidArgument:
      return "invalid_argument";
    case ErrorCode::kUnsupportedOperation:
      return "unsupported_operation";
    case ErrorCode::kNumericOverflow:
      return "numeric_overflow";
    case ErrorCode::kAdaptivityFailure:
      return "adaptivity_failure";
    case ErrorCode::kInvalidData:
      return "invalid_data";
    case ErrorCode::kConfigParse:
      return "config_parse";
    case ErrorCode::kConfigConflict:
      return "config_conflict";
    case ErrorCode::kIo:
      return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorCode::kInvalidArgument, what) {}
};

struct UnsupportedOperation : Error {
  explicit UnsupportedOperation(const std::string& what)
      : Error(ErrorCode::kUnsupportedOperation, what) {}
};

struct InvalidData : Error {
  explicit InvalidData(const std::string& what)
      : Error(ErrorCode::kInvalidData, what) {}
};

/// A state became non-finite. Carries the step index and simulation time.
class NumericOverflow : public Error {
 public:
  NumericOverflow(std::size_t step, double time)
      : Error(ErrorCode::kNumericOverflow,
              "non-finite state at step " + std::to_string(step) +
                  " (t = " + std::to_string(time) + ")"),
        step_(step),
        time_(time) {}
  [[nodiscard]] std::size_t step() const noexcept { return step_; }
  [[nodiscard]] double time() const noexcept { return time_; }

 private:
  std::size_t step_;
  double time_;
};

struct AdaptivityFailure : Error {
  explicit AdaptivityFailure(const std::string& what)
      : Error(ErrorCode::kAdaptivityFailure, what) {}
};

struct ConfigError : Error {
  ConfigError(ErrorCode code, const std::string& what) : Error(code, what) {}
};

}  // namespace emlmc
