#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace promptprog {

enum class ErrorCode {
  MalformedDefinition,
  DuplicateProblemId,
  InvariantViolation,
  UnknownProblem,
  UnknownSession,
  LimitReached,
  EmptyMessage,
  ProviderFailure,
  NoCodeAvailable,
  UnsupportedType,
  ToolchainMissing,
  SandboxSetupFailure,
  StorageFailure,
  CorruptLog,
  InvalidConfig,
  InvalidArgument,
};

/// Stable upper-snake spelling used in API error bodies and CLI diagnostics.
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace promptprog
