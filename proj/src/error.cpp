#include "promptprog/error.hpp"

namespace promptprog {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedDefinition: return "MALFORMED_DEFINITION";
    case ErrorCode::DuplicateProblemId: return "DUPLICATE_PROBLEM_ID";
    case ErrorCode::InvariantViolation: return "INVARIANT_VIOLATION";
    case ErrorCode::UnknownProblem: return "UNKNOWN_PROBLEM";
    case ErrorCode::UnknownSession: return "UNKNOWN_SESSION";
    case ErrorCode::LimitReached: return "LIMIT_REACHED";
    case ErrorCode::EmptyMessage: return "EMPTY_MESSAGE";
    case ErrorCode::ProviderFailure: return "PROVIDER_FAILURE";
    case ErrorCode::NoCodeAvailable: return "NO_CODE_AVAILABLE";
    case ErrorCode::UnsupportedType: return "UNSUPPORTED_TYPE";
    case ErrorCode::ToolchainMissing: return "TOOLCHAIN_MISSING";
    case ErrorCode::SandboxSetupFailure: return "SANDBOX_SETUP_FAILURE";
    case ErrorCode::StorageFailure: return "STORAGE_FAILURE";
    case ErrorCode::CorruptLog: return "CORRUPT_LOG";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

}  // namespace promptprog
