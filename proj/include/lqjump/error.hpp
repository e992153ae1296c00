#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lqjump {

/// Failure categories surfaced by the library. The CLI maps each one to a
/// distinct process exit code (see `exit_code`).
enum class ErrorCode {
    InvalidArgument,
    ViolatedAssumption,
    NotPSD,
    NeitherCase,
    OutOfRange,
    NonCoercive,
    ConvexityViolated,
    BlowUp,
    InvariantViolation,
    NonFinite,
    DegenerateDual,
    InfeasibleTarget,
    ParseError,
    SchemaError,
    IOError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ViolatedAssumption: return "ViolatedAssumption";
        case ErrorCode::NotPSD: return "NotPSD";
        case ErrorCode::NeitherCase: return "NeitherCase";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::NonCoercive: return "NonCoercive";
        case ErrorCode::ConvexityViolated: return "ConvexityViolated";
        case ErrorCode::BlowUp: return "BlowUp";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::DegenerateDual: return "DegenerateDual";
        case ErrorCode::InfeasibleTarget: return "InfeasibleTarget";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::IOError: return "IOError";
    }
    return "Unknown";
}

/// Exit status used by the command line tool. 1 is reserved for failed
/// verification checks, 2 for usage errors.
constexpr int exit_code(ErrorCode code) noexcept {
    return 3 + static_cast<int>(code);
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

    ErrorCode code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace lqjump
