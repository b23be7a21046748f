#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace holonsim {

enum class ErrorCode {
    NoRoute,
    DuplicateDisruption,
    UnknownTarget,
    DuplicateId,
    MissingParent,
    SecondRoot,
    UnknownRecipient,
    UnknownHolon,
    RootDetach,
    InvalidCapability,
    NeedsClarification,
    NoFeasiblePlan,
    NoFeasibleRevision,
    BackendUnavailable,
    SchemaViolation,
    Timeout,
    NoCandidate,
    UnknownCorrelation,
    NoProvider,
    SchemaError,
    UnknownRun,
    UnknownPassenger,
    UnknownApproval,
    InvalidOverridePlan,
    InvalidCommand,
    ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure the library reports carries one of the codes above. The
/// message holds the human-readable detail (for SchemaError, the path to the
/// offending field; for NeedsClarification, the machine-readable reason).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail),
          code_(code),
          detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace holonsim
