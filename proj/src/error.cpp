#include "holonsim/error.hpp"

namespace holonsim {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NoRoute: return "NoRoute";
        case ErrorCode::DuplicateDisruption: return "DuplicateDisruption";
        case ErrorCode::UnknownTarget: return "UnknownTarget";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::MissingParent: return "MissingParent";
        case ErrorCode::SecondRoot: return "SecondRoot";
        case ErrorCode::UnknownRecipient: return "UnknownRecipient";
        case ErrorCode::UnknownHolon: return "UnknownHolon";
        case ErrorCode::RootDetach: return "RootDetach";
        case ErrorCode::InvalidCapability: return "InvalidCapability";
        case ErrorCode::NeedsClarification: return "NeedsClarification";
        case ErrorCode::NoFeasiblePlan: return "NoFeasiblePlan";
        case ErrorCode::NoFeasibleRevision: return "NoFeasibleRevision";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::NoCandidate: return "NoCandidate";
        case ErrorCode::UnknownCorrelation: return "UnknownCorrelation";
        case ErrorCode::NoProvider: return "NoProvider";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::UnknownRun: return "UnknownRun";
        case ErrorCode::UnknownPassenger: return "UnknownPassenger";
        case ErrorCode::UnknownApproval: return "UnknownApproval";
        case ErrorCode::InvalidOverridePlan: return "InvalidOverridePlan";
        case ErrorCode::InvalidCommand: return "InvalidCommand";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace holonsim
