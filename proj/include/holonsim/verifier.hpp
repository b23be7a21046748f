#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/event_log.hpp"

namespace holonsim {

struct LogViolation {
    Tick tick = 0;
    std::uint64_t seq = 0;
    std::string check;  // log_format, gate_totality, gate_ordering, status_discipline, fallback_timeliness, template
    std::string message;
};

struct VerifyReport {
    std::vector<LogViolation> violations;
    std::size_t records = 0;
    std::string hash;  // sha256 of the log text as read

    bool ok() const { return violations.empty(); }
    nlohmann::json to_json() const;
    /// One line per violation: "tick=T seq=S [check] message".
    std::string to_text() const;
};

/// Re-checks every log-level invariant over a merged log.
VerifyReport verify_log(const std::vector<LogRecord>& records);
/// Parses NDJSON text first; malformed lines become log_format violations.
VerifyReport verify_text(std::string_view text);
VerifyReport verify_file(const std::filesystem::path& file);

/// Sequence templates. "fig5": the passenger's first request goes
/// passenger -> S-SoS -> Planner, the Planner proposes three legs
/// T_a1..T_a3, gate steps 1, 2, 3 follow, both fleets are dispatched, the
/// legs start and complete in order and the trip completes.
std::vector<LogViolation> check_template(const std::vector<LogRecord>& records, const std::string& name,
                                      const std::string& passenger);

}  // namespace holonsim
