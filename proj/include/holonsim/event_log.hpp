#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/types.hpp"

namespace holonsim {

/// One line of the merged run log: {"tick":..,"seq":..,"kind":..,"payload":..}.
struct LogRecord {
    Tick tick = 0;
    std::uint64_t seq = 0;
    std::string kind;
    nlohmann::json payload;

    std::string to_line() const;
    static LogRecord parse(std::string_view line);
};

std::string sha256_hex(std::string_view data);

/// Append-only, internally synchronized run log. Sequence numbers start at
/// zero and are contiguous; ticks never decrease. When a file is attached
/// every line is flushed as it is appended, so the file and the in-memory
/// copy are byte-identical.
class EventLog {
public:
    EventLog() = default;
    explicit EventLog(const std::filesystem::path& file);

    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    std::uint64_t append(Tick tick, std::string kind, nlohmann::json payload);

    std::size_t size() const;
    std::uint64_t next_seq() const;
    std::vector<LogRecord> records(std::uint64_t from_seq = 0) const;
    std::vector<std::string> lines(std::uint64_t from_seq = 0) const;
    /// Concatenation of lines from from_seq, each terminated by '\n'.
    std::string text(std::uint64_t from_seq = 0) const;
    std::string hash() const;

    void close();
    bool closed() const;
    /// Blocks until a record with seq >= from_seq exists, the log closes, or
    /// the timeout passes. Returns true when new records are available.
    bool wait_for(std::uint64_t from_seq, std::chrono::milliseconds timeout) const;

    static std::vector<LogRecord> read_file(const std::filesystem::path& file);

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::vector<LogRecord> records_;
    std::vector<std::string> lines_;
    std::optional<std::ofstream> file_;
    Tick last_tick_ = 0;
    bool closed_ = false;
};

}  // namespace holonsim
