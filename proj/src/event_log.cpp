#include "holonsim/event_log.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <stdexcept>

#include "holonsim/error.hpp"

namespace holonsim {

std::string LogRecord::to_line() const {
    // Field order is fixed; payload keys are sorted by the json type.
    std::string line = "{\"tick\":" + std::to_string(tick) + ",\"seq\":" + std::to_string(seq) +
                       ",\"kind\":" + nlohmann::json(kind).dump() + ",\"payload\":" +
                       payload.dump() + "}";
    return line;
}

LogRecord LogRecord::parse(std::string_view line) {
    auto j = nlohmann::json::parse(line);
    LogRecord r;
    r.tick = j.at("tick").get<Tick>();
    r.seq = j.at("seq").get<std::uint64_t>();
    r.kind = j.at("kind").get<std::string>();
    r.payload = j.at("payload");
    return r;
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
    std::string hex;
    hex.reserve(len * 2);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

EventLog::EventLog(const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    file_.emplace(file, std::ios::out | std::ios::trunc | std::ios::binary);
    if (!*file_) throw Error(ErrorCode::ConfigError, "cannot open log file " + file.string());
}

std::uint64_t EventLog::append(Tick tick, std::string kind, nlohmann::json payload) {
    std::uint64_t seq;
    {
        std::lock_guard lock(mutex_);
        if (tick < last_tick_) throw std::logic_error("event log tick went backwards");
        last_tick_ = tick;
        seq = records_.size();
        LogRecord rec{tick, seq, std::move(kind), std::move(payload)};
        lines_.push_back(rec.to_line());
        if (file_) {
            *file_ << lines_.back() << '\n';
            file_->flush();
        }
        records_.push_back(std::move(rec));
    }
    changed_.notify_all();
    return seq;
}

std::size_t EventLog::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::uint64_t EventLog::next_seq() const { return size(); }

std::vector<LogRecord> EventLog::records(std::uint64_t from_seq) const {
    std::lock_guard lock(mutex_);
    if (from_seq >= records_.size()) return {};
    return {records_.begin() + static_cast<std::ptrdiff_t>(from_seq), records_.end()};
}

std::vector<std::string> EventLog::lines(std::uint64_t from_seq) const {
    std::lock_guard lock(mutex_);
    if (from_seq >= lines_.size()) return {};
    return {lines_.begin() + static_cast<std::ptrdiff_t>(from_seq), lines_.end()};
}

std::string EventLog::text(std::uint64_t from_seq) const {
    std::string out;
    for (const auto& l : lines(from_seq)) {
        out += l;
        out += '\n';
    }
    return out;
}

std::string EventLog::hash() const { return sha256_hex(text()); }

void EventLog::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
        if (file_) file_->flush();
    }
    changed_.notify_all();
}

bool EventLog::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

bool EventLog::wait_for(std::uint64_t from_seq, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    changed_.wait_for(lock, timeout, [&] { return records_.size() > from_seq || closed_; });
    return records_.size() > from_seq;
}

std::vector<LogRecord> EventLog::read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + file.string());
    std::vector<LogRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(LogRecord::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaError, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace holonsim
