#include "holonsim/verifier.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "holonsim/error.hpp"

namespace holonsim {

using json = nlohmann::json;

json VerifyReport::to_json() const {
    json v = json::array();
    for (const auto& x : violations)
        v.push_back({{"tick", x.tick}, {"seq", x.seq}, {"check", x.check}, {"message", x.message}});
    return {{"ok", ok()}, {"records", records}, {"hash", hash}, {"violations", v}};
}

std::string VerifyReport::to_text() const {
    std::ostringstream out;
    for (const auto& v : violations)
        out << "tick=" << v.tick << " seq=" << v.seq << " [" << v.check << "] " << v.message << '\n';
    return out.str();
}

namespace {

using Key = std::pair<std::string, int>;  // plan id, revision

std::string str(const json& j, const char* k) {
    auto it = j.find(k);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

int num(const json& j, const char* k) {
    auto it = j.find(k);
    return it != j.end() && it->is_number_integer() ? it->get<int>() : -1;
}

struct Checker {
    std::vector<LogViolation>& out;
    const LogRecord* at = nullptr;

    void fail(const char* check, const std::string& msg) const { out.push_back({at->tick, at->seq, check, msg}); }
};

std::string key_str(const Key& k) { return k.first + "@" + std::to_string(k.second); }

void check_format(const std::vector<LogRecord>& records, std::vector<LogViolation>& out) {
    Tick last = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.seq != i)
            out.push_back({r.tick, r.seq, "log_format", "seq " + std::to_string(r.seq) + " where " +
                                                            std::to_string(i) + " was expected"});
        if (r.tick < last) out.push_back({r.tick, r.seq, "log_format", "tick went backwards"});
        last = std::max(last, r.tick);
    }
}

// Gate totality and ordering: every (plan, revision) passes steps 1, 2, 3 in
// order before exactly one outcome, nothing activates without a cleared or
// fallback outcome, and no leg (air legs in particular) starts before its
// plan revision was activated.
void check_gate(const std::vector<LogRecord>& records, std::vector<LogViolation>& out) {
    Checker c{out};
    std::map<Key, int> last_step;
    std::map<Key, bool> failed_step;
    std::map<Key, std::string> outcome;
    std::set<Key> activated;
    for (const auto& r : records) {
        c.at = &r;
        const auto& p = r.payload;
        if (r.kind == "gate_step") {
            const Key k{str(p, "plan_id"), num(p, "revision")};
            const int step = num(p, "step");
            const int prev = last_step.count(k) ? last_step[k] : 0;
            if (outcome.count(k)) c.fail("gate_ordering", "step after outcome for " + key_str(k));
            if (step != prev + 1)
                c.fail("gate_ordering", "step " + std::to_string(step) + " after step " + std::to_string(prev) +
                                            " for " + key_str(k));
            if (failed_step[k]) c.fail("gate_ordering", "step after a failed step for " + key_str(k));
            if (!p.value("passed", false)) failed_step[k] = true;
            last_step[k] = step;
        } else if (r.kind == "gate_outcome") {
            const Key k{str(p, "plan_id"), num(p, "revision")};
            const auto o = str(p, "outcome");
            if (outcome.count(k)) c.fail("gate_ordering", "second outcome for " + key_str(k));
            const int reached = last_step.count(k) ? last_step[k] : 0;
            if (o == "rejected" ? reached < 1 : reached < 3)
                c.fail("gate_ordering", "outcome " + o + " after only " + std::to_string(reached) + " steps for " +
                                            key_str(k));
            if (o != "rejected" && failed_step[k]) c.fail("gate_ordering", o + " despite a failed step");
            outcome[k] = o;
        } else if (r.kind == "plan_activated") {
            const Key k{str(p, "plan_id"), num(p, "revision")};
            auto it = outcome.find(k);
            if (it == outcome.end() || (it->second != "cleared" && it->second != "fallback_activated"))
                c.fail("gate_totality", "plan " + key_str(k) + " activated without a cleared gate");
            activated.insert(k);
        } else if (r.kind == "status" && str(p, "kind") == "leg_started") {
            const Key k{str(p, "plan"), num(p, "revision")};
            const bool air = p.contains("detail") && str(p.at("detail"), "mode") == "air_taxi";
            auto it = outcome.find(k);
            const bool cleared = it != outcome.end() && (it->second == "cleared" || it->second == "fallback_activated");
            if (!cleared || !activated.count(k))
                c.fail("gate_totality", std::string(air ? "air " : "") + "leg " + str(p, "leg") + " of " +
                                            key_str(k) + " started without a cleared gate record");
        }
    }
}

// Per leg: started before progress or terminal, at most one terminal;
// per plan: one open leg at a time, legs in plan order.
void check_status(const std::vector<LogRecord>& records, std::vector<LogViolation>& out) {
    Checker c{out};
    struct LegTrack {
        bool started = false;
        bool terminal = false;
        bool completed = false;
    };
    std::map<std::pair<std::string, std::string>, LegTrack> legs;  // (plan, leg)
    std::map<std::string, std::set<std::string>> open;            // plan -> open legs
    std::map<std::string, std::vector<std::pair<std::string, bool>>> order;  // plan -> (leg, done in plan)
    for (const auto& r : records) {
        c.at = &r;
        const auto& p = r.payload;
        if (r.kind == "plan_activated" && p.contains("plan")) {
            auto& o = order[str(p, "plan_id")];
            o.clear();
            for (const auto& l : p.at("plan").value("legs", json::array()))
                o.emplace_back(str(l, "leg_id"), str(l, "state") == "completed");
            continue;
        }
        if (r.kind != "status") continue;
        const auto plan = str(p, "plan");
        const auto leg = str(p, "leg");
        const auto kind = str(p, "kind");
        auto& t = legs[{plan, leg}];
        const std::string who = plan + "/" + leg;
        if (kind == "leg_started") {
            if (t.started) c.fail("status_discipline", who + " started twice");
            if (!open[plan].empty()) c.fail("status_discipline", who + " started while " + *open[plan].begin() + " is open");
            for (const auto& [id, done] : order[plan]) {
                if (id == leg) break;
                if (!done && !legs[{plan, id}].completed)
                    c.fail("status_discipline", who + " started before earlier leg " + id + " completed");
            }
            t.started = true;
            open[plan].insert(leg);
        } else if (kind == "leg_progress") {
            if (!t.started || t.terminal) c.fail("status_discipline", who + " progress outside started..terminal");
        } else if (kind == "leg_completed" || kind == "leg_blocked") {
            if (t.terminal) c.fail("status_discipline", who + " has a second terminal event");
            if (!t.started) c.fail("status_discipline", who + " terminal event without leg_started");
            t.terminal = true;
            t.completed = kind == "leg_completed";
            open[plan].erase(leg);
        } else if (kind == "resource_fault") {
            if (t.terminal) c.fail("status_discipline", who + " fault after terminal event");
        } else {
            c.fail("status_discipline", who + " unknown status kind '" + kind + "'");
        }
    }
}

// A pending approval is resolved by the operator, withdrawn, or falls back
// no later than one tick after timeout_at, and never before it.
void check_fallback(const std::vector<LogRecord>& records, std::vector<LogViolation>& out) {
    Checker c{out};
    struct Pending {
        Tick timeout_at = 0;
        const LogRecord* requested = nullptr;
        bool resolved = false;
    };
    std::map<std::string, Pending> approvals;
    for (const auto& r : records) {
        c.at = &r;
        const auto& p = r.payload;
        const auto aid = str(p, "approval_id");
        if (r.kind == "approval_requested") {
            approvals[aid] = {p.value("timeout_at", Tick{0}), &r, false};
            continue;
        }
        if (aid.empty() || !approvals.count(aid)) continue;
        auto& a = approvals[aid];
        const bool resolution = r.kind == "approval_decided" || r.kind == "approval_withdrawn" ||
                                (r.kind == "gate_outcome" && str(p, "outcome") != "cleared" &&
                                 str(p, "reason") != "operator");
        if (r.kind == "gate_outcome" && str(p, "outcome") == "fallback_activated") {
            if (r.tick < a.timeout_at) c.fail("fallback_timeliness", aid + " fell back before timeout_at");
            if (r.tick > a.timeout_at + 1)
                c.fail("fallback_timeliness", aid + " fell back at " + std::to_string(r.tick) + ", timeout_at " +
                                                  std::to_string(a.timeout_at));
        }
        if (!resolution) continue;
        if (a.resolved && r.kind != "gate_outcome") c.fail("fallback_timeliness", aid + " resolved twice");
        if (!a.resolved && r.tick > a.timeout_at + 1)
            c.fail("fallback_timeliness", aid + " still pending after timeout_at + 1");
        a.resolved = true;
    }
    if (records.empty()) return;
    const Tick end = records.back().tick;
    for (const auto& [aid, a] : approvals) {
        if (a.resolved || end <= a.timeout_at + 1) continue;
        c.at = a.requested;
        c.fail("fallback_timeliness", aid + " never resolved although the log runs to tick " + std::to_string(end));
    }
}

}  // namespace

VerifyReport verify_log(const std::vector<LogRecord>& records) {
    VerifyReport rep;
    rep.records = records.size();
    std::string text;
    for (const auto& r : records) text += r.to_line() + "\n";
    rep.hash = sha256_hex(text);
    check_format(records, rep.violations);
    check_gate(records, rep.violations);
    check_status(records, rep.violations);
    check_fallback(records, rep.violations);
    std::stable_sort(rep.violations.begin(), rep.violations.end(),
                     [](const LogViolation& a, const LogViolation& b) { return a.seq < b.seq; });
    return rep;
}

VerifyReport verify_text(std::string_view text) {
    std::vector<LogRecord> records;
    std::vector<LogViolation> bad;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(LogRecord::parse(line));
        } catch (const std::exception& e) {
            bad.push_back({0, line_no - 1, "log_format", "line " + std::to_string(line_no) + ": " + e.what()});
        }
    }
    VerifyReport rep = verify_log(records);
    rep.hash = sha256_hex(text);
    rep.violations.insert(rep.violations.begin(), bad.begin(), bad.end());
    return rep;
}

VerifyReport verify_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return verify_text(buf.str());
}

// ------------------------------------------------------------------ templates

namespace {

struct Cursor {
    const std::vector<LogRecord>& records;
    std::size_t pos = 0;
    std::vector<LogViolation>& out;

    // Advances to the first record at or after pos that matches; reports the
    // stage as missing otherwise.
    const LogRecord* find(const std::string& stage, const std::function<bool(const LogRecord&)>& pred) {
        for (std::size_t i = pos; i < records.size(); ++i) {
            if (pred(records[i])) {
                pos = i + 1;
                return &records[i];
            }
        }
        const Tick t = pos < records.size() ? records[pos].tick : (records.empty() ? 0 : records.back().tick);
        out.push_back({t, pos, "template", "missing in order: " + stage});
        return nullptr;
    }
};

bool is_message(const LogRecord& r, const std::string& from, const std::string& to, const std::string& topic) {
    if (r.kind != "message") return false;
    const auto& p = r.payload;
    return str(p, "sender") == from && str(p, "recipient") == to && p.contains("payload") &&
           str(p.at("payload"), "topic") == topic;
}

}  // namespace

std::vector<LogViolation> check_template(const std::vector<LogRecord>& records, const std::string& name,
                                      const std::string& passenger) {
    if (name != "fig5") throw Error(ErrorCode::ConfigError, "unknown template '" + name + "'");
    std::vector<LogViolation> out;
    Cursor cur{records, 0, out};
    const std::string sos = "S-SoS";
    const std::string planner = sos + "/Planner";

    const auto* req = cur.find("passenger request " + passenger + " -> S-SoS", [&](const LogRecord& r) {
        return is_message(r, sos + "/" + passenger, sos, "trip_request");
    });
    if (!req) return out;
    const auto rid = str(req->payload.at("payload"), "request_id");
    auto for_request = [&](const json& p) { return str(p, "request_id") == rid; };

    if (!cur.find("S-SoS -> Planner plan request", [&](const LogRecord& r) {
            return is_message(r, sos, planner, "plan_request") && for_request(r.payload.at("payload"));
        }))
        return out;

    std::string plan_id;
    int revision = -1;
    const auto* prop = cur.find("Planner proposal with legs T_a1, T_a2, T_a3", [&](const LogRecord& r) {
        if (!is_message(r, planner, sos, "plan_proposal") || str(r.payload, "kind") != "propose") return false;
        const auto& body = r.payload.at("payload");
        if (!for_request(body) || !body.contains("plan")) return false;
        std::vector<std::string> ids;
        for (const auto& l : body.at("plan").value("legs", json::array())) ids.push_back(str(l, "leg_id"));
        return ids == std::vector<std::string>{"T_a1", "T_a2", "T_a3"};
    });
    if (!prop) return out;
    plan_id = str(prop->payload.at("payload").at("plan"), "plan_id");
    revision = num(prop->payload.at("payload").at("plan"), "revision");

    for (int step = 1; step <= 3; ++step) {
        if (!cur.find("gate step " + std::to_string(step), [&](const LogRecord& r) {
                return r.kind == "gate_step" && str(r.payload, "plan_id") == plan_id &&
                       num(r.payload, "revision") == revision && num(r.payload, "step") == step &&
                       r.payload.value("passed", false);
            }))
            return out;
    }

    // Both fleets, in either order.
    const std::size_t after_gate = cur.pos;
    std::size_t furthest = after_gate;
    for (const auto* fleet : {"S-CS1", "S-CS2"}) {
        cur.pos = after_gate;
        if (!cur.find(std::string("dispatch to ") + fleet, [&](const LogRecord& r) {
                return is_message(r, sos, sos + "/" + fleet, "dispatch") && str(r.payload, "kind") == "command" &&
                       for_request(r.payload.at("payload"));
            }))
            return out;
        furthest = std::max(furthest, cur.pos);
    }
    cur.pos = furthest;

    for (const auto* leg : {"T_a1", "T_a2", "T_a3"}) {
        for (const auto* kind : {"leg_started", "leg_completed"}) {
            if (!cur.find(std::string(kind) + " " + leg, [&](const LogRecord& r) {
                    return r.kind == "status" && for_request(r.payload) && str(r.payload, "plan") == plan_id &&
                           str(r.payload, "leg") == leg && str(r.payload, "kind") == kind;
                }))
                return out;
        }
    }
    cur.find("trip completion", [&](const LogRecord& r) {
        return r.kind == "trip_completed" && for_request(r.payload);
    });
    return out;
}

}  // namespace holonsim
