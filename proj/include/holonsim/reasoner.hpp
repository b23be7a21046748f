#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "holonsim/reasoning.hpp"

namespace holonsim {

inline constexpr const char* kSchemaVersion = "holonsim.reasoner/1";

// Tasks a backend understands.
namespace task {
inline constexpr const char* parse_request = "parse_request";
inline constexpr const char* generate_plan = "generate_plan";
inline constexpr const char* revise_plan = "revise_plan";
inline constexpr const char* interpret_update = "interpret_update";
}  // namespace task

struct Prompt {
    std::string role_prompt;
    std::string task;
    nlohmann::json input = nlohmann::json::object();
    // Not serialized: the full snapshot the mock computes from. The wire
    // form carries only its digest.
    const ReasonerContext* context = nullptr;
    const RuleSet* rules = nullptr;

    nlohmann::json wire() const;
};

class Reasoner {
public:
    virtual ~Reasoner() = default;
    virtual std::string id() const = 0;
    /// Returns the task's response document.
    virtual nlohmann::json call(const Prompt& prompt) = 0;
};

/// Deterministic rule-based backend. Output is a pure function of the
/// prompt; domain errors (NeedsClarification, NoFeasiblePlan, ...) propagate
/// as exceptions.
class MockReasoner : public Reasoner {
public:
    std::string id() const override { return "mock"; }
    nlohmann::json call(const Prompt& prompt) override;
};

/// POSTs the wire prompt to an HTTP endpoint and schema-checks the answer.
class RemoteReasoner : public Reasoner {
public:
    RemoteReasoner(std::string url, std::chrono::milliseconds budget);
    std::string id() const override { return "remote"; }
    nlohmann::json call(const Prompt& prompt) override;

private:
    std::string scheme_host_port_;
    std::string path_;
    std::chrono::milliseconds budget_;
};

/// Throws SchemaViolation when response does not fit the task's schema.
void check_response_schema(const std::string& task, const nlohmann::json& response);

struct FallbackNotice {
    std::string task;
    std::string backend;
    std::string error;
};

/// Typed facade used by the holons. Calls the configured backend and drops
/// to the mock on BackendUnavailable, SchemaViolation or Timeout.
class ReasoningEngine {
public:
    explicit ReasoningEngine(std::shared_ptr<Reasoner> backend = nullptr);

    void on_fallback(std::function<void(const FallbackNotice&)> cb) { on_fallback_ = std::move(cb); }
    const std::string& backend_id() const { return backend_id_; }

    TaskSpec parse_request(std::string_view text, const ReasonerContext& ctx,
                           const std::string& request_id, const HolonId& passenger);
    Plan generate_plan(const TaskSpec& spec, const ReasonerContext& ctx);
    Plan revise_plan(const Plan& plan, const TaskSpec& spec, const RevisionTrigger& trigger,
                     const TripProgress& progress, const RuleSet& rules, const ReasonerContext& ctx);
    ScheduleAdjustment interpret_update(std::string_view text, const ReasonerContext& ctx,
                                        const std::string& request_id);

private:
    nlohmann::json call(const Prompt& prompt);

    std::shared_ptr<Reasoner> backend_;
    MockReasoner mock_;
    std::string backend_id_;
    std::function<void(const FallbackNotice&)> on_fallback_;
};

}  // namespace holonsim
