#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/reasoning.hpp"

namespace holonsim {

enum class RiskClass { low, high };
NLOHMANN_JSON_SERIALIZE_ENUM(RiskClass, {{RiskClass::low, "low"}, {RiskClass::high, "high"}})

enum class StatusKind { leg_started, leg_progress, leg_blocked, leg_completed, resource_fault };
NLOHMANN_JSON_SERIALIZE_ENUM(StatusKind, {{StatusKind::leg_started, "leg_started"},
                                          {StatusKind::leg_progress, "leg_progress"},
                                          {StatusKind::leg_blocked, "leg_blocked"},
                                          {StatusKind::leg_completed, "leg_completed"},
                                          {StatusKind::resource_fault, "resource_fault"}})

inline bool is_terminal(StatusKind k) { return k == StatusKind::leg_blocked || k == StatusKind::leg_completed; }

struct StatusEvent {
    HolonId source;
    std::string plan_id;
    int revision = 0;
    std::string task_id;  // leg id
    StatusKind kind = StatusKind::leg_progress;
    Tick tick = 0;
    nlohmann::json detail = nlohmann::json::object();
};

nlohmann::json status_json(const StatusEvent& ev);

enum class DecisionKind { approved, overridden, rejected };
NLOHMANN_JSON_SERIALIZE_ENUM(DecisionKind, {{DecisionKind::approved, "approved"},
                                            {DecisionKind::overridden, "overridden"},
                                            {DecisionKind::rejected, "rejected"}})

struct ApprovalDecision {
    DecisionKind kind = DecisionKind::approved;
    std::optional<std::string> override_plan_id;
    std::string decided_by;
    Tick at = 0;
};

struct ApprovalRequest {
    std::string approval_id;
    std::string plan_id;
    std::string request_id;
    int revision = 0;
    RiskClass risk_class = RiskClass::high;
    Tick submitted_at = 0;
    Tick timeout_at = 0;
    Plan plan;
    std::optional<Plan> fallback_plan;
    std::optional<ApprovalDecision> decision;
    bool fallback_activated = false;
    // The trip ended (e.g. cancelled) before anyone decided.
    bool withdrawn = false;

    bool pending() const { return !decision && !fallback_activated && !withdrawn; }
};

nlohmann::json approval_json(const ApprovalRequest& a);

enum class GateOutcome { cleared, fallback_activated, rejected };
NLOHMANN_JSON_SERIALIZE_ENUM(GateOutcome, {{GateOutcome::cleared, "cleared"},
                                           {GateOutcome::fallback_activated, "fallback_activated"},
                                           {GateOutcome::rejected, "rejected"}})

struct AllocationDecision {
    std::string task_id;
    std::string resource_id;
    double score = 0;
    std::size_t alternatives_considered = 0;
};

nlohmann::json allocation_json(const AllocationDecision& d);

/// One scored candidate. distance is the approach time (or any
/// non-negative measure of it); infeasible candidates are never chosen.
struct CandidateScore {
    std::string id;
    double distance = 0;
    int battery = 0;
    bool feasible = true;
};

/// Argmax of score = -distance; ties by higher battery, then smaller id.
std::optional<std::size_t> select_best(std::span<const CandidateScore> candidates);

std::vector<CandidateScore> score_candidates(const Leg& leg, std::span<const ResourceState> candidates,
                                             const CityGraph& graph, std::span<const Disruption> active);

/// Throws NoCandidate when no candidate is battery-feasible and reachable.
AllocationDecision match_resources(const Leg& leg, std::span<const ResourceState> candidates,
                                   const CityGraph& graph, std::span<const Disruption> active);

/// Resource kind a leg mode is served by; walk needs none.
std::optional<ResourceKind> resource_kind_for(LegMode mode);
/// Capability name advertised by resources of this kind.
std::string capability_for(ResourceKind kind);

/// True when an active disruption covers an edge or vertiport on any
/// remaining leg.
bool disruption_on_route(const Plan& plan, std::span<const Disruption> active, const CityGraph& graph);

/// High when any remaining leg is an air leg or the plan is a revision
/// created while a disruption touched its route.
RiskClass classify_risk(const Plan& plan, bool revised_under_disruption);

/// Gate step 2: every open leg's route is admissible now and every assigned
/// resource is serviceable and either free or already held by this plan.
std::vector<std::string> feasibility_problems(const Plan& plan, const ReasonerContext& ctx);

}  // namespace holonsim
