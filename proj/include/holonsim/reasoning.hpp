#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/city_graph.hpp"
#include "holonsim/disruption.hpp"
#include "holonsim/holarchy.hpp"
#include "holonsim/types.hpp"
#include "holonsim/world.hpp"

namespace holonsim {

enum class ConstraintKind { avoid_turbulence, max_cost, ground_only };
NLOHMANN_JSON_SERIALIZE_ENUM(ConstraintKind, {{ConstraintKind::avoid_turbulence, "avoid_turbulence"},
                                              {ConstraintKind::max_cost, "max_cost"},
                                              {ConstraintKind::ground_only, "ground_only"}})

struct Constraint {
    ConstraintKind kind = ConstraintKind::avoid_turbulence;
    // max_cost only: upper bound on door-to-door ticks.
    std::optional<Tick> value;
    bool operator==(const Constraint&) const = default;
};

struct TaskSpec {
    std::string request_id;
    HolonId passenger;
    std::string origin;
    std::string destination;
    Tick earliest_departure = 0;
    std::vector<Constraint> constraints;
    std::string free_text;
    bool cancellation = false;

    bool has(ConstraintKind kind) const;
    std::optional<Tick> max_cost() const;
};

enum class LegState { pending, active, completed };
NLOHMANN_JSON_SERIALIZE_ENUM(LegState, {{LegState::pending, "pending"},
                                        {LegState::active, "active"},
                                        {LegState::completed, "completed"}})

struct Leg {
    std::string leg_id;
    LegMode mode = LegMode::scooter;
    std::string origin;
    std::string destination;
    Route route;
    std::optional<std::string> assigned_resource;
    Tick planned_start = 0;
    Tick planned_end = 0;
    LegState state = LegState::pending;

    Tick duration() const { return planned_end - planned_start; }
};

enum class PlanStatus { draft, validated, approved, active, completed, aborted };
NLOHMANN_JSON_SERIALIZE_ENUM(PlanStatus, {{PlanStatus::draft, "draft"},
                                          {PlanStatus::validated, "validated"},
                                          {PlanStatus::approved, "approved"},
                                          {PlanStatus::active, "active"},
                                          {PlanStatus::completed, "completed"},
                                          {PlanStatus::aborted, "aborted"}})

struct Plan {
    std::string plan_id;
    std::string request_id;
    std::vector<Leg> legs;
    PlanStatus status = PlanStatus::draft;
    int revision = 0;
    bool fallback = false;

    /// Estimated door-to-door ticks from the first leg's start.
    Tick estimated_time() const;
    bool has_air_leg() const;
    std::size_t first_open_leg() const;
};

void to_json(nlohmann::json& j, const Constraint& c);
void from_json(const nlohmann::json& j, Constraint& c);
void to_json(nlohmann::json& j, const TaskSpec& s);
void from_json(const nlohmann::json& j, TaskSpec& s);
void to_json(nlohmann::json& j, const Leg& l);
void from_json(const nlohmann::json& j, Leg& l);
void to_json(nlohmann::json& j, const Plan& p);
void from_json(const nlohmann::json& j, Plan& p);

/// An air leg's claim on its two vertiports over [start, end).
struct VertiportReservation {
    std::string vertiport;
    std::string plan_id;
    std::string leg_id;
    Tick start = 0;
    Tick end = 0;
};

/// Passenger progress through the active plan.
struct TripProgress {
    std::string location;
    std::size_t current_leg = 0;
    // Edges of the current leg already traversed.
    std::size_t traversed_edges = 0;
};

/// Everything a reasoner may look at. Built from the world at one tick;
/// the digest is a pure function of the contents.
struct ReasonerContext {
    Tick tick = 0;
    std::shared_ptr<const CityGraph> graph;
    std::vector<Disruption> disruptions;
    std::map<std::string, ResourceState> resources;
    std::vector<VertiportReservation> reservations;
    std::map<std::string, std::string> passenger_locations;
    std::vector<nlohmann::json> history;
    std::string rules_digest;

    static ReasonerContext from_world(const World& world);
    nlohmann::json digest() const;
};

enum class AdjustmentKind { delay_departure, advance_departure, cancel, reprioritize };
NLOHMANN_JSON_SERIALIZE_ENUM(AdjustmentKind, {{AdjustmentKind::delay_departure, "delay_departure"},
                                              {AdjustmentKind::advance_departure, "advance_departure"},
                                              {AdjustmentKind::cancel, "cancel"},
                                              {AdjustmentKind::reprioritize, "reprioritize"}})

struct ScheduleAdjustment {
    std::string request_id;
    AdjustmentKind kind = AdjustmentKind::delay_departure;
    Tick magnitude = 0;
};

void to_json(nlohmann::json& j, const ScheduleAdjustment& a);
void from_json(const nlohmann::json& j, ScheduleAdjustment& a);

inline constexpr Tick kDefaultDelayTicks = 6;

struct Violation {
    std::string rule;
    std::string leg_id;
    std::string detail;
};

struct Verdict {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

nlohmann::json verdict_json(const Verdict& v);

struct RuleSpec {
    std::string id;
    bool enabled = true;
    nlohmann::json params = nlohmann::json::object();
};

/// Machine-readable toy regulation set. Known rule ids: plan_structure,
/// no_fly_zone, vertiport_closed, vertiport_capacity, battery_insufficient,
/// resource_overlap.
class RuleSet {
public:
    static RuleSet defaults();
    static RuleSet from_json(const nlohmann::json& doc);
    static RuleSet load(const std::filesystem::path& file);

    bool enabled(std::string_view id) const;
    nlohmann::json params(std::string_view id) const;
    const std::vector<RuleSpec>& rules() const { return rules_; }
    nlohmann::json to_json() const;
    std::string digest() const;

private:
    std::vector<RuleSpec> rules_;
};

// ---- rule-based reasoning (the deterministic mock backend) ----

/// Throws NeedsClarification with the reason as detail.
TaskSpec parse_request(std::string_view text, const ReasonerContext& ctx,
                       const std::string& request_id, const HolonId& passenger);

/// One modal combination: ground only, or ground -> air -> ground through a
/// vertiport pair. Ground legs adjacent to a vertiport endpoint are omitted
/// when empty.
struct ModalCandidate {
    std::string label;
    std::vector<Leg> legs;
    Tick total_time = 0;
};

struct CandidateFilter {
    bool ground = true;
    bool air = true;
};

/// All admissible combinations from origin, best first (ties keep
/// enumeration order: ground-only first, then vertiport pairs by id).
std::vector<ModalCandidate> enumerate_modal_plans(const TaskSpec& spec, const ReasonerContext& ctx,
                                                  const std::string& origin, Tick departure,
                                                  CandidateFilter filter = {});

/// Throws NoFeasiblePlan.
Plan generate_plan(const TaskSpec& spec, const ReasonerContext& ctx);

/// Spec-independent structural checks on the leg chain.
std::vector<std::string> leg_chain_problems(const Plan& plan, const CityGraph& graph);
/// Full structural invariants including endpoints against the spec.
std::vector<std::string> plan_structure_problems(const Plan& plan, const TaskSpec& spec,
                                                 const CityGraph& graph);

Verdict validate_plan(const Plan& plan, const RuleSet& rules, const ReasonerContext& ctx);

/// Battery percentage a resource spends to reach a leg and ride it.
int battery_needed(ResourceKind kind, Tick approach_ticks, Tick leg_ticks);

/// Approach time for a resource to reach node; nullopt when unreachable.
std::optional<Tick> approach_ticks(const ResourceState& r, const std::string& node,
                                   const CityGraph& graph, std::span<const Disruption> active);

struct RevisionTrigger {
    std::string kind;    // "disruption" | "status"
    std::string detail;  // disruption id or status kind
};

/// Preference order: reroute same mode, alternate vertiport, ground taxi.
/// Throws NoFeasibleRevision.
Plan revise_plan(const Plan& plan, const TaskSpec& spec, const RevisionTrigger& trigger,
                 const TripProgress& progress, const RuleSet& rules, const ReasonerContext& ctx);

/// Completed prefix of plan with the partially traversed current leg split off.
std::vector<Leg> completed_prefix(const Plan& plan, const TripProgress& progress,
                                  const ReasonerContext& ctx);

/// Best ground-only continuation from the passenger's location; nullopt
/// when no ground route exists.
std::optional<Plan> ground_only_plan(const Plan& base, const TaskSpec& spec,
                                     const TripProgress& progress, const ReasonerContext& ctx);

/// Throws NeedsClarification.
ScheduleAdjustment interpret_update(std::string_view text, const ReasonerContext& ctx,
                                    const std::string& request_id);

/// Re-times legs from index `from` so each starts no earlier than `earliest`
/// and no earlier than the previous leg's end.
void retime_legs(std::vector<Leg>& legs, std::size_t from, Tick earliest);

}  // namespace holonsim
