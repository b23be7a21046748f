#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/event_log.hpp"
#include "holonsim/federation.hpp"
#include "holonsim/holarchy.hpp"
#include "holonsim/holons.hpp"
#include "holonsim/reasoner.hpp"
#include "holonsim/scenario.hpp"
#include "holonsim/world.hpp"

namespace holonsim {

// Leg substitution: a scooter leg with no scooter becomes a walk when the
// walk takes at most this many ticks.
inline constexpr Tick kMaxWalkTicks = 5;

struct SimOptions {
    std::optional<std::uint64_t> seed;
    StrategyKind strategy = StrategyKind::holonic;
    std::vector<ScriptedAction> script;
    std::shared_ptr<Reasoner> backend;  // null: mock
    std::optional<Tick> approval_timeout;
    // Stop as soon as nothing is left to do; otherwise run to max_ticks.
    bool stop_when_idle = true;
    std::optional<std::filesystem::path> log_file;
    std::optional<std::size_t> kill_middle_after_hop;
};

enum class TripPhase { planning, awaiting_approval, active, replanning, completed, aborted };
NLOHMANN_JSON_SERIALIZE_ENUM(TripPhase, {{TripPhase::planning, "planning"},
                                         {TripPhase::awaiting_approval, "awaiting_approval"},
                                         {TripPhase::active, "active"},
                                         {TripPhase::replanning, "replanning"},
                                         {TripPhase::completed, "completed"},
                                         {TripPhase::aborted, "aborted"}})

struct Trip {
    std::string request_id;
    std::string passenger;
    HolonId passenger_id;
    std::string text;
    TaskSpec spec;
    TripPhase phase = TripPhase::planning;
    std::optional<Plan> plan;      // the active plan
    std::optional<Plan> proposal;  // draft going through the gate
    bool proposal_under_disruption = false;
    std::optional<std::string> approval_id;

    std::string location;
    std::size_t current_leg = 0;
    std::size_t traversed_edges = 0;
    // Edge currently being traversed by the passenger.
    struct Moving {
        std::string edge;
        std::string to;
        Tick arrival = 0;
        bool walking = false;
        bool done = false;
    };
    std::optional<Moving> moving;
    std::map<std::string, HolonId> tasks;  // leg id -> task holon

    std::optional<std::uint64_t> last_message;
    std::optional<Tick> first_activation;
    std::optional<Tick> finished_at;
    bool urgent = false;
    int revisions = 0;
};

nlohmann::json trip_json(const Trip& t);

struct RunMetrics {
    Tick ticks = 0;
    std::size_t trips_requested = 0;
    std::size_t trips_completed = 0;
    std::size_t trips_aborted = 0;
    std::size_t clarifications = 0;
    std::size_t revisions = 0;
    std::size_t approvals_requested = 0;
    std::size_t approvals_approved = 0;
    std::size_t approvals_overridden = 0;
    std::size_t approvals_rejected = 0;
    std::size_t fallbacks_activated = 0;
    std::size_t reasoner_fallbacks = 0;
    std::size_t messages = 0;
    std::map<std::string, Tick> door_to_door;
    double mean_door_to_door = 0;
    CoordinationMetrics coordination;
    std::string log_hash;

    nlohmann::json to_json() const;
};

/// One simulation run: world, holarchy, holon behaviors, safety gate and the
/// merged log. Not thread-safe; the gateway serializes access.
class Simulation {
public:
    Simulation(Scenario scenario, SimOptions options = {});

    /// Advances one tick. Returns false once the run has finished.
    bool step();
    /// Steps until finished.
    void run();
    bool finished() const { return finished_; }
    Tick now() const { return now_; }
    const std::string& finish_reason() const { return finish_reason_; }
    /// Ends the run early (gateway shutdown).
    void finish(const std::string& reason);

    /// Queues a new trip for the next tick boundary. Throws UnknownPassenger.
    std::string submit_trip(const std::string& passenger, const std::string& text);
    /// Validates synchronously and queues for the next tick boundary.
    /// Throws UnknownApproval, InvalidOverridePlan, UnknownPassenger,
    /// DuplicateDisruption, UnknownTarget, InvalidCommand.
    void submit_command(const OperatorCommand& cmd);

    const Scenario& scenario() const { return scenario_; }
    const World& world() const { return world_; }
    const Holarchy& holarchy() const { return holarchy_; }
    const EventLog& log() const { return *log_; }
    EventLog& log() { return *log_; }
    const std::map<std::string, Trip>& trips() const { return trips_; }
    std::vector<ApprovalRequest> pending_approvals() const;
    const std::map<std::string, ApprovalRequest>& approvals() const { return approvals_; }
    const CoordinationMetrics& coordination() const { return federation_.metrics(); }
    const Federation& federation() const { return federation_; }
    RunMetrics metrics() const;
    nlohmann::json state() const;
    /// Runtime invariant violations observed so far.
    const std::vector<std::string>& violations() const { return violations_; }

    ReasonerContext context() const;

private:
    struct Input {
        enum class Kind { trip, command } kind = Kind::trip;
        std::string request_id;
        std::string passenger;
        std::string text;
        OperatorCommand command;
    };
    struct Reposition {
        std::string target;
        std::string trip;
    };

    // setup
    void register_holarchy();
    HolonId fleet_for(LegMode mode) const;
    HolonId resource_holon(const std::string& id) const;

    // logging and messaging
    std::uint64_t record(const std::string& kind, nlohmann::json payload);
    std::uint64_t send(const HolonId& from, const HolonId& to, Performative kind, nlohmann::json payload,
                       Trip* trip = nullptr, std::optional<std::uint64_t> correlation = std::nullopt);
    void pump();
    void handle(const Message& m);

    // tick phases
    void apply_inputs();
    void apply_input(const Input& in);
    void apply_command(const OperatorCommand& cmd);
    void dispatch_world_event(const Event& ev);
    void advance_trips();
    void advance_trip(Trip& trip);
    void check_approval_timeouts();
    bool idle() const;
    void check_runtime_invariants();

    // supervisor
    void on_trip_request(const Message& m);
    void on_passenger_update(const Message& m);
    void on_proposal(const Message& m);
    void on_planner_refusal(const Message& m);
    void on_approval_decision(const Message& m);
    void on_status(const Message& m);
    void run_gate(Trip& trip, Plan plan);
    void resolve_approval(ApprovalRequest& a, DecisionKind kind, const std::optional<Plan>& override_plan,
                          const std::string& by);
    void activate(Trip& trip, Plan plan, GateOutcome outcome);
    void request_revision(Trip& trip, const RevisionTrigger& trigger);
    void abort_trip(Trip& trip, const std::string& reason);
    void complete_trip(Trip& trip);
    void apply_adjustment(Trip& trip, const ScheduleAdjustment& adj);

    // planner
    void on_plan_request(const Message& m);
    void on_revise_request(const Message& m);
    bool assign_resources(Trip& trip, Plan& plan);
    std::optional<std::string> discover(Trip& trip, const Plan& plan, const Leg& leg, ResourceKind kind);
    void propose(Trip& trip, Plan plan);

    // fleet + task
    void on_dispatch(const Message& m);
    void emit_status(Trip& trip, const Leg& leg, StatusKind kind, nlohmann::json detail = nlohmann::json::object());
    bool start_reposition(const std::string& resource, const std::string& target, const std::string& trip);
    void continue_reposition(const std::string& resource);
    void release_resource(const std::string& id);
    void release_plan_resources(const Plan& plan, const std::set<std::string>& keep);
    void detach_task(Trip& trip, const std::string& leg_id);

    Trip* find_trip(const std::string& request_id);
    Trip* active_trip_of(const std::string& passenger);
    TripProgress progress_of(const Trip& trip) const;

    Scenario scenario_;
    SimOptions options_;
    World world_;
    Holarchy holarchy_;
    Federation federation_;
    ReasoningEngine engine_;
    std::unique_ptr<EventLog> log_;
    RuleSet rules_;
    Tick approval_timeout_;

    HolonId sos_, planner_, cs1_, cs2_, operator_;
    std::map<std::string, HolonId> passengers_;
    std::map<std::string, std::string> passenger_locations_;

    Tick now_ = 0;
    bool finished_ = false;
    std::string finish_reason_;
    std::multimap<Tick, Input> inputs_;
    std::deque<Input> immediate_;
    std::size_t next_request_ = 1;
    std::size_t next_approval_ = 1;
    std::size_t next_command_ = 1;
    std::map<std::string, Trip> trips_;
    std::vector<std::string> trip_order_;
    std::map<std::string, ApprovalRequest> approvals_;
    std::map<std::string, std::uint64_t> approval_messages_;
    std::map<std::string, Reposition> repositioning_;
    std::map<std::string, std::string> carrying_;  // resource -> trip
    std::set<std::string> release_on_arrival_;
    std::set<std::string> pending_disruption_ids_;
    std::vector<std::string> violations_;
    std::size_t reasoner_fallbacks_ = 0;
};

/// Runs the scenario once per strategy with identical inputs.
struct ComparisonRow {
    StrategyKind strategy = StrategyKind::holonic;
    CoordinationMetrics metrics;
    RunMetrics run;
};

std::vector<ComparisonRow> run_comparison(const Scenario& scenario, const std::vector<StrategyKind>& strategies,
                                          const SimOptions& base = {},
                                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);
nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows);

}  // namespace holonsim
