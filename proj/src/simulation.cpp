#include "holonsim/simulation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "holonsim/error.hpp"
#include "holonsim/routing.hpp"

namespace holonsim {

using json = nlohmann::json;

namespace {

std::string task_name(const Plan& plan, const std::string& leg_id) {
    return "task-" + plan.plan_id + "-" + leg_id + "-" + std::to_string(plan.revision);
}

std::string task_ref(const Plan& plan, const Leg& leg) { return plan.plan_id + "/" + leg.leg_id; }

json plan_brief(const Plan& p) {
    json legs = json::array();
    for (const auto& l : p.legs)
        legs.push_back({{"leg_id", l.leg_id},
                        {"mode", l.mode},
                        {"origin", l.origin},
                        {"destination", l.destination},
                        {"resource", l.assigned_resource ? json(*l.assigned_resource) : json(nullptr)},
                        {"planned_start", l.planned_start},
                        {"planned_end", l.planned_end},
                        {"state", l.state}});
    return {{"plan_id", p.plan_id}, {"revision", p.revision}, {"fallback", p.fallback}, {"legs", legs}};
}

bool finished_phase(TripPhase p) { return p == TripPhase::completed || p == TripPhase::aborted; }

}  // namespace

json trip_json(const Trip& t) {
    json j{{"request_id", t.request_id},
           {"passenger", t.passenger},
           {"text", t.text},
           {"phase", t.phase},
           {"location", t.location},
           {"current_leg", t.current_leg},
           {"urgent", t.urgent},
           {"revisions", t.revisions},
           {"approval_id", t.approval_id ? json(*t.approval_id) : json(nullptr)},
           {"first_activation", t.first_activation ? json(*t.first_activation) : json(nullptr)},
           {"finished_at", t.finished_at ? json(*t.finished_at) : json(nullptr)},
           {"plan", t.plan ? plan_brief(*t.plan) : json(nullptr)},
           {"proposal", t.proposal ? plan_brief(*t.proposal) : json(nullptr)}};
    return j;
}

json RunMetrics::to_json() const {
    return {{"ticks", ticks},
            {"trips_requested", trips_requested},
            {"trips_completed", trips_completed},
            {"trips_aborted", trips_aborted},
            {"clarifications", clarifications},
            {"revisions", revisions},
            {"approvals_requested", approvals_requested},
            {"approvals_approved", approvals_approved},
            {"approvals_overridden", approvals_overridden},
            {"approvals_rejected", approvals_rejected},
            {"fallbacks_activated", fallbacks_activated},
            {"reasoner_fallbacks", reasoner_fallbacks},
            {"messages", messages},
            {"door_to_door", door_to_door},
            {"mean_door_to_door", mean_door_to_door},
            {"coordination", coordination.to_json()},
            {"log_hash", log_hash}};
}

// ---------------------------------------------------------------- setup

Simulation::Simulation(Scenario scenario, SimOptions options)
    : scenario_(std::move(scenario)),
      options_(std::move(options)),
      world_(scenario_.graph, options_.seed.value_or(scenario_.seed)),
      federation_(holarchy_, options_.strategy),
      engine_(options_.backend),
      log_(options_.log_file ? std::make_unique<EventLog>(*options_.log_file) : std::make_unique<EventLog>()),
      rules_(scenario_.rules),
      approval_timeout_(options_.approval_timeout.value_or(scenario_.approval_timeout)) {
    holarchy_.set_send_hook([this](const Message& m) { return log_->append(now_, "message", message_json(m)); });
    engine_.on_fallback([this](const FallbackNotice& n) {
        ++reasoner_fallbacks_;
        record("reasoner_fallback", {{"task", n.task}, {"backend", n.backend}, {"error", n.error}});
    });
    if (options_.kill_middle_after_hop) federation_.kill_middle_after_hop(*options_.kill_middle_after_hop);

    for (const auto& r : scenario_.resources) world_.add_resource(r);

    record("run_started", {{"scenario", scenario_.name},
                           {"seed", world_.rng_seed()},
                           {"strategy", options_.strategy},
                           {"reasoner", engine_.backend_id()},
                           {"approval_timeout", approval_timeout_},
                           {"max_ticks", scenario_.max_ticks},
                           {"rules", rules_.digest()}});
    register_holarchy();

    for (const auto& d : scenario_.scripted_disruptions) {
        const auto acc = world_.inject_disruption(d);
        record("disruption_scheduled", {{"disruption", d}, {"activation", acc.activation}});
    }

    struct Pending {
        Tick at;
        std::size_t order;
        Input in;
    };
    std::vector<Pending> reqs;
    std::size_t order = 0;
    for (const auto& p : scenario_.passengers)
        for (const auto& r : p.requests) {
            Input in;
            in.kind = Input::Kind::trip;
            in.passenger = p.id;
            in.text = r.text;
            reqs.push_back({r.at_tick, order++, in});
        }
    std::stable_sort(reqs.begin(), reqs.end(), [](const Pending& a, const Pending& b) { return a.at < b.at; });
    for (auto& r : reqs) {
        r.in.request_id = "R" + std::to_string(next_request_++);
        inputs_.emplace(r.at, r.in);
    }
    for (const auto& a : options_.script) {
        Input in;
        in.kind = Input::Kind::command;
        in.command = a.command;
        inputs_.emplace(a.at_tick, in);
    }
}

void Simulation::register_holarchy() {
    auto reg = [&](const HolonId& id, Role role, std::vector<std::string> caps,
                   const std::optional<HolonId>& parent) {
        Holon h;
        h.id = id;
        h.role = role;
        for (auto& c : caps) h.capabilities.push_back({std::move(c), json::object(), json::object(), 1.0});
        h.reasoner_binding = role == Role::supervisor || role == Role::planner ? engine_.backend_id() : "none";
        try {
            holarchy_.register_holon(std::move(h), parent);
        } catch (const Error& e) {
            throw Error(ErrorCode::SchemaError, "$: holon " + id.str() + ": " + e.what());
        }
        record("holon_registered", {{"id", id}, {"role", role}, {"parent", parent ? json(*parent) : json(nullptr)}});
    };
    sos_ = HolonId::parse("S-SoS");
    planner_ = sos_.child("Planner");
    cs1_ = sos_.child("S-CS1");
    cs2_ = sos_.child("S-CS2");
    operator_ = sos_.child("operator");
    reg(sos_, Role::supervisor, {"supervise.trips", "coordinate.gate"}, std::nullopt);
    reg(planner_, Role::planner, {"plan.trip", "plan.revise"}, sos_);
    reg(cs1_, Role::supervisor, {"supervise.ground_fleet"}, sos_);
    reg(cs2_, Role::supervisor, {"supervise.air_fleet"}, sos_);
    reg(operator_, Role::resource_human, {"interact.operator"}, sos_);
    for (const auto& p : scenario_.passengers) {
        const HolonId id = sos_.child(p.id);
        reg(id, Role::resource_human, {"interact.passenger"}, sos_);
        passengers_[p.id] = id;
        passenger_locations_[p.id] = p.location;
    }
    for (const auto& [id, r] : world_.resources())
        reg(resource_holon(id), Role::resource_machine, {capability_for(r.kind)},
            r.kind == ResourceKind::air_taxi ? cs2_ : cs1_);
    for (const auto& v : scenario_.graph->vertiports()) {
        std::vector<std::string> caps{"vertiport.slot"};
        if (scenario_.graph->node(v).charging) caps.push_back("charge.station");
        reg(cs2_.child(v), Role::resource_machine, caps, cs2_);
    }
    federation_.install();
    if (options_.strategy != StrategyKind::holonic)
        record("holon_registered",
               {{"id", federation_.middle_agents().front()}, {"role", Role::supervisor}, {"parent", sos_}});
}

HolonId Simulation::fleet_for(LegMode mode) const { return mode == LegMode::air_taxi ? cs2_ : cs1_; }

HolonId Simulation::resource_holon(const std::string& id) const {
    const auto& r = world_.resource(id);
    return (r.kind == ResourceKind::air_taxi ? cs2_ : cs1_).child(id);
}

// ---------------------------------------------------------------- logging

std::uint64_t Simulation::record(const std::string& kind, json payload) {
    return log_->append(now_, kind, std::move(payload));
}

std::uint64_t Simulation::send(const HolonId& from, const HolonId& to, Performative kind, json payload,
                               Trip* trip, std::optional<std::uint64_t> correlation) {
    Message m;
    m.sender = from;
    m.recipient = to;
    m.kind = kind;
    m.correlation = correlation ? correlation : (trip ? trip->last_message : std::nullopt);
    m.payload = std::move(payload);
    m.sent_at = now_;
    const auto receipt = holarchy_.send(std::move(m));
    if (trip) trip->last_message = receipt.message_id;
    return receipt.message_id;
}

void Simulation::pump() {
    while (auto m = holarchy_.next_delivery()) handle(*m);
}

void Simulation::handle(const Message& m) {
    const auto topic = m.payload.value("topic", "");
    if (m.recipient == sos_) {
        if (topic == "trip_request") on_trip_request(m);
        else if (topic == "passenger_update") on_passenger_update(m);
        else if (topic == "plan_proposal") on_proposal(m);
        else if (topic == "no_feasible_plan" || topic == "no_feasible_revision") on_planner_refusal(m);
        else if (topic == "approval_decision") on_approval_decision(m);
        else if (topic == "status") on_status(m);
    } else if (m.recipient == planner_) {
        if (topic == "plan_request") on_plan_request(m);
        else if (topic == "revise_request") on_revise_request(m);
    } else if (m.recipient == cs1_ || m.recipient == cs2_) {
        if (topic == "dispatch") on_dispatch(m);
        else if (topic == "status") send(m.recipient, sos_, Performative::status, m.payload, nullptr, m.id);
    }
    // Passengers, the operator, tasks and machines only consume.
}

// ---------------------------------------------------------------- inputs

std::string Simulation::submit_trip(const std::string& passenger, const std::string& text) {
    if (!passengers_.count(passenger)) throw Error(ErrorCode::UnknownPassenger, passenger);
    if (text.empty()) throw Error(ErrorCode::InvalidCommand, "empty utterance");
    if (finished_) throw Error(ErrorCode::InvalidCommand, "run finished");
    Input in;
    in.kind = Input::Kind::trip;
    in.request_id = "R" + std::to_string(next_request_++);
    in.passenger = passenger;
    in.text = text;
    inputs_.emplace(now_, in);
    return in.request_id;
}

namespace {

Plan override_plan_of(const OperatorCommand& c, const ApprovalRequest& a) {
    Plan plan;
    try {
        plan = c.payload.at("plan").get<Plan>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidOverridePlan, e.what());
    }
    plan.plan_id = a.plan_id;
    plan.request_id = a.request_id;
    plan.revision = a.revision;
    plan.fallback = false;
    plan.status = PlanStatus::draft;
    return plan;
}

}  // namespace

void Simulation::submit_command(const OperatorCommand& in) {
    if (finished_) throw Error(ErrorCode::InvalidCommand, "run finished");
    OperatorCommand cmd = in;
    if (cmd.id.empty()) cmd.id = "cmd-" + std::to_string(next_command_++);
    const auto& p = cmd.payload;
    switch (cmd.kind) {
        case CommandKind::approve:
        case CommandKind::reject:
        case CommandKind::override_plan: {
            const auto aid = p.value("approval_id", "");
            auto it = approvals_.find(aid);
            if (it == approvals_.end() || !it->second.pending()) throw Error(ErrorCode::UnknownApproval, aid);
            if (cmd.kind == CommandKind::override_plan) {
                const Plan plan = override_plan_of(cmd, it->second);
                const Trip& trip = trips_.at(it->second.request_id);
                auto problems = plan_structure_problems(plan, trip.spec, *scenario_.graph);
                const auto verdict = validate_plan(plan, rules_, context());
                for (const auto& v : verdict.violations) problems.push_back(v.rule + " " + v.leg_id + " " + v.detail);
                if (!problems.empty()) throw Error(ErrorCode::InvalidOverridePlan, problems.front());
            }
            break;
        }
        case CommandKind::inject_disruption: {
            Disruption d;
            try {
                d = p.at("disruption").get<Disruption>();
            } catch (const json::exception& e) {
                throw Error(ErrorCode::InvalidCommand, std::string("disruption: ") + e.what());
            }
            world_.check_disruption(d);
            if (pending_disruption_ids_.count(d.id)) throw Error(ErrorCode::DuplicateDisruption, d.id);
            pending_disruption_ids_.insert(d.id);
            break;
        }
        case CommandKind::passenger_message: {
            const auto who = p.value("passenger", "");
            if (!passengers_.count(who)) throw Error(ErrorCode::UnknownPassenger, who);
            if (!p.at("text").is_string() || p.at("text").get<std::string>().empty())
                throw Error(ErrorCode::InvalidCommand, "text must be a non-empty string");
            break;
        }
        default: break;
    }
    Input i;
    i.kind = Input::Kind::command;
    i.command = cmd;
    inputs_.emplace(now_, i);
}

void Simulation::apply_inputs() {
    while (!inputs_.empty() && inputs_.begin()->first <= now_) {
        Input in = inputs_.begin()->second;
        inputs_.erase(inputs_.begin());
        apply_input(in);
    }
}

void Simulation::apply_input(const Input& in) {
    if (in.kind == Input::Kind::command) {
        apply_command(in.command);
        return;
    }
    if (!passengers_.count(in.passenger)) {
        record("input_rejected", {{"request_id", in.request_id}, {"error", "UnknownPassenger"}});
        return;
    }
    Trip t;
    t.request_id = in.request_id;
    t.passenger = in.passenger;
    t.passenger_id = passengers_.at(in.passenger);
    t.text = in.text;
    t.location = passenger_locations_.at(in.passenger);
    auto [it, _] = trips_.emplace(t.request_id, std::move(t));
    trip_order_.push_back(it->first);
    Trip& trip = it->second;
    record("trip_requested", {{"request_id", trip.request_id}, {"passenger", trip.passenger}, {"text", trip.text}});
    send(trip.passenger_id, sos_, Performative::request,
         {{"topic", "trip_request"}, {"request_id", trip.request_id}, {"text", trip.text}}, &trip);
}

void Simulation::apply_command(const OperatorCommand& cmd) {
    record("operator_command", command_json(cmd));
    const auto& p = cmd.payload;
    try {
        switch (cmd.kind) {
            case CommandKind::approve:
            case CommandKind::reject:
            case CommandKind::override_plan: {
                const auto aid = p.value("approval_id", "");
                auto it = approvals_.find(aid);
                if (it == approvals_.end() || !it->second.pending()) throw Error(ErrorCode::UnknownApproval, aid);
                json payload{{"topic", "approval_decision"}, {"approval_id", aid}, {"command", cmd.id}};
                Performative kind = Performative::accept;
                if (cmd.kind == CommandKind::approve) {
                    payload["decision"] = "approved";
                } else if (cmd.kind == CommandKind::reject) {
                    payload["decision"] = "rejected";
                    kind = Performative::reject;
                } else {
                    const Plan plan = override_plan_of(cmd, it->second);
                    auto problems = plan_structure_problems(plan, trips_.at(it->second.request_id).spec,
                                                            *scenario_.graph);
                    if (!problems.empty() || !validate_plan(plan, rules_, context()).ok())
                        throw Error(ErrorCode::InvalidOverridePlan, aid);
                    payload["decision"] = "overridden";
                    payload["plan"] = plan;
                    kind = Performative::propose;
                }
                payload["decided_by"] = p.value("operator", operator_.leaf());
                send(operator_, sos_, kind, payload, nullptr, approval_messages_.at(aid));
                break;
            }
            case CommandKind::inject_disruption: {
                auto d = p.at("disruption").get<Disruption>();
                pending_disruption_ids_.erase(d.id);
                d.activation = std::max(d.activation, now_);
                const auto acc = world_.inject_disruption(d);
                record("disruption_injected", {{"disruption", d}, {"activation", acc.activation}, {"command", cmd.id}});
                break;
            }
            case CommandKind::passenger_message: {
                const auto who = p.value("passenger", "");
                if (!passengers_.count(who)) throw Error(ErrorCode::UnknownPassenger, who);
                const auto text = p.at("text").get<std::string>();
                if (Trip* trip = active_trip_of(who)) {
                    send(trip->passenger_id, sos_, Performative::inform,
                         {{"topic", "passenger_update"}, {"request_id", trip->request_id}, {"text", text}}, trip);
                } else {
                    Input in;
                    in.kind = Input::Kind::trip;
                    in.request_id = "R" + std::to_string(next_request_++);
                    in.passenger = who;
                    in.text = text;
                    apply_input(in);
                }
                break;
            }
            default: break;  // clock control is the run manager's business
        }
    } catch (const Error& e) {
        record("command_rejected", {{"id", cmd.id}, {"error", std::string(to_string(e.code()))}, {"detail", e.detail()}});
    } catch (const json::exception& e) {
        record("command_rejected", {{"id", cmd.id}, {"error", "InvalidCommand"}, {"detail", e.what()}});
    }
}

// ---------------------------------------------------------------- tick loop

bool Simulation::step() {
    if (finished_) return false;
    apply_inputs();
    for (const auto& ev : world_.advance(now_)) dispatch_world_event(ev);
    pump();
    advance_trips();
    pump();
    check_approval_timeouts();
    pump();
    check_runtime_invariants();
    if (options_.stop_when_idle && idle()) {
        finish("idle");
    } else if (now_ >= scenario_.max_ticks) {
        finish("max_ticks");
    } else {
        ++now_;
    }
    return !finished_;
}

void Simulation::run() {
    while (step()) {
    }
}

void Simulation::finish(const std::string& reason) {
    if (finished_) return;
    finished_ = true;
    finish_reason_ = reason;
    const auto m = metrics();
    record("run_finished", {{"reason", reason},
                            {"trips_completed", m.trips_completed},
                            {"trips_aborted", m.trips_aborted},
                            {"violations", violations_.size()}});
    log_->close();
}

bool Simulation::idle() const {
    if (!inputs_.empty() || holarchy_.pending() > 0 || world_.has_pending_movement() || !repositioning_.empty())
        return false;
    for (const auto& [id, t] : trips_)
        if (!finished_phase(t.phase)) return false;
    for (const auto& [id, a] : approvals_)
        if (a.pending()) return false;
    return true;
}

void Simulation::dispatch_world_event(const Event& ev) {
    record(ev.kind, ev.payload);
    if (ev.kind != "move_completed") return;
    const auto rid = ev.payload.at("resource").get<std::string>();
    if (auto it = carrying_.find(rid); it != carrying_.end()) {
        Trip& trip = trips_.at(it->second);
        if (trip.moving) trip.moving->done = true;
    } else if (repositioning_.count(rid)) {
        continue_reposition(rid);
    } else if (release_on_arrival_.count(rid)) {
        release_on_arrival_.erase(rid);
        release_resource(rid);
    }
}

void Simulation::check_runtime_invariants() {
    auto add = [&](const std::string& what) {
        if (violations_.size() < 100) violations_.push_back("tick " + std::to_string(now_) + ": " + what);
    };
    for (auto& p : world_.check_invariants()) add(p);
    if (holarchy_.link_count() + 1 != holarchy_.size()) add("holarchy is not a tree");
    std::map<std::string, std::string> owner;
    for (const auto& [id, t] : trips_) {
        if (finished_phase(t.phase) || !t.plan) continue;
        for (const auto& leg : t.plan->legs) {
            if (leg.state == LegState::completed || !leg.assigned_resource) continue;
            auto [it, fresh] = owner.emplace(*leg.assigned_resource, id);
            if (!fresh && it->second != id) add("resource " + *leg.assigned_resource + " allocated twice");
        }
    }
}

// ---------------------------------------------------------------- context

ReasonerContext Simulation::context() const {
    ReasonerContext ctx = ReasonerContext::from_world(world_);
    ctx.tick = now_;
    ctx.passenger_locations = passenger_locations_;
    ctx.rules_digest = rules_.digest();
    for (const auto& id : trip_order_) {
        const Trip& t = trips_.at(id);
        if (finished_phase(t.phase)) continue;
        for (const Plan* p : {t.plan ? &*t.plan : nullptr, t.proposal ? &*t.proposal : nullptr}) {
            if (!p) continue;
            for (const auto& l : p->legs) {
                if (l.mode != LegMode::air_taxi || l.state == LegState::completed) continue;
                ctx.reservations.push_back({l.origin, p->plan_id, l.leg_id, l.planned_start, l.planned_end});
                ctx.reservations.push_back({l.destination, p->plan_id, l.leg_id, l.planned_start, l.planned_end});
            }
        }
    }
    return ctx;
}

Trip* Simulation::find_trip(const std::string& request_id) {
    auto it = trips_.find(request_id);
    return it == trips_.end() ? nullptr : &it->second;
}

Trip* Simulation::active_trip_of(const std::string& passenger) {
    for (auto it = trip_order_.rbegin(); it != trip_order_.rend(); ++it) {
        Trip& t = trips_.at(*it);
        if (t.passenger == passenger && !finished_phase(t.phase)) return &t;
    }
    return nullptr;
}

TripProgress Simulation::progress_of(const Trip& trip) const {
    return {trip.location, trip.plan ? trip.current_leg : 0, trip.plan ? trip.traversed_edges : 0};
}

// ---------------------------------------------------------------- supervisor

void Simulation::on_trip_request(const Message& m) {
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip) return;
    const auto ctx = context();
    try {
        trip->spec = engine_.parse_request(trip->text, ctx, trip->request_id, trip->passenger_id);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NeedsClarification) throw;
        trip->phase = TripPhase::aborted;
        trip->finished_at = now_;
        record("clarification_needed", {{"request_id", trip->request_id}, {"reason", e.detail()}});
        send(sos_, trip->passenger_id, Performative::inform,
             {{"topic", "clarification_needed"}, {"request_id", trip->request_id}, {"reason", e.detail()}}, trip);
        return;
    }
    record("task_spec", {{"request_id", trip->request_id}, {"spec", trip->spec}});
    send(sos_, planner_, Performative::request,
         {{"topic", "plan_request"}, {"request_id", trip->request_id}, {"spec", trip->spec}}, trip);
}

void Simulation::on_passenger_update(const Message& m) {
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip || finished_phase(trip->phase)) return;
    const auto text = m.payload.at("text").get<std::string>();
    try {
        const auto adj = engine_.interpret_update(text, context(), trip->request_id);
        apply_adjustment(*trip, adj);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NeedsClarification) throw;
        record("clarification_needed", {{"request_id", trip->request_id}, {"reason", e.detail()}, {"text", text}});
        send(sos_, trip->passenger_id, Performative::inform,
             {{"topic", "clarification_needed"}, {"request_id", trip->request_id}, {"reason", e.detail()}}, trip);
    }
}

void Simulation::apply_adjustment(Trip& trip, const ScheduleAdjustment& adj) {
    record("schedule_adjusted", {{"request_id", trip.request_id}, {"adjustment", adj}});
    switch (adj.kind) {
        case AdjustmentKind::cancel:
            abort_trip(trip, "cancelled");
            return;
        case AdjustmentKind::reprioritize:
            trip.urgent = true;
            break;
        case AdjustmentKind::delay_departure:
        case AdjustmentKind::advance_departure: {
            Plan* plan = trip.plan ? &*trip.plan : (trip.proposal ? &*trip.proposal : nullptr);
            const Tick delta = adj.kind == AdjustmentKind::delay_departure ? adj.magnitude : -adj.magnitude;
            if (!plan) {
                trip.spec.earliest_departure = std::max(now_, trip.spec.earliest_departure + delta);
                break;
            }
            auto it = std::find_if(plan->legs.begin(), plan->legs.end(),
                                   [](const Leg& l) { return l.state == LegState::pending; });
            if (it == plan->legs.end()) break;
            const Tick dur = it->planned_end - it->planned_start;
            it->planned_start = std::max(now_, it->planned_start + delta);
            it->planned_end = it->planned_start + dur;
            const auto idx = static_cast<std::size_t>(it - plan->legs.begin());
            if (delta > 0) {
                // Later legs keep their gaps.
                for (std::size_t i = idx + 1; i < plan->legs.size(); ++i) {
                    plan->legs[i].planned_start += delta;
                    plan->legs[i].planned_end += delta;
                }
            }
            retime_legs(plan->legs, idx + 1, now_);
            break;
        }
    }
    send(sos_, trip.passenger_id, Performative::inform,
         {{"topic", "schedule_adjusted"}, {"request_id", trip.request_id}, {"adjustment", adj}}, &trip);
}

void Simulation::on_proposal(const Message& m) {
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip || finished_phase(trip->phase)) return;
    run_gate(*trip, m.payload.at("plan").get<Plan>());
}

void Simulation::on_planner_refusal(const Message& m) {
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip || finished_phase(trip->phase)) return;
    const auto topic = m.payload.at("topic").get<std::string>();
    send(sos_, trip->passenger_id, Performative::inform,
         {{"topic", topic}, {"request_id", trip->request_id}, {"reason", m.payload.value("reason", "")}}, trip);
    abort_trip(*trip, topic);
}

void Simulation::run_gate(Trip& trip, Plan plan) {
    plan.status = PlanStatus::draft;
    trip.proposal = plan;
    const auto ctx = context();
    const json base{{"request_id", trip.request_id}, {"plan_id", plan.plan_id}, {"revision", plan.revision}};
    auto step_record = [&](int step, const char* name, bool passed, json extra) {
        json p = base;
        p["step"] = step;
        p["name"] = name;
        p["passed"] = passed;
        p.update(extra);
        record("gate_step", p);
    };
    auto reject = [&](const std::string& why) {
        json p = base;
        p["outcome"] = GateOutcome::rejected;
        p["reason"] = why;
        record("gate_outcome", p);
        std::set<std::string> keep;
        if (trip.plan)
            for (const auto& l : trip.plan->legs)
                if (l.assigned_resource && l.state != LegState::completed) keep.insert(*l.assigned_resource);
        release_plan_resources(plan, keep);
        trip.proposal.reset();
        send(sos_, trip.passenger_id, Performative::inform,
             {{"topic", "plan_rejected"}, {"request_id", trip.request_id}, {"reason", why}}, &trip);
        abort_trip(trip, "gate_rejected");
    };

    const auto verdict = validate_plan(plan, rules_, ctx);
    step_record(1, "regulation", verdict.ok(), {{"violations", verdict_json(verdict)}});
    if (!verdict.ok()) return reject("regulation");
    plan.status = PlanStatus::validated;

    const auto problems = feasibility_problems(plan, ctx);
    step_record(2, "feasibility", problems.empty(), {{"problems", problems}});
    if (!problems.empty()) return reject("feasibility");

    const bool under = plan.revision > 0 && disruption_on_route(plan, ctx.disruptions, *ctx.graph);
    const RiskClass risk = classify_risk(plan, under);
    if (risk == RiskClass::low) {
        step_record(3, "human_approval", true, {{"risk_class", risk}, {"skipped", true}});
        json p = base;
        p["outcome"] = GateOutcome::cleared;
        record("gate_outcome", p);
        plan.status = PlanStatus::approved;
        activate(trip, std::move(plan), GateOutcome::cleared);
        return;
    }

    ApprovalRequest a;
    a.approval_id = "A" + std::to_string(next_approval_++);
    a.plan_id = plan.plan_id;
    a.request_id = trip.request_id;
    a.revision = plan.revision;
    a.risk_class = risk;
    a.submitted_at = now_;
    a.timeout_at = now_ + approval_timeout_;
    a.fallback_plan = ground_only_plan(plan, trip.spec, progress_of(trip), ctx);
    a.plan = plan;
    trip.proposal = plan;
    trip.approval_id = a.approval_id;
    trip.phase = TripPhase::awaiting_approval;
    step_record(3, "human_approval", true,
                {{"risk_class", risk}, {"skipped", false}, {"approval_id", a.approval_id},
                 {"under_disruption", under}});
    record("approval_requested", approval_json(a));
    const auto msg = send(sos_, operator_, Performative::request,
                          {{"topic", "approval_request"},
                           {"approval_id", a.approval_id},
                           {"request_id", trip.request_id},
                           {"plan_id", plan.plan_id},
                           {"revision", plan.revision},
                           {"timeout_at", a.timeout_at}},
                          &trip);
    approval_messages_[a.approval_id] = msg;
    approvals_.emplace(a.approval_id, std::move(a));
}

void Simulation::on_approval_decision(const Message& m) {
    const auto aid = m.payload.at("approval_id").get<std::string>();
    auto it = approvals_.find(aid);
    if (it == approvals_.end() || !it->second.pending()) return;
    const auto decision = m.payload.at("decision").get<DecisionKind>();
    std::optional<Plan> plan;
    if (decision == DecisionKind::overridden) plan = m.payload.at("plan").get<Plan>();
    resolve_approval(it->second, decision, plan, m.payload.value("decided_by", operator_.leaf()));
}

void Simulation::resolve_approval(ApprovalRequest& a, DecisionKind kind, const std::optional<Plan>& override_plan,
                                  const std::string& by) {
    Trip& trip = trips_.at(a.request_id);
    a.decision = ApprovalDecision{kind, override_plan ? std::optional(override_plan->plan_id) : std::nullopt, by, now_};
    record("approval_decided", {{"approval_id", a.approval_id},
                                {"request_id", a.request_id},
                                {"plan_id", a.plan_id},
                                {"revision", a.revision},
                                {"decision", kind},
                                {"decided_by", by}});
    json outcome{{"request_id", a.request_id}, {"plan_id", a.plan_id}, {"revision", a.revision},
                 {"approval_id", a.approval_id}};
    std::set<std::string> keep;
    if (trip.plan)
        for (const auto& l : trip.plan->legs)
            if (l.assigned_resource && l.state != LegState::completed) keep.insert(*l.assigned_resource);

    if (kind == DecisionKind::rejected) {
        outcome["outcome"] = GateOutcome::rejected;
        outcome["reason"] = "operator";
        record("gate_outcome", outcome);
        release_plan_resources(a.plan, keep);
        trip.proposal.reset();
        abort_trip(trip, "operator_rejected");
        return;
    }
    Plan plan = kind == DecisionKind::overridden ? *override_plan : a.plan;
    if (kind == DecisionKind::overridden) {
        std::set<std::string> keep_override = keep;
        for (const auto& l : plan.legs)
            if (l.assigned_resource) keep_override.insert(*l.assigned_resource);
        release_plan_resources(a.plan, keep_override);
        if (!assign_resources(trip, plan)) {
            outcome["outcome"] = GateOutcome::rejected;
            outcome["reason"] = "override_unresourced";
            record("gate_outcome", outcome);
            trip.proposal.reset();
            abort_trip(trip, "gate_rejected");
            return;
        }
        outcome["override"] = true;
    }
    outcome["outcome"] = GateOutcome::cleared;
    record("gate_outcome", outcome);
    plan.status = PlanStatus::approved;
    activate(trip, std::move(plan), GateOutcome::cleared);
}

void Simulation::check_approval_timeouts() {
    for (auto& [aid, a] : approvals_) {
        if (!a.pending() || now_ < a.timeout_at) continue;
        Trip& trip = trips_.at(a.request_id);
        a.fallback_activated = true;
        std::set<std::string> keep;
        if (trip.plan)
            for (const auto& l : trip.plan->legs)
                if (l.assigned_resource && l.state != LegState::completed) keep.insert(*l.assigned_resource);
        release_plan_resources(a.plan, keep);
        trip.proposal.reset();
        json outcome{{"request_id", a.request_id}, {"plan_id", a.plan_id}, {"revision", a.revision},
                     {"approval_id", aid}, {"timeout_at", a.timeout_at}};
        std::optional<Plan> fb = a.fallback_plan;
        if (fb && assign_resources(trip, *fb)) {
            outcome["outcome"] = GateOutcome::fallback_activated;
            outcome["fallback"] = plan_brief(*fb);
            record("gate_outcome", outcome);
            fb->status = PlanStatus::approved;
            activate(trip, std::move(*fb), GateOutcome::fallback_activated);
        } else {
            outcome["outcome"] = GateOutcome::rejected;
            outcome["reason"] = "no_fallback";
            record("gate_outcome", outcome);
            abort_trip(trip, "no_fallback");
        }
    }
}

void Simulation::activate(Trip& trip, Plan plan, GateOutcome outcome) {
    std::set<std::string> keep;
    for (const auto& l : plan.legs)
        if (l.assigned_resource && l.state != LegState::completed) keep.insert(*l.assigned_resource);
    if (trip.plan) release_plan_resources(*trip.plan, keep);
    if (trip.proposal) release_plan_resources(*trip.proposal, keep);
    for (auto it = trip.tasks.begin(); it != trip.tasks.end();) {
        const std::string leg = it->first;
        ++it;
        detach_task(trip, leg);
    }

    plan.status = PlanStatus::active;
    const std::size_t first = plan.first_open_leg();
    retime_legs(plan.legs, first, now_);
    for (const auto& l : plan.legs) {
        if (l.state == LegState::completed || !l.assigned_resource) continue;
        ResourceState& r = world_.resource(*l.assigned_resource);
        r.assigned_task = task_ref(plan, l);
        r.status = ResourceStatus::reserved;
    }
    trip.plan = plan;
    trip.proposal.reset();
    trip.approval_id.reset();
    trip.phase = TripPhase::active;
    trip.current_leg = first;
    trip.traversed_edges = 0;
    trip.revisions = plan.revision;
    if (!trip.first_activation) trip.first_activation = now_;
    record("plan_activated", {{"request_id", trip.request_id},
                              {"plan_id", plan.plan_id},
                              {"revision", plan.revision},
                              {"fallback", plan.fallback},
                              {"outcome", outcome},
                              {"plan", plan}});

    for (const auto& l : plan.legs) {
        if (l.state == LegState::completed || !l.assigned_resource) continue;
        const ResourceState& r = world_.resource(*l.assigned_resource);
        if (r.at_node() && r.node() != l.origin) start_reposition(r.id, l.origin, trip.request_id);
    }

    json ground = json::array();
    json air = json::array();
    for (const auto& l : plan.legs)
        if (l.state != LegState::completed) (l.mode == LegMode::air_taxi ? air : ground).push_back(l.leg_id);
    for (const auto& [fleet, legs] : {std::pair{cs1_, ground}, std::pair{cs2_, air}}) {
        if (legs.empty()) continue;
        send(sos_, fleet, Performative::command,
             {{"topic", "dispatch"},
              {"request_id", trip.request_id},
              {"plan_id", plan.plan_id},
              {"revision", plan.revision},
              {"legs", legs}},
             &trip);
    }
    send(sos_, trip.passenger_id, Performative::inform,
         {{"topic", "plan_active"},
          {"request_id", trip.request_id},
          {"plan_id", plan.plan_id},
          {"revision", plan.revision},
          {"fallback", plan.fallback},
          {"eta", plan.legs.empty() ? now_ : plan.legs.back().planned_end}},
         &trip);
}

void Simulation::on_status(const Message& m) {
    const auto& st = m.payload.at("status");
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip || finished_phase(trip->phase)) return;
    const auto kind = st.at("kind").get<StatusKind>();
    const auto leg = st.at("leg").get<std::string>();
    if (kind == StatusKind::leg_completed) {
        detach_task(*trip, leg);
        if (trip->plan && trip->current_leg >= trip->plan->legs.size()) complete_trip(*trip);
    } else if (kind == StatusKind::leg_blocked) {
        detach_task(*trip, leg);
        request_revision(*trip, {"status", "leg_blocked"});
    } else if (kind == StatusKind::resource_fault && st.at("detail").value("before_start", false)) {
        request_revision(*trip, {"status", "resource_fault"});
    }
}

void Simulation::request_revision(Trip& trip, const RevisionTrigger& trigger) {
    trip.phase = TripPhase::replanning;
    const auto pr = progress_of(trip);
    record("revision_requested", {{"request_id", trip.request_id},
                                  {"trigger", {{"kind", trigger.kind}, {"detail", trigger.detail}}},
                                  {"location", pr.location},
                                  {"current_leg", pr.current_leg},
                                  {"traversed_edges", pr.traversed_edges}});
    send(sos_, planner_, Performative::request,
         {{"topic", "revise_request"},
          {"request_id", trip.request_id},
          {"trigger", {{"kind", trigger.kind}, {"detail", trigger.detail}}}},
         &trip);
}

void Simulation::abort_trip(Trip& trip, const std::string& reason) {
    if (finished_phase(trip.phase)) return;
    if (trip.plan && trip.current_leg < trip.plan->legs.size()) {
        Leg& leg = trip.plan->legs[trip.current_leg];
        if (leg.state == LegState::active) emit_status(trip, leg, StatusKind::leg_blocked, {{"reason", reason}});
    }
    if (trip.approval_id) {
        auto& a = approvals_.at(*trip.approval_id);
        if (a.pending()) {
            a.withdrawn = true;
            record("approval_withdrawn", {{"approval_id", a.approval_id}, {"request_id", trip.request_id}});
        }
    }
    for (const Plan* p : {trip.plan ? &*trip.plan : nullptr, trip.proposal ? &*trip.proposal : nullptr})
        if (p) release_plan_resources(*p, {});
    for (auto it = trip.tasks.begin(); it != trip.tasks.end();) {
        const std::string leg = it->first;
        ++it;
        detach_task(trip, leg);
    }
    trip.moving.reset();
    trip.phase = TripPhase::aborted;
    trip.finished_at = now_;
    if (trip.plan) trip.plan->status = PlanStatus::aborted;
    record("trip_aborted", {{"request_id", trip.request_id}, {"reason", reason}});
    send(sos_, trip.passenger_id, Performative::inform,
         {{"topic", "trip_aborted"}, {"request_id", trip.request_id}, {"reason", reason}}, &trip);
}

void Simulation::complete_trip(Trip& trip) {
    trip.phase = TripPhase::completed;
    trip.finished_at = now_;
    trip.plan->status = PlanStatus::completed;
    const Tick d2d = now_ - trip.first_activation.value_or(now_);
    record("trip_completed", {{"request_id", trip.request_id},
                              {"plan_id", trip.plan->plan_id},
                              {"revision", trip.plan->revision},
                              {"fallback", trip.plan->fallback},
                              {"door_to_door", d2d}});
    send(sos_, trip.passenger_id, Performative::inform,
         {{"topic", "trip_completed"}, {"request_id", trip.request_id}, {"door_to_door", d2d}}, &trip);
}

// ---------------------------------------------------------------- planner

void Simulation::on_plan_request(const Message& m) {
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip || finished_phase(trip->phase)) return;
    const auto ctx = context();
    auto refuse = [&](const std::string& reason) {
        send(planner_, sos_, Performative::reject,
             {{"topic", "no_feasible_plan"}, {"request_id", trip->request_id}, {"reason", reason}}, trip);
    };
    Plan plan;
    try {
        plan = engine_.generate_plan(trip->spec, ctx);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoFeasiblePlan) throw;
        return refuse(e.detail());
    }
    // The planner screens its own candidates against the rules so a full
    // vertiport sends it to the next modal combination; the gate re-checks.
    // When nothing passes, the best resourced candidate still goes to the
    // gate so the rejection and its reasons are on record.
    std::optional<Plan> unscreened;
    auto attempt = [&](Plan& p) {
        if (!assign_resources(*trip, p)) return false;
        if (validate_plan(p, rules_, context()).ok()) return true;
        release_plan_resources(p, {});
        for (auto& l : p.legs) l.assigned_resource.reset();
        if (!unscreened) unscreened = p;
        return false;
    };
    if (attempt(plan)) return propose(*trip, std::move(plan));

    // Next modal candidates in order of estimated time.
    const Tick departure = std::max(trip->spec.earliest_departure, now_);
    for (auto& c : enumerate_modal_plans(trip->spec, ctx, trip->spec.origin, departure)) {
        Plan alt;
        alt.plan_id = plan.plan_id;
        alt.request_id = plan.request_id;
        alt.legs = std::move(c.legs);
        bool same = alt.legs.size() == plan.legs.size();
        for (std::size_t i = 0; same && i < alt.legs.size(); ++i)
            same = alt.legs[i].route == plan.legs[i].route && alt.legs[i].mode == plan.legs[i].mode;
        if (same) continue;
        if (attempt(alt)) return propose(*trip, std::move(alt));
    }
    if (unscreened && assign_resources(*trip, *unscreened)) return propose(*trip, std::move(*unscreened));
    refuse("no resources for any modal combination");
}

void Simulation::on_revise_request(const Message& m) {
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip || finished_phase(trip->phase) || !trip->plan) return;
    RevisionTrigger trigger{m.payload.at("trigger").at("kind").get<std::string>(),
                            m.payload.at("trigger").at("detail").get<std::string>()};
    Plan base = *trip->plan;
    // A failed vehicle is not offered back to the planner.
    for (auto& l : base.legs) {
        if (l.state == LegState::completed || !l.assigned_resource) continue;
        if (world_.resource(*l.assigned_resource).status == ResourceStatus::out_of_service) {
            release_resource(*l.assigned_resource);
            l.assigned_resource.reset();
        }
    }
    const auto ctx = context();
    auto refuse = [&](const std::string& reason) {
        send(planner_, sos_, Performative::reject,
             {{"topic", "no_feasible_revision"}, {"request_id", trip->request_id}, {"reason", reason}}, trip);
    };
    Plan revised;
    try {
        revised = engine_.revise_plan(base, trip->spec, trigger, progress_of(*trip), rules_, ctx);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoFeasibleRevision) throw;
        return refuse(e.detail());
    }
    if (assign_resources(*trip, revised)) return propose(*trip, std::move(revised));
    // Last resort: continue on the ground from where the passenger is.
    if (auto ground = ground_only_plan(base, trip->spec, progress_of(*trip), ctx)) {
        ground->revision = base.revision + 1;
        ground->fallback = false;
        if (assign_resources(*trip, *ground)) return propose(*trip, std::move(*ground));
    }
    refuse("no resources for revised plan");
}

std::optional<std::string> Simulation::discover(Trip& trip, const Plan& plan, const Leg& leg, ResourceKind kind) {
    const auto pattern = capability_for(kind);
    std::optional<AllocationDecision> decision;
    const auto& active = world_.active_disruptions();
    ProviderSelector select = [&](const std::vector<std::pair<HolonId, CapabilityDescriptor>>& cands)
        -> std::optional<HolonId> {
        std::vector<ResourceState> avail;
        for (const auto& [hid, cap] : cands) {
            const ResourceState* r = world_.find_resource(hid.leaf());
            if (!r || !r->at_node() || r->battery <= 0 || r->status == ResourceStatus::out_of_service) continue;
            if (r->assigned_task) {
                // Only a vehicle this plan held for a leg the revision dropped.
                const auto& t = *r->assigned_task;
                if (t.rfind(plan.plan_id + "/", 0) != 0) continue;
                const auto held = t.substr(plan.plan_id.size() + 1);
                const bool still_used = std::any_of(plan.legs.begin(), plan.legs.end(), [&](const Leg& l) {
                    return l.state != LegState::completed && l.leg_id == held;
                });
                if (still_used || r->status == ResourceStatus::in_service) continue;
            } else if (r->status != ResourceStatus::idle && r->status != ResourceStatus::charging) {
                continue;
            }
            avail.push_back(*r);
        }
        if (avail.empty()) return std::nullopt;
        try {
            decision = match_resources(leg, avail, *scenario_.graph, active);
            decision->alternatives_considered = cands.size();
        } catch (const Error&) {
            return std::nullopt;
        }
        return resource_holon(decision->resource_id);
    };
    json conv{{"request_id", trip.request_id}, {"plan_id", plan.plan_id}, {"leg", leg.leg_id}};
    try {
        const auto out = federation_.route_conversation(planner_, pattern, select, now_, conv);
        record("discovery", {{"request_id", trip.request_id},
                             {"leg", leg.leg_id},
                             {"conversation", out.transcript.conversation_id},
                             {"strategy", options_.strategy},
                             {"capability", pattern},
                             {"provider", out.provider ? json(*out.provider) : json(nullptr)},
                             {"hops", out.transcript.hops.size()},
                             {"latency", out.discovery_latency},
                             {"failed", out.failed}});
        if (out.failed || !decision) return std::nullopt;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoProvider) throw;
        record("discovery", {{"request_id", trip.request_id},
                             {"leg", leg.leg_id},
                             {"strategy", options_.strategy},
                             {"capability", pattern},
                             {"provider", nullptr},
                             {"failed", false}});
        return std::nullopt;
    }
    json a = allocation_json(*decision);
    a["request_id"] = trip.request_id;
    a["plan_id"] = plan.plan_id;
    record("allocation", a);
    return decision->resource_id;
}

bool Simulation::assign_resources(Trip& trip, Plan& plan) {
    std::vector<std::string> reserved;
    auto rollback = [&] {
        for (const auto& id : reserved) release_resource(id);
        return false;
    };
    const auto& graph = *scenario_.graph;
    const auto& active = world_.active_disruptions();
    for (std::size_t i = 0; i < plan.legs.size(); ++i) {
        Leg& leg = plan.legs[i];
        if (leg.state == LegState::completed || leg.mode == LegMode::walk) continue;
        if (leg.assigned_resource) {
            const ResourceState* r = world_.find_resource(*leg.assigned_resource);
            const bool ours = r && (!r->assigned_task || r->assigned_task->rfind(plan.plan_id + "/", 0) == 0);
            if (r && ours && r->status != ResourceStatus::out_of_service &&
                resource_kind_for(leg.mode) == r->kind)
                continue;
            leg.assigned_resource.reset();
        }
        std::optional<std::string> got = discover(trip, plan, leg, *resource_kind_for(leg.mode));
        if (!got && leg.mode != LegMode::air_taxi) {
            const auto walk = route_time(graph, leg.route, active, kWalkFactor);
            if (walk && *walk <= kMaxWalkTicks) {
                record("substitution", {{"request_id", trip.request_id}, {"leg", leg.leg_id},
                                        {"from", leg.mode}, {"to", LegMode::walk}});
                leg.mode = LegMode::walk;
                leg.route.total_time = *walk;
                retime_legs(plan.legs, i, leg.planned_start);
                continue;
            }
            const LegMode other = leg.mode == LegMode::scooter ? LegMode::ground_taxi : LegMode::scooter;
            if ((got = discover(trip, plan, leg, *resource_kind_for(other)))) {
                record("substitution", {{"request_id", trip.request_id}, {"leg", leg.leg_id},
                                        {"from", leg.mode}, {"to", other}});
                leg.mode = other;
            }
        }
        if (!got) return rollback();
        ResourceState& r = world_.resource(*got);
        r.assigned_task = task_ref(plan, leg);
        r.status = ResourceStatus::reserved;
        leg.assigned_resource = *got;
        reserved.push_back(*got);
    }
    return true;
}

void Simulation::propose(Trip& trip, Plan plan) {
    plan.status = PlanStatus::draft;
    trip.proposal = plan;
    send(planner_, sos_, Performative::propose,
         {{"topic", "plan_proposal"}, {"request_id", trip.request_id}, {"plan", plan}}, &trip);
}

// ---------------------------------------------------------------- fleet and tasks

void Simulation::on_dispatch(const Message& m) {
    Trip* trip = find_trip(m.payload.at("request_id").get<std::string>());
    if (!trip || !trip->plan) return;
    const Plan& plan = *trip->plan;
    for (const auto& leg_id : m.payload.at("legs")) {
        const auto lid = leg_id.get<std::string>();
        Holon h;
        h.id = m.recipient.child(task_name(plan, lid));
        h.role = Role::task;
        h.capabilities = {{"execute.leg", json::object(), json::object(), 1.0}};
        h.reasoner_binding = "none";
        const HolonId id = holarchy_.register_holon(std::move(h), m.recipient);
        holarchy_.assign_task(id, task_ref(plan, *std::find_if(plan.legs.begin(), plan.legs.end(),
                                                                [&](const Leg& l) { return l.leg_id == lid; })));
        record("holon_registered", {{"id", id}, {"role", Role::task}, {"parent", m.recipient}});
        trip->tasks[lid] = id;
        send(m.recipient, id, Performative::command,
             {{"topic", "execute_leg"}, {"request_id", trip->request_id}, {"leg", lid}}, nullptr, m.id);
    }
}

void Simulation::detach_task(Trip& trip, const std::string& leg_id) {
    auto it = trip.tasks.find(leg_id);
    if (it == trip.tasks.end()) return;
    const HolonId id = it->second;
    trip.tasks.erase(it);
    if (!holarchy_.contains(id)) return;
    const auto report = holarchy_.detach(id);
    record("holon_detached", {{"id", id}, {"orphaned_tasks", report.orphaned_tasks}});
}

void Simulation::emit_status(Trip& trip, const Leg& leg, StatusKind kind, json detail) {
    StatusEvent ev;
    auto it = trip.tasks.find(leg.leg_id);
    ev.source = it != trip.tasks.end() ? it->second : fleet_for(leg.mode);
    ev.plan_id = trip.plan->plan_id;
    ev.revision = trip.plan->revision;
    ev.task_id = leg.leg_id;
    ev.kind = kind;
    ev.tick = now_;
    detail["mode"] = leg.mode;
    ev.detail = std::move(detail);
    json st = status_json(ev);
    st["request_id"] = trip.request_id;
    record("status", st);
    if (holarchy_.contains(ev.source) && ev.source != fleet_for(leg.mode))
        send(ev.source, fleet_for(leg.mode), Performative::status,
             {{"topic", "status"}, {"request_id", trip.request_id}, {"status", st}}, &trip);
    else
        send(fleet_for(leg.mode), sos_, Performative::status,
             {{"topic", "status"}, {"request_id", trip.request_id}, {"status", st}}, &trip);
}

bool Simulation::start_reposition(const std::string& resource, const std::string& target, const std::string& trip) {
    const ResourceState& r = world_.resource(resource);
    if (!r.at_node()) return false;
    RouteOptions o;
    o.modes = ModeSet::of(edge_mode_for(r.kind));
    if (!try_shortest_route(*scenario_.graph, r.node(), target, world_.active_disruptions(), o)) return false;
    repositioning_[resource] = {target, trip};
    continue_reposition(resource);
    return true;
}

void Simulation::continue_reposition(const std::string& resource) {
    auto it = repositioning_.find(resource);
    if (it == repositioning_.end()) return;
    const ResourceState& r = world_.resource(resource);
    if (!r.at_node() || r.node() == it->second.target || r.status == ResourceStatus::out_of_service) {
        repositioning_.erase(it);
        return;
    }
    RouteOptions o;
    o.modes = ModeSet::of(edge_mode_for(r.kind));
    auto route = try_shortest_route(*scenario_.graph, r.node(), it->second.target, world_.active_disruptions(), o);
    if (!route || route->edges.empty() || !world_.begin_traversal(resource, route->edges.front()))
        repositioning_.erase(it);
}

void Simulation::release_resource(const std::string& id) {
    repositioning_.erase(id);
    carrying_.erase(id);
    ResourceState& r = world_.resource(id);
    if (!r.at_node()) {
        release_on_arrival_.insert(id);
        return;
    }
    r.assigned_task.reset();
    if (r.battery == 0)
        r.status = scenario_.graph->node(r.node()).charging ? ResourceStatus::charging : ResourceStatus::out_of_service;
    else
        r.status = ResourceStatus::idle;
}

void Simulation::release_plan_resources(const Plan& plan, const std::set<std::string>& keep) {
    for (const auto& l : plan.legs) {
        if (!l.assigned_resource || keep.count(*l.assigned_resource)) continue;
        const ResourceState* r = world_.find_resource(*l.assigned_resource);
        if (!r || !r->assigned_task || r->assigned_task->rfind(plan.plan_id + "/", 0) != 0) continue;
        release_resource(*l.assigned_resource);
    }
}

// ---------------------------------------------------------------- execution

void Simulation::advance_trips() {
    std::vector<std::string> order;
    for (const auto& id : trip_order_)
        if (trips_.at(id).urgent) order.push_back(id);
    for (const auto& id : trip_order_)
        if (!trips_.at(id).urgent) order.push_back(id);
    for (const auto& id : order) {
        Trip& t = trips_.at(id);
        if (t.phase == TripPhase::active) advance_trip(t);
    }
}

void Simulation::advance_trip(Trip& trip) {
    Plan& plan = *trip.plan;
    const auto& graph = *scenario_.graph;

    auto blocking_disruption = [&](const Edge& e) -> std::string {
        if (e.blocked) return "static";
        for (const auto& d : world_.active_disruptions())
            if (d.blocks(e)) return d.id;
        return "";
    };
    // Starts the passenger on the next edge of leg; false when inadmissible.
    auto begin_edge = [&](Leg& leg) {
        const Edge& e = graph.edge(leg.route.edges[trip.traversed_edges]);
        Trip::Moving mv{e.id, e.other(trip.location), 0, leg.mode == LegMode::walk, false};
        if (leg.assigned_resource) {
            auto arrival = world_.begin_traversal(*leg.assigned_resource, e.id);
            if (!arrival) return false;
            mv.arrival = *arrival;
        } else {
            auto t = world_.effective_travel_time(e);
            if (!t) return false;
            mv.arrival = now_ + *t * kWalkFactor;
        }
        trip.moving = mv;
        return true;
    };
    auto block = [&](Leg& leg, json detail) {
        if (leg.assigned_resource) {
            carrying_.erase(*leg.assigned_resource);
            ResourceState& r = world_.resource(*leg.assigned_resource);
            if (r.status == ResourceStatus::in_service) r.status = ResourceStatus::reserved;
        }
        trip.phase = TripPhase::replanning;
        emit_status(trip, leg, StatusKind::leg_blocked, std::move(detail));
    };

    for (int guard = 0; guard < 64; ++guard) {
        if (trip.current_leg >= plan.legs.size()) return;
        Leg& leg = plan.legs[trip.current_leg];

        if (trip.moving) {
            auto& mv = *trip.moving;
            if (!mv.done && !(mv.walking && now_ >= mv.arrival)) return;
            const std::string edge = mv.edge;
            trip.location = mv.to;
            passenger_locations_[trip.passenger] = trip.location;
            trip.moving.reset();
            ++trip.traversed_edges;
            emit_status(trip, leg, StatusKind::leg_progress,
                        {{"edge", edge}, {"node", trip.location}, {"traversed", trip.traversed_edges}});
            if (leg.assigned_resource && world_.resource(*leg.assigned_resource).battery == 0) {
                emit_status(trip, leg, StatusKind::resource_fault,
                            {{"resource", *leg.assigned_resource}, {"battery", 0}, {"before_start", false}});
                block(leg, {{"reason", "resource_fault"}, {"node", trip.location}});
                return;
            }
            if (trip.traversed_edges == leg.route.edges.size()) {
                leg.state = LegState::completed;
                if (leg.assigned_resource) release_resource(*leg.assigned_resource);
                ++trip.current_leg;
                trip.traversed_edges = 0;
                emit_status(trip, leg, StatusKind::leg_completed, {{"node", trip.location}});
                continue;
            }
            const Edge& next = graph.edge(leg.route.edges[trip.traversed_edges]);
            if (!begin_edge(leg)) {
                block(leg, {{"reason", "edge_blocked"}, {"edge", next.id}, {"disruption", blocking_disruption(next)},
                            {"node", trip.location}});
            }
            return;
        }

        if (leg.state != LegState::pending) return;
        // Leg boundary: every remaining leg must still be admissible.
        for (std::size_t i = trip.current_leg; i < plan.legs.size(); ++i) {
            for (const auto& eid : plan.legs[i].route.edges) {
                const Edge& e = graph.edge(eid);
                if (world_.effective_travel_time(e)) continue;
                request_revision(trip, {"disruption", blocking_disruption(e)});
                return;
            }
        }
        if (now_ < leg.planned_start) return;
        if (leg.assigned_resource) {
            const ResourceState& r = world_.resource(*leg.assigned_resource);
            const bool there = r.at_node() && r.node() == leg.origin;
            if (r.status == ResourceStatus::out_of_service ||
                (!there && r.at_node() && !repositioning_.count(r.id) &&
                 !start_reposition(r.id, leg.origin, trip.request_id))) {
                trip.phase = TripPhase::replanning;
                emit_status(trip, leg, StatusKind::resource_fault,
                            {{"resource", r.id}, {"battery", r.battery}, {"before_start", true}});
                return;
            }
            if (!there) return;
        }
        leg.state = LegState::active;
        trip.traversed_edges = 0;
        if (leg.assigned_resource) {
            world_.resource(*leg.assigned_resource).status = ResourceStatus::in_service;
            carrying_[*leg.assigned_resource] = trip.request_id;
        }
        emit_status(trip, leg, StatusKind::leg_started,
                    {{"resource", leg.assigned_resource ? json(*leg.assigned_resource) : json(nullptr)},
                     {"origin", leg.origin},
                     {"destination", leg.destination}});
        const Edge& first = graph.edge(leg.route.edges.front());
        if (!begin_edge(leg))
            block(leg, {{"reason", "edge_blocked"}, {"edge", first.id}, {"disruption", blocking_disruption(first)},
                        {"node", trip.location}});
        return;
    }
}

// ---------------------------------------------------------------- reads

std::vector<ApprovalRequest> Simulation::pending_approvals() const {
    std::vector<ApprovalRequest> out;
    for (const auto& [id, a] : approvals_)
        if (a.pending()) out.push_back(a);
    std::sort(out.begin(), out.end(), [](const ApprovalRequest& a, const ApprovalRequest& b) {
        return a.timeout_at != b.timeout_at ? a.timeout_at < b.timeout_at : a.approval_id < b.approval_id;
    });
    return out;
}

RunMetrics Simulation::metrics() const {
    RunMetrics m;
    m.ticks = now_;
    for (const auto& id : trip_order_) {
        const Trip& t = trips_.at(id);
        ++m.trips_requested;
        if (t.phase == TripPhase::completed) {
            ++m.trips_completed;
            m.door_to_door[id] = *t.finished_at - t.first_activation.value_or(*t.finished_at);
        }
        m.revisions += static_cast<std::size_t>(t.revisions);
    }
    for (const auto& r : log_->records()) {
        if (r.kind == "clarification_needed") ++m.clarifications;
        else if (r.kind == "trip_aborted") ++m.trips_aborted;
        else if (r.kind == "message") ++m.messages;
    }
    for (const auto& [id, a] : approvals_) {
        ++m.approvals_requested;
        if (a.fallback_activated) ++m.fallbacks_activated;
        if (!a.decision) continue;
        if (a.decision->kind == DecisionKind::approved) ++m.approvals_approved;
        if (a.decision->kind == DecisionKind::overridden) ++m.approvals_overridden;
        if (a.decision->kind == DecisionKind::rejected) ++m.approvals_rejected;
    }
    if (!m.door_to_door.empty()) {
        double sum = 0;
        for (const auto& [id, d] : m.door_to_door) sum += static_cast<double>(d);
        m.mean_door_to_door = sum / static_cast<double>(m.door_to_door.size());
    }
    m.reasoner_fallbacks = reasoner_fallbacks_;
    m.coordination = federation_.metrics();
    m.log_hash = log_->hash();
    return m;
}

json Simulation::state() const {
    json trips = json::array();
    for (const auto& id : trip_order_) trips.push_back(trip_json(trips_.at(id)));
    json approvals = json::array();
    for (const auto& a : pending_approvals()) approvals.push_back(approval_json(a));
    const json world = world_.snapshot();
    return {{"tick", now_},
            {"finished", finished_},
            {"finish_reason", finish_reason_},
            {"world", world},
            {"world_digest", sha256_hex(world.dump())},
            {"trips", trips},
            {"pending_approvals", approvals},
            {"holons", holarchy_.size()},
            {"log_size", log_->size()}};
}

// ---------------------------------------------------------------- comparison

std::vector<ComparisonRow> run_comparison(const Scenario& scenario, const std::vector<StrategyKind>& strategies,
                                          const SimOptions& base, const std::optional<std::filesystem::path>& out_dir) {
    std::vector<ComparisonRow> rows;
    for (auto k : strategies) {
        SimOptions o = base;
        o.strategy = k;
        if (out_dir) o.log_file = *out_dir / (enum_name(k) + ".ndjson");
        Simulation sim(scenario, o);
        sim.run();
        rows.push_back({k, sim.coordination(), sim.metrics()});
    }
    return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << "strategy,conversations,total_messages,middle_hops,max_single_agent_load,max_load_agent,"
           "mean_discovery_latency,failed_conversations,trips_completed,mean_door_to_door\n";
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        out << enum_name(r.strategy) << ',' << m.conversations << ',' << m.total_messages << ',' << m.middle_hops
            << ',' << m.max_single_agent_load << ',' << m.max_load_agent << ',' << m.mean_discovery_latency << ','
            << m.failed_conversations << ',' << r.run.trips_completed << ',' << r.run.mean_door_to_door << '\n';
    }
    return out.str();
}

json comparison_json(const std::vector<ComparisonRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        json j = r.metrics.to_json();
        j["trips_completed"] = r.run.trips_completed;
        j["mean_door_to_door"] = r.run.mean_door_to_door;
        out.push_back(j);
    }
    return out;
}

}  // namespace holonsim
