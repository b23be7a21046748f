#include "holonsim/holons.hpp"

#include <algorithm>

#include "holonsim/error.hpp"
#include "holonsim/routing.hpp"

namespace holonsim {

nlohmann::json status_json(const StatusEvent& ev) {
    return {{"source", ev.source},   {"plan", ev.plan_id}, {"revision", ev.revision},
            {"leg", ev.task_id},     {"kind", ev.kind},    {"tick", ev.tick},
            {"detail", ev.detail}};
}

nlohmann::json approval_json(const ApprovalRequest& a) {
    nlohmann::json j{{"approval_id", a.approval_id},
                     {"plan_id", a.plan_id},
                     {"request_id", a.request_id},
                     {"revision", a.revision},
                     {"risk_class", a.risk_class},
                     {"submitted_at", a.submitted_at},
                     {"timeout_at", a.timeout_at},
                     {"plan", a.plan},
                     {"fallback_plan", a.fallback_plan ? nlohmann::json(*a.fallback_plan) : nlohmann::json(nullptr)},
                     {"fallback_activated", a.fallback_activated},
                     {"withdrawn", a.withdrawn},
                     {"decision", nullptr},
                     {"decided_by", nullptr}};
    if (a.decision) {
        j["decision"] = {{"kind", a.decision->kind}, {"at", a.decision->at}};
        if (a.decision->override_plan_id) j["decision"]["plan_id"] = *a.decision->override_plan_id;
        j["decided_by"] = a.decision->decided_by;
    }
    return j;
}

nlohmann::json allocation_json(const AllocationDecision& d) {
    return {{"task", d.task_id},
            {"resource", d.resource_id},
            {"score", d.score},
            {"alternatives_considered", d.alternatives_considered}};
}

std::optional<std::size_t> select_best(std::span<const CandidateScore> c) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (!c[i].feasible) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& a = c[i];
        const auto& b = c[*best];
        if (a.distance != b.distance) {
            if (a.distance < b.distance) best = i;
        } else if (a.battery != b.battery) {
            if (a.battery > b.battery) best = i;
        } else if (a.id < b.id) {
            best = i;
        }
    }
    return best;
}

std::vector<CandidateScore> score_candidates(const Leg& leg, std::span<const ResourceState> candidates,
                                             const CityGraph& graph, std::span<const Disruption> active) {
    std::vector<CandidateScore> out;
    out.reserve(candidates.size());
    for (const auto& r : candidates) {
        CandidateScore s{r.id, 0, r.battery, false};
        if (auto approach = approach_ticks(r, leg.origin, graph, active)) {
            s.distance = static_cast<double>(*approach);
            s.feasible = r.status != ResourceStatus::out_of_service &&
                         battery_needed(r.kind, *approach, leg.route.total_time) <= r.battery;
        }
        out.push_back(s);
    }
    return out;
}

AllocationDecision match_resources(const Leg& leg, std::span<const ResourceState> candidates,
                                   const CityGraph& graph, std::span<const Disruption> active) {
    const auto scores = score_candidates(leg, candidates, graph, active);
    const auto best = select_best(scores);
    if (!best) throw Error(ErrorCode::NoCandidate, leg.leg_id + ": no feasible resource");
    return {leg.leg_id, scores[*best].id, -scores[*best].distance, candidates.size()};
}

std::optional<ResourceKind> resource_kind_for(LegMode mode) {
    switch (mode) {
        case LegMode::scooter: return ResourceKind::scooter;
        case LegMode::air_taxi: return ResourceKind::air_taxi;
        case LegMode::ground_taxi: return ResourceKind::ground_taxi;
        case LegMode::walk: return std::nullopt;
    }
    return std::nullopt;
}

std::string capability_for(ResourceKind kind) {
    switch (kind) {
        case ResourceKind::scooter: return "ride.scooter";
        case ResourceKind::ground_taxi: return "ride.ground_taxi";
        case ResourceKind::air_taxi: return "fly.air_taxi";
    }
    return "";
}

bool disruption_on_route(const Plan& plan, std::span<const Disruption> active, const CityGraph& graph) {
    for (const Leg& leg : plan.legs) {
        if (leg.state == LegState::completed) continue;
        for (const auto& eid : leg.route.edges) {
            const Edge& e = graph.edge(eid);
            for (const auto& d : active)
                if (d.covers(e)) return true;
        }
        for (const auto& d : active)
            for (const auto& n : leg.route.nodes)
                if (d.touches_node(n)) return true;
    }
    return false;
}

RiskClass classify_risk(const Plan& plan, bool revised_under_disruption) {
    if (plan.has_air_leg() || (plan.revision > 0 && revised_under_disruption)) return RiskClass::high;
    return RiskClass::low;
}

std::vector<std::string> feasibility_problems(const Plan& plan, const ReasonerContext& ctx) {
    std::vector<std::string> p;
    for (const Leg& leg : plan.legs) {
        if (leg.state == LegState::completed) continue;
        if (!route_admissible(*ctx.graph, leg.route, ctx.disruptions))
            p.push_back(leg.leg_id + ": route not admissible");
        if (!leg.assigned_resource) {
            if (leg.mode != LegMode::walk) p.push_back(leg.leg_id + ": no resource assigned");
            continue;
        }
        auto it = ctx.resources.find(*leg.assigned_resource);
        if (it == ctx.resources.end()) {
            p.push_back(leg.leg_id + ": resource " + *leg.assigned_resource + " withdrawn");
            continue;
        }
        const ResourceState& r = it->second;
        if (r.status == ResourceStatus::out_of_service)
            p.push_back(leg.leg_id + ": " + r.id + " out of service");
        if (resource_kind_for(leg.mode) != r.kind)
            p.push_back(leg.leg_id + ": " + r.id + " cannot serve " + enum_name(leg.mode));
        if (r.assigned_task && r.assigned_task->rfind(plan.plan_id + "/", 0) != 0)
            p.push_back(leg.leg_id + ": " + r.id + " held by " + *r.assigned_task);
    }
    return p;
}

}  // namespace holonsim
