#include "holonsim/world.hpp"

#include <algorithm>

#include "holonsim/error.hpp"
#include "holonsim/routing.hpp"

namespace holonsim {

double EdgePosition::fraction(Tick now) const {
    if (arrive <= depart) return 1.0;
    const double f = static_cast<double>(now - depart) / static_cast<double>(arrive - depart);
    return std::clamp(f, 0.0, 1.0);
}

const std::string& ResourceState::node() const {
    if (const auto* n = std::get_if<std::string>(&location)) return *n;
    return std::get<EdgePosition>(location).from;
}

nlohmann::json resource_json(const ResourceState& r, Tick now) {
    nlohmann::json j{{"id", r.id}, {"kind", r.kind}, {"battery", r.battery}, {"status", r.status}};
    if (r.at_node()) {
        j["location"] = r.node();
    } else {
        const auto& p = std::get<EdgePosition>(r.location);
        j["location"] = {{"edge", p.edge}, {"from", p.from}, {"to", p.to},
                         {"fraction", p.fraction(now)}};
    }
    j["assigned_task"] = r.assigned_task ? nlohmann::json(*r.assigned_task) : nlohmann::json(nullptr);
    return j;
}

World::World(std::shared_ptr<const CityGraph> graph, std::uint64_t rng_seed)
    : graph_(std::move(graph)), rng_seed_(rng_seed) {}

void World::add_resource(ResourceState r) {
    if (resources_.count(r.id)) throw Error(ErrorCode::DuplicateId, "resource '" + r.id + "'");
    if (!r.at_node() || !graph_->find_node(r.node()))
        throw Error(ErrorCode::UnknownTarget, "resource '" + r.id + "' not on a graph node");
    if (r.battery < 0 || r.battery > 100)
        throw Error(ErrorCode::SchemaError, "resource '" + r.id + "' battery outside [0, 100]");
    if (r.kind == ResourceKind::air_taxi && !graph_->is_vertiport(r.node()))
        throw Error(ErrorCode::SchemaError, "air taxi '" + r.id + "' must start at a vertiport");
    if (r.battery == 0)
        r.status = graph_->node(r.node()).charging ? ResourceStatus::charging
                                                    : ResourceStatus::out_of_service;
    resources_.emplace(r.id, std::move(r));
}

ResourceState& World::resource(const std::string& id) {
    auto it = resources_.find(id);
    if (it == resources_.end()) throw Error(ErrorCode::UnknownTarget, "no resource '" + id + "'");
    return it->second;
}

const ResourceState& World::resource(const std::string& id) const {
    auto it = resources_.find(id);
    if (it == resources_.end()) throw Error(ErrorCode::UnknownTarget, "no resource '" + id + "'");
    return it->second;
}

const ResourceState* World::find_resource(const std::string& id) const {
    auto it = resources_.find(id);
    return it == resources_.end() ? nullptr : &it->second;
}

void World::check_disruption(const Disruption& d) const {
    if (used_ids_.count(d.id)) throw Error(ErrorCode::DuplicateDisruption, d.id);
    check_disruption_targets(d, *graph_);
}

DisruptionAccepted World::inject_disruption(Disruption d) {
    check_disruption(d);
    d.activation = std::max(d.activation, clock_);
    if (d.expiry && *d.expiry <= d.activation)
        throw Error(ErrorCode::SchemaError, d.id + ": expiry must come after activation");
    used_ids_.insert(d.id);
    DisruptionAccepted ack{d.id, d.activation};
    schedule(d.activation, Pending::activate, d.id);
    if (d.expiry) schedule(*d.expiry, Pending::expire, d.id);
    pending_.emplace(d.id, std::move(d));
    return ack;
}

std::optional<Tick> World::effective_travel_time(const Edge& edge) const {
    return holonsim::effective_travel_time(edge, active_);
}

std::optional<Tick> World::begin_traversal(const std::string& resource_id, const std::string& edge_id) {
    ResourceState& r = resource(resource_id);
    const Edge* e = graph_->find_edge(edge_id);
    if (!e || !r.at_node() || !e->touches(r.node())) return std::nullopt;
    if (e->mode != edge_mode_for(r.kind)) return std::nullopt;
    auto t = effective_travel_time(*e);
    if (!t) return std::nullopt;
    EdgePosition pos{e->id, r.node(), e->other(r.node()), clock_, clock_ + *t};
    r.location = pos;
    ++moving_;
    schedule(pos.arrive, Pending::arrive, resource_id, {{"edge", e->id}, {"ticks", *t}});
    return pos.arrive;
}

void World::schedule_timer(Tick at, nlohmann::json tag) {
    schedule(std::max(at, clock_), Pending::timer, {}, std::move(tag));
}

void World::schedule(Tick at, Pending what, std::string subject, nlohmann::json data) {
    queue_.push(Scheduled{at, next_seq_++, what, std::move(subject), std::move(data)});
}

Event World::emit(std::string kind, nlohmann::json payload) {
    return Event{clock_, next_event_seq_++, std::move(kind), std::move(payload)};
}

std::vector<Event> World::advance(Tick until) {
    std::vector<Event> out;
    process_due(out);
    while (clock_ < until) {
        ++clock_;
        charge_one_tick(out);
        process_due(out);
    }
    return out;
}

void World::process_due(std::vector<Event>& out) {
    while (!queue_.empty() && queue_.top().tick <= clock_) {
        Scheduled s = queue_.top();
        queue_.pop();
        switch (s.what) {
            case Pending::activate: {
                auto it = pending_.find(s.subject);
                if (it == pending_.end()) break;
                active_.push_back(it->second);
                std::sort(active_.begin(), active_.end(),
                          [](const Disruption& a, const Disruption& b) { return a.id < b.id; });
                out.push_back(emit("disruption_activated", it->second));
                break;
            }
            case Pending::expire: {
                auto it = std::find_if(active_.begin(), active_.end(),
                                       [&](const Disruption& d) { return d.id == s.subject; });
                if (it != active_.end()) {
                    active_.erase(it);
                    pending_.erase(s.subject);
                    out.push_back(emit("disruption_expired", {{"id", s.subject}}));
                }
                break;
            }
            case Pending::arrive: {
                ResourceState& r = resource(s.subject);
                const auto pos = std::get<EdgePosition>(r.location);
                r.location = pos.to;
                --moving_;
                const Tick ticks = s.data.at("ticks").get<Tick>();
                r.battery = std::max(0, r.battery - static_cast<int>(ticks) * drain_per_tick(r.kind));
                if (r.battery == 0) r.status = ResourceStatus::out_of_service;
                out.push_back(emit("move_completed", {{"resource", r.id},
                                                      {"edge", pos.edge},
                                                      {"node", pos.to},
                                                      {"battery", r.battery}}));
                break;
            }
            case Pending::timer:
                out.push_back(emit("timer", s.data));
                break;
        }
    }
}

void World::charge_one_tick(std::vector<Event>& out) {
    for (auto& [id, r] : resources_) {
        if (!r.at_node() || r.assigned_task) continue;
        if (!graph_->node(r.node()).charging) continue;
        if (r.status != ResourceStatus::idle && r.status != ResourceStatus::charging &&
            r.status != ResourceStatus::out_of_service)
            continue;
        if (r.battery >= 100) continue;
        r.battery = std::min(100, r.battery + kChargePerTick);
        r.status = r.battery >= 100 ? ResourceStatus::idle : ResourceStatus::charging;
        if (r.battery >= 100) out.push_back(emit("charging_complete", {{"resource", id}}));
    }
}

std::vector<std::string> World::check_invariants() const {
    std::vector<std::string> problems;
    for (const auto& [id, r] : resources_) {
        if (r.status == ResourceStatus::in_service && !r.assigned_task)
            problems.push_back(id + ": in_service without task");
        if (r.battery < 0 || r.battery > 100) problems.push_back(id + ": battery out of range");
        if (r.battery == 0 && r.status != ResourceStatus::charging &&
            r.status != ResourceStatus::out_of_service)
            problems.push_back(id + ": empty battery but status " + enum_name(r.status));
        if (r.at_node()) {
            if (!graph_->find_node(r.node())) problems.push_back(id + ": location off graph");
        } else if (!graph_->find_edge(std::get<EdgePosition>(r.location).edge)) {
            problems.push_back(id + ": edge position off graph");
        }
    }
    for (std::size_t i = 1; i < active_.size(); ++i)
        if (active_[i].id == active_[i - 1].id) problems.push_back("duplicate disruption " + active_[i].id);
    return problems;
}

nlohmann::json World::snapshot() const {
    nlohmann::json resources = nlohmann::json::array();
    for (const auto& [id, r] : resources_) resources.push_back(resource_json(r, clock_));
    return {{"clock", clock_},
            {"rng_seed", rng_seed_},
            {"resources", std::move(resources)},
            {"disruptions", active_}};
}

}  // namespace holonsim
