#include "holonsim/reasoning.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>

#include "holonsim/error.hpp"
#include "holonsim/event_log.hpp"
#include "holonsim/routing.hpp"

namespace holonsim {

// ---- domain type helpers ----

bool TaskSpec::has(ConstraintKind kind) const {
    return std::any_of(constraints.begin(), constraints.end(),
                       [&](const Constraint& c) { return c.kind == kind; });
}

std::optional<Tick> TaskSpec::max_cost() const {
    for (const auto& c : constraints)
        if (c.kind == ConstraintKind::max_cost) return c.value;
    return std::nullopt;
}

Tick Plan::estimated_time() const {
    if (legs.empty()) return 0;
    return legs.back().planned_end - legs.front().planned_start;
}

bool Plan::has_air_leg() const {
    return std::any_of(legs.begin(), legs.end(), [](const Leg& l) {
        return l.mode == LegMode::air_taxi && l.state != LegState::completed;
    });
}

std::size_t Plan::first_open_leg() const {
    for (std::size_t i = 0; i < legs.size(); ++i)
        if (legs[i].state != LegState::completed) return i;
    return legs.size();
}

void to_json(nlohmann::json& j, const Constraint& c) {
    j = {{"kind", c.kind}};
    if (c.value) j["value"] = *c.value;
}

void from_json(const nlohmann::json& j, Constraint& c) {
    c.kind = j.at("kind").get<ConstraintKind>();
    if (j.contains("value") && !j.at("value").is_null()) c.value = j.at("value").get<Tick>();
}

void to_json(nlohmann::json& j, const TaskSpec& s) {
    j = {{"request_id", s.request_id},
         {"passenger", s.passenger},
         {"origin", s.origin},
         {"destination", s.destination},
         {"earliest_departure", s.earliest_departure},
         {"constraints", s.constraints},
         {"free_text", s.free_text},
         {"cancellation", s.cancellation}};
}

void from_json(const nlohmann::json& j, TaskSpec& s) {
    s.request_id = j.at("request_id").get<std::string>();
    s.passenger = j.at("passenger").get<HolonId>();
    s.origin = j.at("origin").get<std::string>();
    s.destination = j.at("destination").get<std::string>();
    s.earliest_departure = j.value("earliest_departure", Tick{0});
    s.constraints = j.value("constraints", std::vector<Constraint>{});
    s.free_text = j.value("free_text", std::string{});
    s.cancellation = j.value("cancellation", false);
}

void to_json(nlohmann::json& j, const Leg& l) {
    j = {{"leg_id", l.leg_id},
         {"mode", l.mode},
         {"origin", l.origin},
         {"destination", l.destination},
         {"route", l.route},
         {"assigned_resource",
          l.assigned_resource ? nlohmann::json(*l.assigned_resource) : nlohmann::json(nullptr)},
         {"planned_start", l.planned_start},
         {"planned_end", l.planned_end},
         {"state", l.state}};
}

void from_json(const nlohmann::json& j, Leg& l) {
    l.leg_id = j.at("leg_id").get<std::string>();
    l.mode = j.at("mode").get<LegMode>();
    l.origin = j.at("origin").get<std::string>();
    l.destination = j.at("destination").get<std::string>();
    l.route = j.at("route").get<Route>();
    if (j.contains("assigned_resource") && !j.at("assigned_resource").is_null())
        l.assigned_resource = j.at("assigned_resource").get<std::string>();
    l.planned_start = j.at("planned_start").get<Tick>();
    l.planned_end = j.at("planned_end").get<Tick>();
    l.state = j.value("state", LegState::pending);
}

void to_json(nlohmann::json& j, const Plan& p) {
    j = {{"plan_id", p.plan_id}, {"request_id", p.request_id}, {"legs", p.legs},
         {"status", p.status},   {"revision", p.revision},     {"fallback", p.fallback}};
}

void from_json(const nlohmann::json& j, Plan& p) {
    p.plan_id = j.at("plan_id").get<std::string>();
    p.request_id = j.value("request_id", std::string{});
    p.legs = j.at("legs").get<std::vector<Leg>>();
    p.status = j.value("status", PlanStatus::draft);
    p.revision = j.value("revision", 0);
    p.fallback = j.value("fallback", false);
}

void to_json(nlohmann::json& j, const ScheduleAdjustment& a) {
    j = {{"request_id", a.request_id}, {"kind", a.kind}, {"magnitude", a.magnitude}};
}

void from_json(const nlohmann::json& j, ScheduleAdjustment& a) {
    a.request_id = j.value("request_id", std::string{});
    a.kind = j.at("kind").get<AdjustmentKind>();
    a.magnitude = j.value("magnitude", Tick{0});
}

nlohmann::json verdict_json(const Verdict& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& x : v.violations)
        out.push_back({{"rule", x.rule}, {"leg", x.leg_id}, {"detail", x.detail}});
    return out;
}

// ---- context ----

ReasonerContext ReasonerContext::from_world(const World& world) {
    ReasonerContext ctx;
    ctx.tick = world.clock();
    ctx.graph = world.graph_ptr();
    ctx.disruptions = world.active_disruptions();
    ctx.resources = world.resources();
    return ctx;
}

nlohmann::json ReasonerContext::digest() const {
    std::map<std::string, int> idle;
    for (const auto& [id, r] : resources)
        if (!r.assigned_task && r.at_node() &&
            (r.status == ResourceStatus::idle || r.status == ResourceStatus::charging))
            ++idle[enum_name(r.kind)];
    std::vector<std::string> closed;
    std::vector<std::string> disruption_ids;
    for (const auto& d : disruptions) {
        disruption_ids.push_back(d.id);
        if (d.kind == DisruptionKind::vertiport_closed || d.kind == DisruptionKind::no_fly_zone)
            closed.insert(closed.end(), d.targets.begin(), d.targets.end());
    }
    std::sort(closed.begin(), closed.end());
    closed.erase(std::unique(closed.begin(), closed.end()), closed.end());
    nlohmann::json body{{"tick", tick},
                        {"available", idle},
                        {"disruptions", disruption_ids},
                        {"closed_vertiports", closed},
                        {"reservations", reservations.size()},
                        {"rules", rules_digest}};
    body["hash"] = sha256_hex(body.dump()).substr(0, 16);
    return body;
}

// ---- rules ----

namespace {

const std::vector<std::string> kRuleIds{"plan_structure",     "no_fly_zone",
                                        "vertiport_closed",   "vertiport_capacity",
                                        "battery_insufficient", "resource_overlap"};

}  // namespace

RuleSet RuleSet::defaults() {
    RuleSet rs;
    for (const auto& id : kRuleIds) rs.rules_.push_back({id, true, nlohmann::json::object()});
    rs.rules_[4].params = {{"reserve_percent", 0}};
    return rs;
}

RuleSet RuleSet::from_json(const nlohmann::json& doc) {
    RuleSet rs = defaults();
    if (!doc.contains("rules") || !doc.at("rules").is_array())
        throw Error(ErrorCode::SchemaError, "rules: expected an array");
    std::size_t i = 0;
    for (const auto& r : doc.at("rules")) {
        const std::string path = "rules[" + std::to_string(i++) + "]";
        if (!r.is_object() || !r.contains("id") || !r.at("id").is_string())
            throw Error(ErrorCode::SchemaError, path + ".id: expected a string");
        const auto id = r.at("id").get<std::string>();
        auto it = std::find_if(rs.rules_.begin(), rs.rules_.end(),
                               [&](const RuleSpec& s) { return s.id == id; });
        if (it == rs.rules_.end()) throw Error(ErrorCode::SchemaError, path + ".id: unknown rule " + id);
        it->enabled = r.value("enabled", true);
        if (r.contains("params")) it->params.update(r.at("params"));
    }
    return rs;
}

RuleSet RuleSet::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + file.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, file.string() + ": " + e.what());
    }
}

bool RuleSet::enabled(std::string_view id) const {
    return std::any_of(rules_.begin(), rules_.end(),
                       [&](const RuleSpec& s) { return s.id == id && s.enabled; });
}

nlohmann::json RuleSet::params(std::string_view id) const {
    for (const auto& s : rules_)
        if (s.id == id) return s.params;
    return nlohmann::json::object();
}

nlohmann::json RuleSet::to_json() const {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& s : rules_) rules.push_back({{"id", s.id}, {"enabled", s.enabled}, {"params", s.params}});
    return {{"rules", rules}};
}

std::string RuleSet::digest() const { return sha256_hex(to_json().dump()).substr(0, 16); }

// ---- parsing ----

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc) || c == '-' || c == '_' || c == '\'') {
            cur += static_cast<char>(std::tolower(uc));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bool has_phrase(const std::string& haystack, std::initializer_list<const char*> needles) {
    return std::any_of(needles.begin(), needles.end(),
                       [&](const char* n) { return haystack.find(n) != std::string::npos; });
}

[[noreturn]] void clarify(const std::string& reason) {
    throw Error(ErrorCode::NeedsClarification, reason);
}

}  // namespace

TaskSpec parse_request(std::string_view text, const ReasonerContext& ctx,
                       const std::string& request_id, const HolonId& passenger) {
    if (text.empty()) clarify("empty_utterance");
    const CityGraph& graph = *ctx.graph;

    std::map<std::string, std::string> node_by_token;
    for (const Node& n : graph.nodes()) node_by_token.emplace(lower(n.id), n.id);

    const auto tokens = tokenize(text);
    std::optional<std::string> origin;
    std::optional<std::string> destination;
    std::vector<std::string> mentioned;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = node_by_token.find(tokens[i]);
        if (it == node_by_token.end()) continue;
        const std::string prev = i > 0 ? tokens[i - 1] : "";
        if (prev == "from" && !origin)
            origin = it->second;
        else if ((prev == "to" || prev == "towards") && !destination)
            destination = it->second;
        else
            mentioned.push_back(it->second);
    }
    if (!destination) {
        for (auto it = mentioned.rbegin(); it != mentioned.rend(); ++it)
            if (*it != origin) {
                destination = *it;
                break;
            }
    }
    if (!origin) {
        auto loc = ctx.passenger_locations.find(passenger.str());
        if (loc != ctx.passenger_locations.end()) origin = loc->second;
    }
    if (!destination) clarify("unresolved_destination");
    if (!origin) clarify("unresolved_origin");
    if (*origin == *destination) clarify("same_origin_destination");

    TaskSpec spec;
    spec.request_id = request_id;
    spec.passenger = passenger;
    spec.origin = *origin;
    spec.destination = *destination;
    spec.earliest_departure = ctx.tick;
    spec.free_text = std::string(text);

    const std::string low = lower(text);
    if (has_phrase(low, {"turbulence"})) spec.constraints.push_back({ConstraintKind::avoid_turbulence, {}});
    const bool ground_only =
        has_phrase(low, {"ground only", "ground-only", "no air", "no flying", "no flight",
                         "avoid flying", "don't fly", "do not fly"});
    const bool wants_air = has_phrase(low, {"by air", "fly me", "air taxi", "flight to"});
    if (ground_only && wants_air) clarify("contradictory_constraints");
    if (ground_only) spec.constraints.push_back({ConstraintKind::ground_only, {}});

    static const std::regex max_cost_re(R"((?:max(?:imum)?\s+cost|within)\s+(\d+))");
    static const std::regex depart_at_re(R"(at\s+tick\s+(\d+))");
    static const std::regex depart_in_re(R"(\bin\s+(\d+)\s+ticks?)");
    std::smatch m;
    if (std::regex_search(low, m, max_cost_re))
        spec.constraints.push_back({ConstraintKind::max_cost, std::stoll(m[1].str())});
    if (std::regex_search(low, m, depart_at_re))
        spec.earliest_departure = std::max(ctx.tick, static_cast<Tick>(std::stoll(m[1].str())));
    else if (std::regex_search(low, m, depart_in_re))
        spec.earliest_departure = ctx.tick + std::stoll(m[1].str());
    return spec;
}

ScheduleAdjustment interpret_update(std::string_view text, const ReasonerContext&,
                                    const std::string& request_id) {
    if (text.empty()) clarify("empty_utterance");
    const std::string low = lower(text);
    ScheduleAdjustment adj;
    adj.request_id = request_id;

    static const std::regex delay_re(R"(delay(?:ed)?\s+(?:by\s+)?(\d+))");
    static const std::regex late_by_re(R"(late\s+by\s+(\d+))");
    static const std::regex advance_re(R"((?:advance|earlier)\s+(?:by\s+)?(\d+))");
    std::smatch m;
    if (has_phrase(low, {"cancel"})) {
        adj.kind = AdjustmentKind::cancel;
    } else if (has_phrase(low, {"urgent", "asap", "hurry"})) {
        adj.kind = AdjustmentKind::reprioritize;
    } else if (std::regex_search(low, m, delay_re) || std::regex_search(low, m, late_by_re)) {
        adj.kind = AdjustmentKind::delay_departure;
        adj.magnitude = std::max<Tick>(1, std::stoll(m[1].str()));
    } else if (has_phrase(low, {"late", "delay"})) {
        adj.kind = AdjustmentKind::delay_departure;
        adj.magnitude = kDefaultDelayTicks;
    } else if (std::regex_search(low, m, advance_re)) {
        adj.kind = AdjustmentKind::advance_departure;
        adj.magnitude = std::max<Tick>(1, std::stoll(m[1].str()));
    } else if (has_phrase(low, {"early", "earlier"})) {
        adj.kind = AdjustmentKind::advance_departure;
        adj.magnitude = kDefaultDelayTicks;
    } else {
        clarify("no_rule_matched");
    }
    return adj;
}

// ---- planning ----

namespace {

RouteOptions options_for(LegMode mode, const TaskSpec& spec) {
    RouteOptions o;
    o.modes = ModeSet::of(edge_mode_for(mode));
    o.avoid_turbulence = spec.has(ConstraintKind::avoid_turbulence);
    o.time_multiplier = mode == LegMode::walk ? kWalkFactor : 1;
    return o;
}

Leg make_leg(std::string id, LegMode mode, Route route) {
    Leg l;
    l.leg_id = std::move(id);
    l.mode = mode;
    l.origin = route.origin();
    l.destination = route.destination();
    l.route = std::move(route);
    return l;
}

std::string plan_id_for(const std::string& request_id) { return "P-" + request_id; }

}  // namespace

void retime_legs(std::vector<Leg>& legs, std::size_t from, Tick earliest) {
    Tick cursor = earliest;
    if (from > 0 && from <= legs.size()) cursor = std::max(cursor, legs[from - 1].planned_end);
    for (std::size_t i = from; i < legs.size(); ++i) {
        Leg& l = legs[i];
        const Tick dur = std::max<Tick>(1, l.route.total_time);
        l.planned_start = std::max(cursor, l.planned_start);
        l.planned_end = l.planned_start + dur;
        cursor = l.planned_end;
    }
}

std::vector<ModalCandidate> enumerate_modal_plans(const TaskSpec& spec, const ReasonerContext& ctx,
                                                  const std::string& origin, Tick departure,
                                                  CandidateFilter filter) {
    const CityGraph& graph = *ctx.graph;
    const auto& active = ctx.disruptions;
    std::vector<ModalCandidate> out;
    if (origin == spec.destination) return out;

    auto finish = [&](ModalCandidate c) {
        Tick t = departure;
        int n = 0;
        for (Leg& l : c.legs) {
            l.leg_id = "T_a" + std::to_string(++n);
            l.planned_start = t;
            l.planned_end = t + l.route.total_time;
            t = l.planned_end;
        }
        c.total_time = t - departure;
        if (auto cap = spec.max_cost(); cap && c.total_time > *cap) return;
        out.push_back(std::move(c));
    };

    const auto ground_opts = options_for(LegMode::scooter, spec);
    if (filter.ground) {
        if (auto r = try_shortest_route(graph, origin, spec.destination, active, ground_opts)) {
            ModalCandidate c{"ground", {make_leg("", LegMode::scooter, *r)}, 0};
            finish(std::move(c));
        }
    }
    if (filter.air && !spec.has(ConstraintKind::ground_only)) {
        const auto air_opts = options_for(LegMode::air_taxi, spec);
        const auto ports = graph.vertiports();
        for (const auto& from_v : ports) {
            std::optional<Route> first;
            if (from_v != origin) {
                first = try_shortest_route(graph, origin, from_v, active, ground_opts);
                if (!first) continue;
            }
            for (const auto& to_v : ports) {
                if (to_v == from_v) continue;
                auto air = try_shortest_route(graph, from_v, to_v, active, air_opts);
                if (!air) continue;
                std::optional<Route> last;
                if (to_v != spec.destination) {
                    last = try_shortest_route(graph, to_v, spec.destination, active, ground_opts);
                    if (!last) continue;
                }
                ModalCandidate c{"air:" + from_v + ">" + to_v, {}, 0};
                if (first) c.legs.push_back(make_leg("", LegMode::scooter, *first));
                c.legs.push_back(make_leg("", LegMode::air_taxi, *air));
                if (last) c.legs.push_back(make_leg("", LegMode::scooter, *last));
                finish(std::move(c));
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const ModalCandidate& a, const ModalCandidate& b) {
        return a.total_time < b.total_time;
    });
    return out;
}

Plan generate_plan(const TaskSpec& spec, const ReasonerContext& ctx) {
    const Tick departure = std::max(spec.earliest_departure, ctx.tick);
    auto candidates = enumerate_modal_plans(spec, ctx, spec.origin, departure);
    if (candidates.empty())
        throw Error(ErrorCode::NoFeasiblePlan, spec.origin + " -> " + spec.destination);
    Plan plan;
    plan.plan_id = plan_id_for(spec.request_id);
    plan.request_id = spec.request_id;
    plan.legs = std::move(candidates.front().legs);
    return plan;
}

// ---- validation ----

std::vector<std::string> leg_chain_problems(const Plan& plan, const CityGraph& graph) {
    std::vector<std::string> p;
    if (plan.legs.empty()) p.push_back("plan has no legs");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < plan.legs.size(); ++i) {
        const Leg& l = plan.legs[i];
        const std::string tag = "leg " + l.leg_id + ": ";
        if (!ids.insert(l.leg_id).second) p.push_back(tag + "duplicate leg id");
        if (l.planned_start >= l.planned_end) p.push_back(tag + "planned_start not before planned_end");
        if (l.route.nodes.empty()) {
            p.push_back(tag + "route has no waypoints");
            continue;
        }
        if (l.route.origin() != l.origin || l.route.destination() != l.destination)
            p.push_back(tag + "route endpoints differ from leg endpoints");
        if (l.route.nodes.size() != l.route.edges.size() + 1)
            p.push_back(tag + "route waypoint count mismatch");
        for (std::size_t k = 0; k < l.route.edges.size() && k + 1 < l.route.nodes.size(); ++k) {
            const Edge* e = graph.find_edge(l.route.edges[k]);
            if (!e) {
                p.push_back(tag + "unknown edge " + l.route.edges[k]);
                continue;
            }
            if (!e->touches(l.route.nodes[k]) || e->other(l.route.nodes[k]) != l.route.nodes[k + 1])
                p.push_back(tag + "edge " + e->id + " does not join consecutive waypoints");
            if (e->mode != edge_mode_for(l.mode))
                p.push_back(tag + "edge " + e->id + " mode does not match " + enum_name(l.mode));
        }
        if (l.mode == LegMode::air_taxi &&
            (!graph.is_vertiport(l.origin) || !graph.is_vertiport(l.destination)))
            p.push_back(tag + "air leg must start and end at vertiports");
        if (i + 1 < plan.legs.size()) {
            const Leg& next = plan.legs[i + 1];
            if (l.destination != next.origin) p.push_back(tag + "does not connect to " + next.leg_id);
            if (next.planned_start < l.planned_end) p.push_back(tag + "overlaps " + next.leg_id);
        }
    }
    return p;
}

std::vector<std::string> plan_structure_problems(const Plan& plan, const TaskSpec& spec,
                                                 const CityGraph& graph) {
    auto p = leg_chain_problems(plan, graph);
    if (!plan.legs.empty()) {
        if (plan.legs.front().origin != spec.origin) p.push_back("first leg does not start at origin");
        if (plan.legs.back().destination != spec.destination)
            p.push_back("last leg does not end at destination");
    }
    return p;
}

int battery_needed(ResourceKind kind, Tick approach, Tick leg_ticks) {
    return static_cast<int>((approach + leg_ticks) * drain_per_tick(kind));
}

std::optional<Tick> approach_ticks(const ResourceState& r, const std::string& node,
                                   const CityGraph& graph, std::span<const Disruption> active) {
    // A vehicle mid-edge finishes that edge first; the whole edge counts
    // because the battery is charged for it on arrival.
    Tick base = 0;
    std::string from = r.node();
    if (const auto* pos = std::get_if<EdgePosition>(&r.location)) {
        base = pos->arrive - pos->depart;
        from = pos->to;
    }
    if (from == node) return base;
    RouteOptions o;
    o.modes = ModeSet::of(edge_mode_for(r.kind));
    auto route = try_shortest_route(graph, from, node, active, o);
    if (!route) return std::nullopt;
    return base + route->total_time;
}

Verdict validate_plan(const Plan& plan, const RuleSet& rules, const ReasonerContext& ctx) {
    Verdict v;
    const CityGraph& graph = *ctx.graph;
    auto add = [&](const char* rule, const Leg& leg, std::string detail) {
        v.violations.push_back({rule, leg.leg_id, std::move(detail)});
    };

    if (rules.enabled("plan_structure"))
        for (auto& problem : leg_chain_problems(plan, graph))
            v.violations.push_back({"plan_structure", "", std::move(problem)});

    std::set<std::string> no_fly, closed;
    for (const auto& d : ctx.disruptions) {
        if (d.kind == DisruptionKind::no_fly_zone) no_fly.insert(d.targets.begin(), d.targets.end());
        if (d.kind == DisruptionKind::vertiport_closed) closed.insert(d.targets.begin(), d.targets.end());
    }

    for (const Leg& leg : plan.legs) {
        if (leg.state == LegState::completed) continue;
        if (leg.mode == LegMode::air_taxi) {
            for (const auto& n : leg.route.nodes) {
                if (rules.enabled("no_fly_zone") && no_fly.count(n)) add("no_fly_zone", leg, n);
                if (rules.enabled("vertiport_closed") && closed.count(n)) add("vertiport_closed", leg, n);
            }
            if (rules.enabled("vertiport_capacity")) {
                for (const auto& port : {leg.origin, leg.destination}) {
                    const Node* node = graph.find_node(port);
                    if (!node || !node->capacity) continue;
                    int load = 0;
                    for (const auto& r : ctx.reservations)
                        if (r.vertiport == port && r.plan_id != plan.plan_id &&
                            r.start < leg.planned_end && leg.planned_start < r.end)
                            ++load;
                    if (load >= *node->capacity)
                        add("vertiport_capacity", leg,
                            port + " holds " + std::to_string(load) + " of " +
                                std::to_string(*node->capacity));
                }
            }
        }
        if (rules.enabled("battery_insufficient") && leg.assigned_resource) {
            auto it = ctx.resources.find(*leg.assigned_resource);
            if (it == ctx.resources.end()) {
                add("battery_insufficient", leg, "unknown resource " + *leg.assigned_resource);
            } else {
                const ResourceState& r = it->second;
                const int reserve = rules.params("battery_insufficient").value("reserve_percent", 0);
                auto approach = approach_ticks(r, leg.origin, graph, ctx.disruptions);
                if (!approach) {
                    add("battery_insufficient", leg, r.id + " cannot reach " + leg.origin);
                } else {
                    const int need = battery_needed(r.kind, *approach, leg.route.total_time);
                    if (need + reserve > r.battery)
                        add("battery_insufficient", leg,
                            r.id + " needs " + std::to_string(need) + "% has " +
                                std::to_string(r.battery) + "%");
                }
            }
        }
    }

    if (rules.enabled("resource_overlap")) {
        for (std::size_t i = 0; i < plan.legs.size(); ++i)
            for (std::size_t k = i + 1; k < plan.legs.size(); ++k) {
                const Leg& a = plan.legs[i];
                const Leg& b = plan.legs[k];
                if (a.state == LegState::completed || b.state == LegState::completed) continue;
                if (a.assigned_resource && a.assigned_resource == b.assigned_resource &&
                    a.planned_start < b.planned_end && b.planned_start < a.planned_end)
                    add("resource_overlap", b, *a.assigned_resource + " also serves " + a.leg_id);
            }
    }
    return v;
}

// ---- revision ----

std::vector<Leg> completed_prefix(const Plan& plan, const TripProgress& progress,
                                  const ReasonerContext& ctx) {
    std::vector<Leg> prefix;
    const std::size_t cur = std::min(progress.current_leg, plan.legs.size());
    for (std::size_t i = 0; i < cur; ++i) {
        Leg l = plan.legs[i];
        l.state = LegState::completed;
        prefix.push_back(std::move(l));
    }
    if (cur < plan.legs.size() && progress.traversed_edges > 0) {
        const Leg& src = plan.legs[cur];
        Leg done = src;
        const std::size_t k = std::min(progress.traversed_edges, src.route.edges.size());
        done.route.edges.assign(src.route.edges.begin(), src.route.edges.begin() + static_cast<std::ptrdiff_t>(k));
        done.route.nodes.assign(src.route.nodes.begin(), src.route.nodes.begin() + static_cast<std::ptrdiff_t>(k + 1));
        Tick t = 0;
        for (const auto& id : done.route.edges) t += ctx.graph->edge(id).base_travel_time;
        done.route.total_time = t * (src.mode == LegMode::walk ? kWalkFactor : 1);
        done.destination = done.route.destination();
        done.planned_end = done.planned_start + std::max<Tick>(1, done.route.total_time);
        done.state = LegState::completed;
        prefix.push_back(std::move(done));
    }
    return prefix;
}

namespace {

std::string revised_id(const std::string& id, int revision) {
    auto pos = id.find("-r");
    return (pos == std::string::npos ? id : id.substr(0, pos)) + "-r" + std::to_string(revision);
}

bool acceptable(const Plan& plan, const TaskSpec& spec, const RuleSet& rules,
                const ReasonerContext& ctx) {
    return plan_structure_problems(plan, spec, *ctx.graph).empty() &&
           validate_plan(plan, rules, ctx).ok();
}

}  // namespace

Plan revise_plan(const Plan& plan, const TaskSpec& spec, const RevisionTrigger& trigger,
                 const TripProgress& progress, const RuleSet& rules, const ReasonerContext& ctx) {
    const CityGraph& graph = *ctx.graph;
    const int rev = plan.revision + 1;
    const std::vector<Leg> prefix = completed_prefix(plan, progress, ctx);
    const std::string& loc = progress.location;
    const std::size_t cur = std::min(progress.current_leg, plan.legs.size());
    if (cur >= plan.legs.size() || loc == spec.destination)
        throw Error(ErrorCode::NoFeasibleRevision, "nothing left to revise (" + trigger.detail + ")");

    const Leg& current = plan.legs[cur];
    // The vehicle already with the passenger, if any.
    std::optional<std::string> carrying;
    if (current.assigned_resource) {
        auto it = ctx.resources.find(*current.assigned_resource);
        if (it != ctx.resources.end() && it->second.at_node() && it->second.node() == loc)
            carrying = current.assigned_resource;
    }

    auto assemble = [&](std::vector<Leg> tail) {
        Plan out = plan;
        out.revision = rev;
        out.status = PlanStatus::draft;
        out.fallback = false;
        out.legs = prefix;
        const std::size_t first = out.legs.size();
        for (auto& l : tail) out.legs.push_back(std::move(l));
        retime_legs(out.legs, first, ctx.tick);
        return out;
    };

    // (1) reroute inadmissible legs in their own mode.
    {
        std::vector<Leg> tail;
        bool ok = true;
        for (std::size_t i = cur; i < plan.legs.size() && ok; ++i) {
            Leg l = plan.legs[i];
            l.state = LegState::pending;
            if (i == cur) l.origin = loc;
            const bool moved_origin = l.route.nodes.empty() || l.route.origin() != l.origin;
            if (l.origin == l.destination) continue;
            if (moved_origin || !route_admissible(graph, l.route, ctx.disruptions)) {
                auto r = try_shortest_route(graph, l.origin, l.destination, ctx.disruptions,
                                            options_for(l.mode, spec));
                if (!r) {
                    ok = false;
                    break;
                }
                l.route = *r;
                l.leg_id = revised_id(l.leg_id, rev);
                l.planned_start = ctx.tick;
            }
            tail.push_back(std::move(l));
        }
        if (ok && !tail.empty()) {
            Plan candidate = assemble(std::move(tail));
            if (acceptable(candidate, spec, rules, ctx)) return candidate;
        }
    }

    auto renumber = [&](std::vector<Leg>& legs) {
        std::size_t n = prefix.size();
        for (auto& l : legs) l.leg_id = "T_a" + std::to_string(++n) + "-r" + std::to_string(rev);
        if (!legs.empty() && carrying && legs.front().mode == current.mode)
            legs.front().assigned_resource = carrying;
    };

    // (2) alternate vertiport pair from the current location.
    if (!spec.has(ConstraintKind::ground_only)) {
        for (auto& c : enumerate_modal_plans(spec, ctx, loc, ctx.tick, {false, true})) {
            renumber(c.legs);
            for (auto& l : c.legs) l.planned_start = ctx.tick;
            Plan candidate = assemble(std::move(c.legs));
            if (acceptable(candidate, spec, rules, ctx)) return candidate;
        }
    }

    // (3) ground taxi substitution.
    if (auto r = try_shortest_route(graph, loc, spec.destination, ctx.disruptions,
                                    options_for(LegMode::ground_taxi, spec))) {
        std::vector<Leg> tail{make_leg("", LegMode::ground_taxi, *r)};
        renumber(tail);
        tail.front().planned_start = ctx.tick;
        Plan candidate = assemble(std::move(tail));
        if (acceptable(candidate, spec, rules, ctx)) return candidate;
    }

    throw Error(ErrorCode::NoFeasibleRevision,
                "no admissible continuation from " + loc + " (" + trigger.kind + ":" + trigger.detail + ")");
}

std::optional<Plan> ground_only_plan(const Plan& base, const TaskSpec& spec,
                                     const TripProgress& progress, const ReasonerContext& ctx) {
    std::vector<Leg> legs = completed_prefix(base, progress, ctx);
    const std::string& loc = progress.location;
    if (loc != spec.destination) {
        auto r = try_shortest_route(*ctx.graph, loc, spec.destination, ctx.disruptions,
                                    options_for(LegMode::scooter, spec));
        if (!r) return std::nullopt;
        Leg l = make_leg("T_f" + std::to_string(legs.size() + 1), LegMode::scooter, *r);
        l.planned_start = ctx.tick;
        legs.push_back(std::move(l));
    }
    Plan plan = base;
    plan.legs = std::move(legs);
    plan.status = PlanStatus::draft;
    plan.fallback = true;
    retime_legs(plan.legs, plan.first_open_leg(), ctx.tick);
    return plan;
}

}  // namespace holonsim
