#include "holonsim/disruption.hpp"

#include <algorithm>

#include "holonsim/error.hpp"

namespace holonsim {

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

bool Disruption::covers(const Edge& edge) const {
    switch (kind) {
        case DisruptionKind::edge_blocked:
            return contains(targets, edge.id);
        case DisruptionKind::vertiport_closed:
        case DisruptionKind::no_fly_zone:
            return edge.mode == EdgeMode::air &&
                   (contains(targets, edge.a) || contains(targets, edge.b));
        case DisruptionKind::weather_slowdown:
            return contains(targets, edge.id) || contains(targets, edge.a) ||
                   contains(targets, edge.b);
    }
    return false;
}

bool Disruption::touches_node(const std::string& node) const { return contains(targets, node); }

void to_json(nlohmann::json& j, const Disruption& d) {
    j = {{"id", d.id}, {"kind", d.kind}, {"targets", d.targets}, {"activation", d.activation}};
    j["expiry"] = d.expiry ? nlohmann::json(*d.expiry) : nlohmann::json(nullptr);
    if (d.kind == DisruptionKind::weather_slowdown) j["slowdown_factor"] = d.slowdown_factor;
}

void from_json(const nlohmann::json& j, Disruption& d) {
    d.id = j.at("id").get<std::string>();
    d.kind = j.at("kind").get<DisruptionKind>();
    const auto& t = j.contains("target") ? j.at("target") : j.at("targets");
    if (t.is_string())
        d.targets = {t.get<std::string>()};
    else
        d.targets = t.get<std::vector<std::string>>();
    d.activation = j.value("activation", Tick{0});
    if (j.contains("expiry") && !j.at("expiry").is_null()) d.expiry = j.at("expiry").get<Tick>();
    d.slowdown_factor = j.value("slowdown_factor", 1.0);
}

void check_disruption_targets(const Disruption& d, const CityGraph& graph) {
    if (d.id.empty()) throw Error(ErrorCode::SchemaError, "disruption id must be non-empty");
    if (d.targets.empty()) throw Error(ErrorCode::UnknownTarget, d.id + ": empty target set");
    if (d.expiry && *d.expiry <= d.activation)
        throw Error(ErrorCode::SchemaError, d.id + ": expiry must come after activation");
    switch (d.kind) {
        case DisruptionKind::edge_blocked:
            if (d.targets.size() != 1 || !graph.find_edge(d.targets.front()))
                throw Error(ErrorCode::UnknownTarget, d.id + ": no edge '" + d.targets.front() + "'");
            break;
        case DisruptionKind::vertiport_closed:
            if (d.targets.size() != 1 || !graph.is_vertiport(d.targets.front()))
                throw Error(ErrorCode::UnknownTarget,
                            d.id + ": no vertiport '" + d.targets.front() + "'");
            break;
        case DisruptionKind::no_fly_zone:
            for (const auto& t : d.targets)
                if (!graph.is_vertiport(t))
                    throw Error(ErrorCode::UnknownTarget, d.id + ": no vertiport '" + t + "'");
            break;
        case DisruptionKind::weather_slowdown:
            if (d.slowdown_factor < 1.0)
                throw Error(ErrorCode::SchemaError, d.id + ": slowdown factor below 1");
            for (const auto& t : d.targets)
                if (!graph.find_edge(t) && !graph.find_node(t))
                    throw Error(ErrorCode::UnknownTarget, d.id + ": no element '" + t + "'");
            break;
    }
}

}  // namespace holonsim
