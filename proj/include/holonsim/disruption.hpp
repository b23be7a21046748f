#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/city_graph.hpp"
#include "holonsim/types.hpp"

namespace holonsim {

/// Targets are interpreted per kind:
///   edge_blocked      one edge id
///   vertiport_closed  one vertiport node id
///   no_fly_zone       one or more vertiport node ids
///   weather_slowdown  edge ids and/or node ids (a node covers its incident edges)
struct Disruption {
    std::string id;
    DisruptionKind kind = DisruptionKind::edge_blocked;
    std::vector<std::string> targets;
    Tick activation = 0;
    std::optional<Tick> expiry;
    double slowdown_factor = 1.0;

    bool covers(const Edge& edge) const;
    bool blocks(const Edge& edge) const { return kind != DisruptionKind::weather_slowdown && covers(edge); }
    bool touches_node(const std::string& node) const;
};

void to_json(nlohmann::json& j, const Disruption& d);
void from_json(const nlohmann::json& j, Disruption& d);

/// Throws UnknownTarget / SchemaError when the disruption cannot apply to the graph.
void check_disruption_targets(const Disruption& d, const CityGraph& graph);

}  // namespace holonsim
