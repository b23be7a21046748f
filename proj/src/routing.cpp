#include "holonsim/routing.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

#include "holonsim/error.hpp"

namespace holonsim {

std::optional<Tick> effective_travel_time(const Edge& edge, std::span<const Disruption> active) {
    if (edge.blocked) return std::nullopt;
    double factor = 1.0;
    for (const Disruption& d : active) {
        if (d.blocks(edge)) return std::nullopt;
        if (d.kind == DisruptionKind::weather_slowdown && d.covers(edge)) factor *= d.slowdown_factor;
    }
    const double raw = static_cast<double>(edge.base_travel_time) * factor;
    // Products like 10 * 1.1 land a hair above the exact value.
    return static_cast<Tick>(std::ceil(raw - 1e-9));
}

bool under_weather(const Edge& edge, std::span<const Disruption> active) {
    return std::any_of(active.begin(), active.end(), [&](const Disruption& d) {
        return d.kind == DisruptionKind::weather_slowdown && d.covers(edge);
    });
}

std::optional<Route> try_shortest_route(const CityGraph& graph, const std::string& from,
                                        const std::string& to, std::span<const Disruption> active,
                                        const RouteOptions& options) {
    if (!graph.find_node(from)) throw Error(ErrorCode::UnknownTarget, "no node '" + from + "'");
    if (!graph.find_node(to)) throw Error(ErrorCode::UnknownTarget, "no node '" + to + "'");
    if (from == to) return Route{{}, {from}, 0};

    struct Best {
        Tick dist = kNever;
        std::string via_edge;
        std::string prev;
    };
    std::map<std::string, Best> best;
    using Entry = std::tuple<Tick, std::string>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    best[from].dist = 0;
    open.emplace(0, from);

    while (!open.empty()) {
        auto [dist, node] = open.top();
        open.pop();
        if (dist != best[node].dist) continue;
        if (node == to) break;
        for (std::size_t idx : graph.incident(node)) {
            const Edge& e = graph.edges()[idx];
            if (!options.modes.allows(e.mode)) continue;
            if (options.avoid_turbulence && e.mode == EdgeMode::air && under_weather(e, active))
                continue;
            auto t = effective_travel_time(e, active);
            if (!t) continue;
            const Tick next = dist + *t * options.time_multiplier;
            const std::string& other = e.other(node);
            Best& b = best[other];
            if (next < b.dist) {
                b = {next, e.id, node};
                open.emplace(next, other);
            }
        }
    }

    auto it = best.find(to);
    if (it == best.end() || it->second.dist == kNever) return std::nullopt;

    Route route;
    route.total_time = it->second.dist;
    for (std::string at = to; at != from; at = best[at].prev) {
        route.nodes.push_back(at);
        route.edges.push_back(best[at].via_edge);
    }
    route.nodes.push_back(from);
    std::reverse(route.nodes.begin(), route.nodes.end());
    std::reverse(route.edges.begin(), route.edges.end());
    return route;
}

Route shortest_route(const CityGraph& graph, const std::string& from, const std::string& to,
                     std::span<const Disruption> active, const RouteOptions& options) {
    if (auto r = try_shortest_route(graph, from, to, active, options)) return *std::move(r);
    throw Error(ErrorCode::NoRoute, from + " -> " + to);
}

std::optional<Tick> route_time(const CityGraph& graph, const Route& route,
                               std::span<const Disruption> active, Tick multiplier) {
    Tick total = 0;
    for (const auto& id : route.edges) {
        const Edge* e = graph.find_edge(id);
        if (!e) return std::nullopt;
        auto t = effective_travel_time(*e, active);
        if (!t) return std::nullopt;
        total += *t * multiplier;
    }
    return total;
}

bool route_admissible(const CityGraph& graph, const Route& route, std::span<const Disruption> active) {
    return route_time(graph, route, active).has_value();
}

}  // namespace holonsim
