#pragma once

#include <optional>
#include <span>
#include <string>

#include "holonsim/city_graph.hpp"
#include "holonsim/disruption.hpp"

namespace holonsim {

struct ModeSet {
    bool ground = false;
    bool air = false;

    static constexpr ModeSet ground_only() { return {true, false}; }
    static constexpr ModeSet air_only() { return {false, true}; }
    static constexpr ModeSet all() { return {true, true}; }
    static constexpr ModeSet of(EdgeMode m) { return m == EdgeMode::air ? air_only() : ground_only(); }
    bool allows(EdgeMode m) const { return m == EdgeMode::air ? air : ground; }
};

struct RouteOptions {
    ModeSet modes = ModeSet::all();
    // Skip air edges currently under a weather slowdown.
    bool avoid_turbulence = false;
    // Applied after rounding; walking uses kWalkFactor.
    Tick time_multiplier = 1;
};

/// base_travel_time times the product of covering weather factors, rounded up.
/// nullopt when the edge is statically blocked or any active disruption blocks it.
std::optional<Tick> effective_travel_time(const Edge& edge, std::span<const Disruption> active);

bool under_weather(const Edge& edge, std::span<const Disruption> active);

/// Minimum-time route over admissible edges. Deterministic: ties resolve by
/// edge insertion order. Throws NoRoute.
Route shortest_route(const CityGraph& graph, const std::string& from, const std::string& to,
                     std::span<const Disruption> active, const RouteOptions& options = {});

std::optional<Route> try_shortest_route(const CityGraph& graph, const std::string& from,
                                        const std::string& to, std::span<const Disruption> active,
                                        const RouteOptions& options = {});

/// True when every edge of the route is admissible now.
bool route_admissible(const CityGraph& graph, const Route& route, std::span<const Disruption> active);

/// Travel time of an existing route under current conditions; nullopt when inadmissible.
std::optional<Tick> route_time(const CityGraph& graph, const Route& route,
                               std::span<const Disruption> active, Tick multiplier = 1);

}  // namespace holonsim
