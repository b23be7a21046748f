#pragma once

// Independent brute-force oracles shared by the unit tests and the
// acceptance binary. Nothing here calls the library's search code.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "holonsim/city_graph.hpp"
#include "holonsim/disruption.hpp"
#include "holonsim/holons.hpp"
#include "holonsim/reasoning.hpp"
#include "holonsim/routing.hpp"

namespace oracle {

using namespace holonsim;

struct GraphCase {
    std::shared_ptr<CityGraph> graph;
    std::vector<Disruption> active;
    std::vector<std::string> ports;
};

/// Random typed graph with at most max_nodes nodes (>= 3), two or three
/// vertiports, random ground and air edges, a few static blocks and an
/// occasional weather slowdown. Not necessarily connected.
GraphCase random_graph(std::uint64_t seed, int max_nodes = 8);

/// Minimum total time over every simple path, by exhaustive DFS.
std::optional<Tick> best_path_time(const CityGraph& g, const std::string& from, const std::string& to,
                                   const std::vector<Disruption>& active, const RouteOptions& opt);

/// Recomputes a route's time edge by edge; nullopt when it is not a
/// contiguous admissible walk from `from` to `to`.
std::optional<Tick> replay_route(const CityGraph& g, const Route& r, const std::string& from, const std::string& to,
                                 const std::vector<Disruption>& active, const RouteOptions& opt);

/// (mode, origin, destination) per leg; identifies a modal combination.
std::string signature(const std::vector<Leg>& legs);

struct PlanChoice {
    std::string signature;
    Tick total = 0;
};

/// Every combination (ground only, or ground? air ground? for each ordered
/// vertiport pair) with brute-force leg times; returns the first minimum in
/// enumeration order (ground first, then pairs by vertiport id).
std::optional<PlanChoice> best_plan(const TaskSpec& spec, const CityGraph& g, const std::vector<Disruption>& active);

/// Brute-force argmax of -approach with ties by higher battery then smaller
/// id, over battery-feasible reachable serviceable candidates.
std::optional<std::string> best_resource(const Leg& leg, const std::vector<ResourceState>& candidates,
                                         const CityGraph& g, const std::vector<Disruption>& active);

struct MatchCase {
    GraphCase graph;
    Leg leg;
    std::vector<ResourceState> candidates;
};

/// Random leg plus up to max_candidates scooters/taxis scattered over a
/// random graph, with random batteries and some out of service.
std::optional<MatchCase> random_match_case(std::uint64_t seed, int max_candidates = 20);

}  // namespace oracle
