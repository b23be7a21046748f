#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/types.hpp"

namespace holonsim {

struct Node {
    std::string id;
    NodeKind kind = NodeKind::street;
    int x = 0;
    int y = 0;
    // Vertiports only. Absent means no capacity limit.
    std::optional<int> capacity;
    bool charging = false;
};

/// Undirected edge; travel is allowed in both directions.
struct Edge {
    std::string id;
    std::string a;
    std::string b;
    EdgeMode mode = EdgeMode::ground;
    Tick base_travel_time = 1;
    bool blocked = false;

    bool touches(const std::string& node) const { return a == node || b == node; }
    const std::string& other(const std::string& node) const { return node == a ? b : a; }
};

/// Typed multigraph of streets, vertiports and points of interest.
///
/// Construction enforces the structural invariants: air edges join
/// vertiports only, every edge takes at least one tick, and there is at most
/// one edge per (endpoint pair, mode). Node and edge ids share one namespace
/// so a disruption target resolves unambiguously.
class CityGraph {
public:
    void add_node(Node node);
    void add_edge(Edge edge);

    const Node* find_node(const std::string& id) const;
    const Edge* find_edge(const std::string& id) const;
    const Node& node(const std::string& id) const;
    const Edge& edge(const std::string& id) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Indices into edges(), in insertion order.
    const std::vector<std::size_t>& incident(const std::string& node) const;

    bool is_vertiport(const std::string& id) const;
    std::vector<std::string> vertiports() const;

    nlohmann::json to_json() const;

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::map<std::string, std::size_t> node_index_;
    std::map<std::string, std::size_t> edge_index_;
    std::map<std::string, std::vector<std::size_t>> incident_;
};

struct Route {
    std::vector<std::string> edges;
    // Waypoints, including both endpoints. Single element for the empty route.
    std::vector<std::string> nodes;
    Tick total_time = 0;

    bool empty() const { return edges.empty(); }
    const std::string& origin() const { return nodes.front(); }
    const std::string& destination() const { return nodes.back(); }
    bool operator==(const Route&) const = default;
};

void to_json(nlohmann::json& j, const Route& r);
void from_json(const nlohmann::json& j, Route& r);

}  // namespace holonsim
