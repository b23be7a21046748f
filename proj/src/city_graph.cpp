#include "holonsim/city_graph.hpp"

#include <algorithm>

#include "holonsim/error.hpp"

namespace holonsim {

namespace {

const std::vector<std::size_t> kNoEdges;

}  // namespace

void CityGraph::add_node(Node node) {
    if (node.id.empty()) throw Error(ErrorCode::SchemaError, "node id must be non-empty");
    if (node_index_.count(node.id) || edge_index_.count(node.id))
        throw Error(ErrorCode::SchemaError, "duplicate id '" + node.id + "'");
    if (node.capacity && *node.capacity < 0)
        throw Error(ErrorCode::SchemaError, "negative capacity on '" + node.id + "'");
    node_index_.emplace(node.id, nodes_.size());
    nodes_.push_back(std::move(node));
}

void CityGraph::add_edge(Edge edge) {
    if (edge.id.empty()) throw Error(ErrorCode::SchemaError, "edge id must be non-empty");
    if (node_index_.count(edge.id) || edge_index_.count(edge.id))
        throw Error(ErrorCode::SchemaError, "duplicate id '" + edge.id + "'");
    if (!node_index_.count(edge.a) || !node_index_.count(edge.b))
        throw Error(ErrorCode::SchemaError, "edge '" + edge.id + "' references unknown node");
    if (edge.a == edge.b) throw Error(ErrorCode::SchemaError, "edge '" + edge.id + "' is a loop");
    if (edge.base_travel_time < 1)
        throw Error(ErrorCode::SchemaError, "edge '" + edge.id + "' travel time below one tick");
    if (edge.mode == EdgeMode::air && (!is_vertiport(edge.a) || !is_vertiport(edge.b)))
        throw Error(ErrorCode::SchemaError,
                    "air edge '" + edge.id + "' must join two vertiports");
    for (std::size_t idx : incident(edge.a)) {
        const Edge& e = edges_[idx];
        if (e.mode == edge.mode && e.touches(edge.b))
            throw Error(ErrorCode::SchemaError, "edge '" + edge.id + "' parallels '" + e.id +
                                                    "' with the same mode");
    }
    const std::size_t idx = edges_.size();
    edge_index_.emplace(edge.id, idx);
    incident_[edge.a].push_back(idx);
    incident_[edge.b].push_back(idx);
    edges_.push_back(std::move(edge));
}

const Node* CityGraph::find_node(const std::string& id) const {
    auto it = node_index_.find(id);
    return it == node_index_.end() ? nullptr : &nodes_[it->second];
}

const Edge* CityGraph::find_edge(const std::string& id) const {
    auto it = edge_index_.find(id);
    return it == edge_index_.end() ? nullptr : &edges_[it->second];
}

const Node& CityGraph::node(const std::string& id) const {
    if (const Node* n = find_node(id)) return *n;
    throw Error(ErrorCode::UnknownTarget, "no node '" + id + "'");
}

const Edge& CityGraph::edge(const std::string& id) const {
    if (const Edge* e = find_edge(id)) return *e;
    throw Error(ErrorCode::UnknownTarget, "no edge '" + id + "'");
}

const std::vector<std::size_t>& CityGraph::incident(const std::string& node) const {
    auto it = incident_.find(node);
    return it == incident_.end() ? kNoEdges : it->second;
}

bool CityGraph::is_vertiport(const std::string& id) const {
    const Node* n = find_node(id);
    return n && n->kind == NodeKind::vertiport;
}

std::vector<std::string> CityGraph::vertiports() const {
    std::vector<std::string> out;
    for (const Node& n : nodes_)
        if (n.kind == NodeKind::vertiport) out.push_back(n.id);
    std::sort(out.begin(), out.end());
    return out;
}

nlohmann::json CityGraph::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& n : nodes_) {
        nlohmann::json j{{"id", n.id}, {"kind", n.kind}, {"x", n.x}, {"y", n.y}};
        if (n.capacity) j["capacity"] = *n.capacity;
        if (n.charging) j["charging"] = true;
        nodes.push_back(std::move(j));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : edges_) {
        nlohmann::json j{{"id", e.id}, {"from", e.a}, {"to", e.b}, {"mode", e.mode},
                         {"time", e.base_travel_time}};
        if (e.blocked) j["blocked"] = true;
        edges.push_back(std::move(j));
    }
    return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

void to_json(nlohmann::json& j, const Route& r) {
    j = {{"edges", r.edges}, {"nodes", r.nodes}, {"total_time", r.total_time}};
}

void from_json(const nlohmann::json& j, Route& r) {
    r.edges = j.at("edges").get<std::vector<std::string>>();
    r.nodes = j.at("nodes").get<std::vector<std::string>>();
    r.total_time = j.at("total_time").get<Tick>();
}

}  // namespace holonsim
