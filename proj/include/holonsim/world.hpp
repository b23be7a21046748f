#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/city_graph.hpp"
#include "holonsim/disruption.hpp"
#include "holonsim/types.hpp"

namespace holonsim {

struct EdgePosition {
    std::string edge;
    std::string from;
    std::string to;
    Tick depart = 0;
    Tick arrive = 0;

    double fraction(Tick now) const;
};

struct ResourceState {
    std::string id;
    ResourceKind kind = ResourceKind::scooter;
    std::variant<std::string, EdgePosition> location;
    int battery = 100;
    ResourceStatus status = ResourceStatus::idle;
    std::optional<std::string> assigned_task;

    bool at_node() const { return std::holds_alternative<std::string>(location); }
    /// Node id when parked; the departure node when on an edge.
    const std::string& node() const;
};

nlohmann::json resource_json(const ResourceState& r, Tick now);

/// Physical event emitted by the kernel.
struct Event {
    Tick tick = 0;
    std::uint64_t seq = 0;
    std::string kind;
    nlohmann::json payload;
};

struct DisruptionAccepted {
    std::string id;
    Tick activation = 0;
};

/// The single source of physical truth: graph, fleet, disruptions, clock.
///
/// Scheduled events are processed in (tick, sequence) order. Sequence
/// numbers are assigned monotonically at scheduling time so ties at one tick
/// keep their scheduling order.
class World {
public:
    World(std::shared_ptr<const CityGraph> graph, std::uint64_t rng_seed);

    Tick clock() const { return clock_; }
    std::uint64_t rng_seed() const { return rng_seed_; }
    const CityGraph& graph() const { return *graph_; }
    const std::shared_ptr<const CityGraph>& graph_ptr() const { return graph_; }

    void add_resource(ResourceState r);
    ResourceState& resource(const std::string& id);
    const ResourceState& resource(const std::string& id) const;
    const ResourceState* find_resource(const std::string& id) const;
    const std::map<std::string, ResourceState>& resources() const { return resources_; }

    const std::vector<Disruption>& active_disruptions() const { return active_; }
    bool disruption_id_used(const std::string& id) const { return used_ids_.count(id) > 0; }

    /// Validates without side effects; throws DuplicateDisruption / UnknownTarget.
    void check_disruption(const Disruption& d) const;
    /// Activation in the past is clamped to the current clock.
    DisruptionAccepted inject_disruption(Disruption d);

    std::optional<Tick> effective_travel_time(const Edge& edge) const;

    /// Starts moving a parked resource along one edge. Returns the arrival
    /// tick, or nullopt when the edge is inadmissible or does not start here.
    std::optional<Tick> begin_traversal(const std::string& resource_id, const std::string& edge_id);
    void schedule_timer(Tick at, nlohmann::json tag);

    /// Processes all events with tick <= until, then sets clock = until.
    std::vector<Event> advance(Tick until);

    bool has_pending_movement() const { return moving_ > 0; }
    std::size_t scheduled_count() const { return queue_.size(); }

    /// Invariant check; returns human-readable problems (empty when sound).
    std::vector<std::string> check_invariants() const;

    nlohmann::json snapshot() const;

private:
    enum class Pending { activate, expire, arrive, timer };
    struct Scheduled {
        Tick tick;
        std::uint64_t seq;
        Pending what;
        std::string subject;
        nlohmann::json data;
        bool operator>(const Scheduled& o) const {
            return tick != o.tick ? tick > o.tick : seq > o.seq;
        }
    };

    void schedule(Tick at, Pending what, std::string subject, nlohmann::json data = {});
    void process_due(std::vector<Event>& out);
    void charge_one_tick(std::vector<Event>& out);
    Event emit(std::string kind, nlohmann::json payload);

    std::shared_ptr<const CityGraph> graph_;
    std::uint64_t rng_seed_;
    Tick clock_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_event_seq_ = 0;
    std::map<std::string, ResourceState> resources_;
    std::vector<Disruption> active_;
    std::map<std::string, Disruption> pending_;
    std::set<std::string> used_ids_;
    std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> queue_;
    std::size_t moving_ = 0;
};

}  // namespace holonsim
