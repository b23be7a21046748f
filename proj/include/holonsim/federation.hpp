#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/holarchy.hpp"

namespace holonsim {

enum class StrategyKind { facilitator, broker, matchmaker, mediator, holonic };
NLOHMANN_JSON_SERIALIZE_ENUM(StrategyKind, {{StrategyKind::facilitator, "facilitator"},
                                            {StrategyKind::broker, "broker"},
                                            {StrategyKind::matchmaker, "matchmaker"},
                                            {StrategyKind::mediator, "mediator"},
                                            {StrategyKind::holonic, "holonic"}})

/// Throws ConfigError on an unknown name.
StrategyKind parse_strategy(std::string_view name);
const std::vector<StrategyKind>& all_strategies();

struct Hop {
    HolonId from;
    HolonId to;
    Performative kind = Performative::request;
    std::string topic;
};

struct Transcript {
    std::string conversation_id;
    HolonId requester;
    std::optional<HolonId> provider;
    std::vector<Hop> hops;
};

struct ConversationOutcome {
    std::optional<HolonId> provider;
    Transcript transcript;
    bool failed = false;
    // Hops on the critical path until the requester knows its provider.
    int discovery_latency = 0;
};

struct CoordinationMetrics {
    StrategyKind strategy = StrategyKind::holonic;
    std::size_t conversations = 0;
    std::size_t total_messages = 0;
    std::size_t middle_hops = 0;
    std::map<std::string, std::size_t> per_agent;  // sender and recipient each count once
    std::size_t max_single_agent_load = 0;
    std::string max_load_agent;
    double mean_discovery_latency = 0;
    std::size_t failed_conversations = 0;

    nlohmann::json to_json() const;
};

/// Picks the provider among discovered candidates, or nullopt.
using ProviderSelector =
    std::function<std::optional<HolonId>(const std::vector<std::pair<HolonId, CapabilityDescriptor>>&)>;

/// A middle-agent coordination pattern installed on a holarchy. All hops are
/// real messages sent through the holarchy and consumed on the spot, so they
/// land in the merged log.
class Federation {
public:
    Federation(Holarchy& holarchy, StrategyKind kind);

    /// Registers the middle agent under the root (no-op for holonic).
    void install();

    StrategyKind kind() const { return kind_; }
    std::vector<HolonId> middle_agents() const;

    /// Throws NoProvider when discovery finds nothing acceptable.
    ConversationOutcome route_conversation(const HolonId& requester, const std::string& pattern,
                                           const ProviderSelector& select, Tick now,
                                           const nlohmann::json& context = nlohmann::json::object());

    /// Fault injection: the middle agents stop relaying once they have
    /// handled n hops in total.
    void kill_middle_after_hop(std::size_t n) { kill_after_ = n; }

    const CoordinationMetrics& metrics() const { return metrics_; }
    const std::vector<Transcript>& transcripts() const { return transcripts_; }

private:
    bool is_middle(const HolonId& id) const;
    // Returns false when the hop cannot happen because a middle agent is dead.
    bool hop(Transcript& t, const HolonId& from, const HolonId& to, Performative kind, const std::string& topic,
             nlohmann::json payload, Tick now, std::optional<std::uint64_t>& last);
    void record(const Transcript& t, bool failed, int latency);

    Holarchy& holarchy_;
    StrategyKind kind_;
    HolonId agent_;
    std::size_t next_conversation_ = 1;
    std::size_t middle_handled_ = 0;
    std::optional<std::size_t> kill_after_;
    std::size_t latency_sum_ = 0;
    std::size_t latency_count_ = 0;
    CoordinationMetrics metrics_;
    std::vector<Transcript> transcripts_;
};

/// Topology predicate for a transcript under the given pattern. middle is
/// the installed middle-agent set (the supervisors for holonic).
bool conforms(StrategyKind kind, const Transcript& t, const std::vector<HolonId>& middle);

/// Path between two holons along tree edges, both endpoints included.
std::vector<HolonId> tree_path(const HolonId& from, const HolonId& to);

}  // namespace holonsim
