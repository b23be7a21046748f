#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/city_graph.hpp"
#include "holonsim/disruption.hpp"
#include "holonsim/reasoning.hpp"
#include "holonsim/world.hpp"

namespace holonsim {

inline constexpr Tick kDefaultApprovalTimeout = 30;
inline constexpr Tick kDefaultMaxTicks = 500;

struct TripRequest {
    Tick at_tick = 0;
    std::string text;
};

struct PassengerSpec {
    std::string id;
    std::string location;
    std::vector<TripRequest> requests;
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 0;
    std::shared_ptr<const CityGraph> graph;
    std::vector<ResourceState> resources;
    std::vector<PassengerSpec> passengers;
    std::vector<Disruption> scripted_disruptions;
    Tick max_ticks = kDefaultMaxTicks;
    Tick approval_timeout = kDefaultApprovalTimeout;
    RuleSet rules = RuleSet::defaults();
    // The document as loaded, for the run directory copy.
    nlohmann::json source;
};

/// Throws SchemaError whose detail starts with the offending field path.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& file);

enum class CommandKind { approve, override_plan, reject, inject_disruption, passenger_message, pause, resume, step };
NLOHMANN_JSON_SERIALIZE_ENUM(CommandKind, {{CommandKind::approve, "approve"},
                                           {CommandKind::override_plan, "override"},
                                           {CommandKind::reject, "reject"},
                                           {CommandKind::inject_disruption, "inject_disruption"},
                                           {CommandKind::passenger_message, "passenger_message"},
                                           {CommandKind::pause, "pause"},
                                           {CommandKind::resume, "resume"},
                                           {CommandKind::step, "step"}})

struct OperatorCommand {
    std::string id;
    CommandKind kind = CommandKind::approve;
    nlohmann::json payload = nlohmann::json::object();
    std::string received_at;  // wall clock, informational only
};

/// Accepts {"kind": ..., "payload": {...}} or the payload fields inline.
/// Throws InvalidCommand on a malformed document.
OperatorCommand parse_command(const nlohmann::json& doc);
nlohmann::json command_json(const OperatorCommand& c);

struct ScriptedAction {
    Tick at_tick = 0;
    OperatorCommand command;
};

/// Stable-sorted by at_tick. Throws SchemaError with the entry path.
std::vector<ScriptedAction> parse_script(const nlohmann::json& doc);
std::vector<ScriptedAction> load_script(const std::filesystem::path& file);

/// Small randomized world: a connected street grid with two or three
/// vertiports joined by air edges, a few scooters, an air taxi per
/// vertiport and one passenger request. Pure function of the seed.
nlohmann::json random_scenario(std::uint64_t seed);

}  // namespace holonsim
