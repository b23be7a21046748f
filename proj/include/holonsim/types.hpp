#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

namespace holonsim {

/// Simulation time. One tick is roughly ten simulated seconds.
using Tick = std::int64_t;

inline constexpr Tick kNever = std::numeric_limits<Tick>::max();

enum class NodeKind { street, vertiport, poi };
enum class EdgeMode { ground, air };
enum class ResourceKind { scooter, air_taxi, ground_taxi };
enum class ResourceStatus { idle, reserved, in_service, charging, out_of_service };
enum class DisruptionKind { edge_blocked, vertiport_closed, no_fly_zone, weather_slowdown };
enum class LegMode { scooter, air_taxi, ground_taxi, walk };

NLOHMANN_JSON_SERIALIZE_ENUM(NodeKind, {{NodeKind::street, "street"},
                                        {NodeKind::vertiport, "vertiport"},
                                        {NodeKind::poi, "poi"}})
NLOHMANN_JSON_SERIALIZE_ENUM(EdgeMode, {{EdgeMode::ground, "ground"}, {EdgeMode::air, "air"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ResourceKind, {{ResourceKind::scooter, "scooter"},
                                            {ResourceKind::air_taxi, "air_taxi"},
                                            {ResourceKind::ground_taxi, "ground_taxi"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ResourceStatus, {{ResourceStatus::idle, "idle"},
                                              {ResourceStatus::reserved, "reserved"},
                                              {ResourceStatus::in_service, "in_service"},
                                              {ResourceStatus::charging, "charging"},
                                              {ResourceStatus::out_of_service, "out_of_service"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DisruptionKind,
                             {{DisruptionKind::edge_blocked, "edge_blocked"},
                              {DisruptionKind::vertiport_closed, "vertiport_closed"},
                              {DisruptionKind::no_fly_zone, "no_fly_zone"},
                              {DisruptionKind::weather_slowdown, "weather_slowdown"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LegMode, {{LegMode::scooter, "scooter"},
                                       {LegMode::air_taxi, "air_taxi"},
                                       {LegMode::ground_taxi, "ground_taxi"},
                                       {LegMode::walk, "walk"}})

template <typename E>
std::string enum_name(E value) {
    return nlohmann::json(value).template get<std::string>();
}

/// Battery model: linear drain while moving, linear charge at charging nodes.
constexpr int drain_per_tick(ResourceKind kind) noexcept {
    switch (kind) {
        case ResourceKind::scooter: return 1;
        case ResourceKind::air_taxi: return 2;
        case ResourceKind::ground_taxi: return 1;
    }
    return 1;
}

inline constexpr int kChargePerTick = 5;

/// Walking covers ground edges at half the speed of a scooter.
inline constexpr Tick kWalkFactor = 2;

constexpr EdgeMode edge_mode_for(LegMode mode) noexcept {
    return mode == LegMode::air_taxi ? EdgeMode::air : EdgeMode::ground;
}

constexpr EdgeMode edge_mode_for(ResourceKind kind) noexcept {
    return kind == ResourceKind::air_taxi ? EdgeMode::air : EdgeMode::ground;
}

}  // namespace holonsim
