#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "holonsim/types.hpp"

namespace holonsim {

/// Path of name segments from the root, e.g. S-SoS/S-CS1/scooter-7.
class HolonId {
public:
    HolonId() = default;
    explicit HolonId(std::vector<std::string> segments);
    static HolonId parse(std::string_view path);

    const std::vector<std::string>& segments() const { return segments_; }
    const std::string& leaf() const { return segments_.back(); }
    bool empty() const { return segments_.empty(); }
    std::size_t depth() const { return segments_.size(); }
    std::string str() const;

    HolonId child(const std::string& segment) const;
    std::optional<HolonId> parent() const;
    /// True when this id equals other or is one of its ancestors.
    bool is_prefix_of(const HolonId& other) const;

    auto operator<=>(const HolonId&) const = default;

private:
    std::vector<std::string> segments_;
};

void to_json(nlohmann::json& j, const HolonId& id);
void from_json(const nlohmann::json& j, HolonId& id);

enum class Role { supervisor, planner, task, resource_human, resource_machine };
enum class Performative { request, inform, propose, accept, reject, status, command };

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::supervisor, "supervisor"},
                                    {Role::planner, "planner"},
                                    {Role::task, "task"},
                                    {Role::resource_human, "resource_human"},
                                    {Role::resource_machine, "resource_machine"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Performative, {{Performative::request, "request"},
                                            {Performative::inform, "inform"},
                                            {Performative::propose, "propose"},
                                            {Performative::accept, "accept"},
                                            {Performative::reject, "reject"},
                                            {Performative::status, "status"},
                                            {Performative::command, "command"}})

struct CapabilityDescriptor {
    std::string name;
    nlohmann::json input_schema = nlohmann::json::object();
    nlohmann::json output_schema = nlohmann::json::object();
    double cost_hint = 1.0;
};

struct Message {
    std::uint64_t id = 0;
    HolonId sender;
    HolonId recipient;
    Performative kind = Performative::inform;
    std::optional<std::uint64_t> correlation;
    nlohmann::json payload = nlohmann::json::object();
    Tick sent_at = 0;
};

nlohmann::json message_json(const Message& m);

struct Holon {
    HolonId id;
    Role role = Role::resource_machine;
    std::vector<CapabilityDescriptor> capabilities;
    std::set<HolonId> children;
    std::optional<HolonId> parent;
    std::string reasoner_binding = "mock";
    std::deque<Message> inbox;
    // Task ids this holon is currently responsible for.
    std::set<std::string> active_tasks;
};

struct DeliveryReceipt {
    std::uint64_t message_id = 0;
    std::uint64_t seq = 0;
};

struct DetachReport {
    std::vector<HolonId> removed;
    std::vector<std::string> orphaned_tasks;
};

/// Glob match with '*' (any run) and '?' (one character).
bool glob_match(std::string_view pattern, std::string_view text);

/// Capability name patterns each role may advertise.
const std::vector<std::string>& capability_patterns(Role role);

/// Registry of the holarchy. A strict tree with a single root; mutated only
/// between event-processing steps. Inboxes are FIFO, and the registry keeps a
/// global delivery order so consumers drain messages in send order.
class Holarchy {
public:
    /// Called for every accepted message; returns the sequence number to put
    /// on the receipt (the merged log's seq when a log is attached).
    using SendHook = std::function<std::uint64_t(const Message&)>;

    void set_send_hook(SendHook hook) { hook_ = std::move(hook); }

    HolonId register_holon(Holon holon, const std::optional<HolonId>& parent);
    DeliveryReceipt send(Message msg);

    std::vector<std::pair<HolonId, CapabilityDescriptor>> query_capabilities(
        std::string_view pattern, const HolonId& scope) const;

    DetachReport detach(const HolonId& id);

    bool contains(const HolonId& id) const { return holons_.count(id) > 0; }
    const Holon& get(const HolonId& id) const;
    Holon& get(const HolonId& id);
    const std::optional<HolonId>& root() const { return root_; }
    std::size_t size() const { return holons_.size(); }
    std::size_t link_count() const;
    std::vector<HolonId> ids() const;
    std::vector<HolonId> subtree(const HolonId& id) const;
    bool message_known(std::uint64_t id) const { return sent_.count(id) > 0; }
    std::optional<std::uint64_t> correlation_of(std::uint64_t id) const;

    /// Pops the earliest pending delivery across all inboxes.
    std::optional<Message> next_delivery();
    /// Removes a specific message from its recipient's inbox (consumed by the
    /// communication layer). Returns false when it is not there.
    bool take(const HolonId& recipient, std::uint64_t message_id);
    std::size_t pending() const;

    void assign_task(const HolonId& id, const std::string& task);
    void release_task(const HolonId& id, const std::string& task);

    std::uint64_t delivered_count() const { return delivered_; }
    std::uint64_t rejected_count() const { return rejected_; }

private:
    std::map<HolonId, Holon> holons_;
    std::optional<HolonId> root_;
    std::deque<std::pair<HolonId, std::uint64_t>> order_;
    std::map<std::uint64_t, std::optional<std::uint64_t>> sent_;
    std::uint64_t next_id_ = 1;
    std::uint64_t fallback_seq_ = 0;
    std::uint64_t delivered_ = 0;
    std::uint64_t rejected_ = 0;
    SendHook hook_;
};

}  // namespace holonsim
