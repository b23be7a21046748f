#include "holonsim/holarchy.hpp"

#include <algorithm>

#include "holonsim/error.hpp"

namespace holonsim {

HolonId::HolonId(std::vector<std::string> segments) : segments_(std::move(segments)) {
    for (const auto& s : segments_)
        if (s.empty() || s.find('/') != std::string::npos)
            throw Error(ErrorCode::SchemaError, "bad holon id segment '" + s + "'");
}

HolonId HolonId::parse(std::string_view path) {
    std::vector<std::string> segs;
    std::size_t start = 0;
    while (start <= path.size()) {
        std::size_t end = path.find('/', start);
        if (end == std::string_view::npos) end = path.size();
        segs.emplace_back(path.substr(start, end - start));
        start = end + 1;
    }
    return HolonId(std::move(segs));
}

std::string HolonId::str() const {
    std::string out;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (i) out += '/';
        out += segments_[i];
    }
    return out;
}

HolonId HolonId::child(const std::string& segment) const {
    auto segs = segments_;
    segs.push_back(segment);
    return HolonId(std::move(segs));
}

std::optional<HolonId> HolonId::parent() const {
    if (segments_.size() <= 1) return std::nullopt;
    return HolonId(std::vector<std::string>(segments_.begin(), segments_.end() - 1));
}

bool HolonId::is_prefix_of(const HolonId& other) const {
    if (segments_.size() > other.segments_.size()) return false;
    return std::equal(segments_.begin(), segments_.end(), other.segments_.begin());
}

void to_json(nlohmann::json& j, const HolonId& id) { j = id.str(); }
void from_json(const nlohmann::json& j, HolonId& id) { id = HolonId::parse(j.get<std::string>()); }

nlohmann::json message_json(const Message& m) {
    return {{"id", m.id},
            {"sender", m.sender},
            {"recipient", m.recipient},
            {"kind", m.kind},
            {"correlation", m.correlation ? nlohmann::json(*m.correlation) : nlohmann::json(nullptr)},
            {"payload", m.payload},
            {"sent_at", m.sent_at}};
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

const std::vector<std::string>& capability_patterns(Role role) {
    static const std::vector<std::string> supervisor{"supervise.*", "coordinate.*"};
    static const std::vector<std::string> planner{"plan.*"};
    static const std::vector<std::string> task{"execute.*"};
    static const std::vector<std::string> human{"interact.*"};
    static const std::vector<std::string> machine{"ride.*", "fly.*", "vertiport.*", "charge.*"};
    switch (role) {
        case Role::supervisor: return supervisor;
        case Role::planner: return planner;
        case Role::task: return task;
        case Role::resource_human: return human;
        case Role::resource_machine: return machine;
    }
    return machine;
}

HolonId Holarchy::register_holon(Holon holon, const std::optional<HolonId>& parent) {
    if (holon.id.empty()) throw Error(ErrorCode::SchemaError, "holon id must be non-empty");
    if (holons_.count(holon.id)) throw Error(ErrorCode::DuplicateId, holon.id.str());
    if (parent) {
        if (!holons_.count(*parent)) throw Error(ErrorCode::MissingParent, parent->str());
        if (holon.id.parent() != parent)
            throw Error(ErrorCode::SchemaError,
                        holon.id.str() + " is not a direct child path of " + parent->str());
    } else {
        if (root_) throw Error(ErrorCode::SecondRoot, holon.id.str());
        if (holon.id.depth() != 1)
            throw Error(ErrorCode::MissingParent, holon.id.str() + " has no registered parent");
    }
    std::set<std::string> names;
    for (const auto& cap : holon.capabilities) {
        if (!names.insert(cap.name).second)
            throw Error(ErrorCode::InvalidCapability, "duplicate capability " + cap.name);
        const auto& allowed = capability_patterns(holon.role);
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&](const std::string& pat) { return glob_match(pat, cap.name); }))
            throw Error(ErrorCode::InvalidCapability,
                        cap.name + " is not executable by a " + enum_name(holon.role) + " holon");
    }
    holon.parent = parent;
    holon.children.clear();
    HolonId id = holon.id;
    holons_.emplace(id, std::move(holon));
    if (parent)
        holons_.at(*parent).children.insert(id);
    else
        root_ = id;
    return id;
}

DeliveryReceipt Holarchy::send(Message msg) {
    auto reject = [&](ErrorCode code, const std::string& why) {
        ++rejected_;
        throw Error(code, why);
    };
    if (!holons_.count(msg.sender)) reject(ErrorCode::UnknownHolon, "sender " + msg.sender.str());
    if (!holons_.count(msg.recipient))
        reject(ErrorCode::UnknownRecipient, msg.recipient.str());
    if (!msg.payload.is_object() || !msg.payload.contains("topic") ||
        !msg.payload.at("topic").is_string())
        reject(ErrorCode::SchemaViolation, "message payload needs a string topic");
    if (msg.correlation && !sent_.count(*msg.correlation))
        reject(ErrorCode::UnknownCorrelation, std::to_string(*msg.correlation));
    if ((msg.kind == Performative::accept || msg.kind == Performative::reject) && !msg.correlation)
        reject(ErrorCode::SchemaViolation, "accept/reject must reply to a prior message");

    msg.id = next_id_++;
    sent_.emplace(msg.id, msg.correlation);
    const std::uint64_t seq = hook_ ? hook_(msg) : fallback_seq_++;
    order_.emplace_back(msg.recipient, msg.id);
    const std::uint64_t id = msg.id;
    holons_.at(msg.recipient).inbox.push_back(std::move(msg));
    ++delivered_;
    return {id, seq};
}

std::optional<std::uint64_t> Holarchy::correlation_of(std::uint64_t id) const {
    auto it = sent_.find(id);
    return it == sent_.end() ? std::nullopt : it->second;
}

std::vector<std::pair<HolonId, CapabilityDescriptor>> Holarchy::query_capabilities(
    std::string_view pattern, const HolonId& scope) const {
    if (!holons_.count(scope)) throw Error(ErrorCode::UnknownHolon, scope.str());
    std::vector<std::pair<HolonId, CapabilityDescriptor>> out;
    for (auto it = holons_.lower_bound(scope); it != holons_.end() && scope.is_prefix_of(it->first);
         ++it) {
        std::vector<const CapabilityDescriptor*> caps;
        for (const auto& cap : it->second.capabilities)
            if (glob_match(pattern, cap.name)) caps.push_back(&cap);
        std::sort(caps.begin(), caps.end(),
                  [](const auto* a, const auto* b) { return a->name < b->name; });
        for (const auto* cap : caps) out.emplace_back(it->first, *cap);
    }
    return out;
}

std::vector<HolonId> Holarchy::subtree(const HolonId& id) const {
    std::vector<HolonId> out;
    for (auto it = holons_.lower_bound(id); it != holons_.end() && id.is_prefix_of(it->first); ++it)
        out.push_back(it->first);
    return out;
}

DetachReport Holarchy::detach(const HolonId& id) {
    if (!holons_.count(id)) throw Error(ErrorCode::UnknownHolon, id.str());
    if (root_ && *root_ == id) throw Error(ErrorCode::RootDetach, id.str());
    DetachReport report;
    report.removed = subtree(id);
    std::set<std::string> orphans;
    for (const auto& h : report.removed) {
        const auto& tasks = holons_.at(h).active_tasks;
        orphans.insert(tasks.begin(), tasks.end());
    }
    report.orphaned_tasks.assign(orphans.begin(), orphans.end());
    if (auto p = holons_.at(id).parent) holons_.at(*p).children.erase(id);
    for (const auto& h : report.removed) holons_.erase(h);
    return report;
}

const Holon& Holarchy::get(const HolonId& id) const {
    auto it = holons_.find(id);
    if (it == holons_.end()) throw Error(ErrorCode::UnknownHolon, id.str());
    return it->second;
}

Holon& Holarchy::get(const HolonId& id) {
    auto it = holons_.find(id);
    if (it == holons_.end()) throw Error(ErrorCode::UnknownHolon, id.str());
    return it->second;
}

std::size_t Holarchy::link_count() const {
    std::size_t n = 0;
    for (const auto& [id, h] : holons_) n += h.children.size();
    return n;
}

std::vector<HolonId> Holarchy::ids() const {
    std::vector<HolonId> out;
    out.reserve(holons_.size());
    for (const auto& [id, h] : holons_) out.push_back(id);
    return out;
}

std::optional<Message> Holarchy::next_delivery() {
    while (!order_.empty()) {
        auto [recipient, msg_id] = order_.front();
        order_.pop_front();
        auto it = holons_.find(recipient);
        if (it == holons_.end()) continue;
        auto& inbox = it->second.inbox;
        auto m = std::find_if(inbox.begin(), inbox.end(),
                              [&](const Message& x) { return x.id == msg_id; });
        if (m == inbox.end()) continue;
        Message out = std::move(*m);
        inbox.erase(m);
        return out;
    }
    return std::nullopt;
}

bool Holarchy::take(const HolonId& recipient, std::uint64_t message_id) {
    auto it = holons_.find(recipient);
    if (it == holons_.end()) return false;
    auto& inbox = it->second.inbox;
    auto m = std::find_if(inbox.begin(), inbox.end(),
                          [&](const Message& x) { return x.id == message_id; });
    if (m == inbox.end()) return false;
    inbox.erase(m);
    return true;
}

std::size_t Holarchy::pending() const {
    std::size_t n = 0;
    for (const auto& [id, h] : holons_) n += h.inbox.size();
    return n;
}

void Holarchy::assign_task(const HolonId& id, const std::string& task) {
    if (auto it = holons_.find(id); it != holons_.end()) it->second.active_tasks.insert(task);
}

void Holarchy::release_task(const HolonId& id, const std::string& task) {
    if (auto it = holons_.find(id); it != holons_.end()) it->second.active_tasks.erase(task);
}

}  // namespace holonsim
