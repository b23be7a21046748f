#include "holonsim/federation.hpp"

#include <algorithm>

#include "holonsim/error.hpp"

namespace holonsim {

StrategyKind parse_strategy(std::string_view name) {
    for (auto k : all_strategies())
        if (enum_name(k) == name) return k;
    throw Error(ErrorCode::ConfigError, "unknown strategy " + std::string(name));
}

const std::vector<StrategyKind>& all_strategies() {
    static const std::vector<StrategyKind> all{StrategyKind::facilitator, StrategyKind::broker,
                                               StrategyKind::matchmaker, StrategyKind::mediator,
                                               StrategyKind::holonic};
    return all;
}

nlohmann::json CoordinationMetrics::to_json() const {
    return {{"strategy", strategy},
            {"conversations", conversations},
            {"total_messages", total_messages},
            {"middle_hops", middle_hops},
            {"per_agent", per_agent},
            {"max_single_agent_load", max_single_agent_load},
            {"max_load_agent", max_load_agent},
            {"mean_discovery_latency", mean_discovery_latency},
            {"failed_conversations", failed_conversations}};
}

std::vector<HolonId> tree_path(const HolonId& from, const HolonId& to) {
    const auto& a = from.segments();
    const auto& b = to.segments();
    std::size_t common = 0;
    while (common < a.size() && common < b.size() && a[common] == b[common]) ++common;
    std::vector<HolonId> path;
    HolonId cur = from;
    path.push_back(cur);
    while (cur.depth() > common) {
        cur = *cur.parent();
        path.push_back(cur);
    }
    std::vector<HolonId> down;
    HolonId d = to;
    while (d.depth() > common) {
        down.push_back(d);
        d = *d.parent();
    }
    path.insert(path.end(), down.rbegin(), down.rend());
    return path;
}

Federation::Federation(Holarchy& holarchy, StrategyKind kind) : holarchy_(holarchy), kind_(kind) {
    metrics_.strategy = kind;
}

void Federation::install() {
    if (kind_ == StrategyKind::holonic) return;
    if (!holarchy_.root()) throw Error(ErrorCode::MissingParent, "federation needs a root supervisor");
    agent_ = holarchy_.root()->child(enum_name(kind_));
    if (holarchy_.contains(agent_)) return;
    Holon h;
    h.id = agent_;
    h.role = Role::supervisor;
    h.capabilities = {{"coordinate." + enum_name(kind_), {}, {}, 1.0}};
    holarchy_.register_holon(std::move(h), holarchy_.root());
}

std::vector<HolonId> Federation::middle_agents() const {
    if (kind_ != StrategyKind::holonic) return {agent_};
    std::vector<HolonId> out;
    for (const auto& id : holarchy_.ids())
        if (holarchy_.get(id).role == Role::supervisor) out.push_back(id);
    return out;
}

bool Federation::is_middle(const HolonId& id) const {
    if (kind_ != StrategyKind::holonic) return id == agent_;
    return holarchy_.contains(id) && holarchy_.get(id).role == Role::supervisor;
}

bool Federation::hop(Transcript& t, const HolonId& from, const HolonId& to, Performative kind,
                     const std::string& topic, nlohmann::json payload, Tick now,
                     std::optional<std::uint64_t>& last) {
    const bool middle = is_middle(from) || is_middle(to);
    if (middle && kill_after_ && middle_handled_ >= *kill_after_) return false;
    payload["topic"] = topic;
    payload["conversation"] = t.conversation_id;
    payload["strategy"] = enum_name(kind_);
    Message m;
    m.sender = from;
    m.recipient = to;
    m.kind = kind;
    m.correlation = last;
    m.payload = std::move(payload);
    m.sent_at = now;
    const auto receipt = holarchy_.send(std::move(m));
    holarchy_.take(to, receipt.message_id);
    last = receipt.message_id;
    t.hops.push_back({from, to, kind, topic});
    if (middle) ++middle_handled_;
    return true;
}

void Federation::record(const Transcript& t, bool failed, int latency) {
    ++metrics_.conversations;
    for (const auto& h : t.hops) {
        ++metrics_.total_messages;
        ++metrics_.per_agent[h.from.str()];
        ++metrics_.per_agent[h.to.str()];
        if (is_middle(h.from) || is_middle(h.to)) ++metrics_.middle_hops;
    }
    metrics_.max_single_agent_load = 0;
    for (const auto& [agent, n] : metrics_.per_agent)
        if (n > metrics_.max_single_agent_load) {
            metrics_.max_single_agent_load = n;
            metrics_.max_load_agent = agent;
        }
    if (failed) {
        ++metrics_.failed_conversations;
    } else {
        latency_sum_ += static_cast<std::size_t>(latency);
        ++latency_count_;
        metrics_.mean_discovery_latency =
            static_cast<double>(latency_sum_) / static_cast<double>(latency_count_);
    }
    transcripts_.push_back(t);
}

ConversationOutcome Federation::route_conversation(const HolonId& requester, const std::string& pattern,
                                                   const ProviderSelector& select, Tick now,
                                                   const nlohmann::json& context) {
    Transcript t;
    t.conversation_id = "C" + std::to_string(next_conversation_++);
    t.requester = requester;

    const auto root = holarchy_.root();
    if (!root) throw Error(ErrorCode::NoProvider, "empty holarchy");
    auto candidates = holarchy_.query_capabilities(pattern, *root);
    // A requester never serves itself.
    candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                    [&](const auto& c) { return c.first == requester; }),
                     candidates.end());
    const std::optional<HolonId> chosen = candidates.empty() ? std::nullopt : select(candidates);
    if (!chosen) throw Error(ErrorCode::NoProvider, pattern);
    t.provider = chosen;
    const HolonId& prov = *chosen;

    nlohmann::json query = context;
    query["pattern"] = pattern;
    nlohmann::json offer{{"provider", prov}};
    std::optional<std::uint64_t> last;
    int latency = 0;
    bool ok = true;
    auto step = [&](const HolonId& from, const HolonId& to, Performative k, const char* topic,
                    const nlohmann::json& payload) {
        if (!ok) return false;
        ok = hop(t, from, to, k, topic, payload, now, last);
        return ok;
    };

    switch (kind_) {
        case StrategyKind::facilitator:
            step(requester, agent_, Performative::request, "discover", query);
            step(agent_, prov, Performative::request, "discover", query);
            step(prov, agent_, Performative::propose, "offer", offer);
            step(agent_, requester, Performative::propose, "offer", offer);
            latency = 4;
            break;
        case StrategyKind::broker:
            step(requester, agent_, Performative::request, "discover", query);
            step(agent_, prov, Performative::request, "connect", query);
            step(prov, requester, Performative::propose, "offer", offer);
            step(requester, prov, Performative::accept, "accept", offer);
            latency = 3;
            break;
        case StrategyKind::matchmaker:
            step(requester, agent_, Performative::request, "discover", query);
            step(agent_, requester, Performative::inform, "match", offer);
            step(requester, prov, Performative::request, "engage", query);
            step(prov, requester, Performative::propose, "offer", offer);
            step(requester, prov, Performative::accept, "accept", offer);
            latency = 2;
            break;
        case StrategyKind::mediator: {
            step(requester, agent_, Performative::request, "discover", query);
            auto before = last;
            std::vector<std::uint64_t> calls;
            // Fan-out: each call correlates to the requester's query.
            for (const auto& [id, cap] : candidates) {
                last = before;
                if (!step(agent_, id, Performative::request, "solicit", query)) break;
                calls.push_back(*last);
            }
            for (std::size_t i = 0; i < calls.size() && ok; ++i) {
                last = calls[i];
                step(candidates[i].first, agent_, Performative::propose, "offer",
                     nlohmann::json{{"provider", candidates[i].first}});
            }
            step(agent_, prov, Performative::accept, "accept", offer);
            step(agent_, requester, Performative::inform, "offer", offer);
            latency = 4;
            break;
        }
        case StrategyKind::holonic: {
            const auto path = tree_path(requester, prov);
            for (std::size_t i = 0; i + 1 < path.size(); ++i)
                step(path[i], path[i + 1], Performative::request, "discover", query);
            for (std::size_t i = path.size() - 1; i > 0; --i)
                step(path[i], path[i - 1], Performative::propose, "offer", offer);
            latency = static_cast<int>(2 * (path.size() - 1));
            break;
        }
    }

    ConversationOutcome out;
    out.transcript = t;
    out.failed = !ok;
    out.discovery_latency = latency;
    if (ok) out.provider = prov;
    else out.transcript.provider.reset();
    record(out.transcript, out.failed, latency);
    return out;
}

namespace {

bool touches(const Hop& h, const HolonId& id) { return h.from == id || h.to == id; }

bool any_middle(const Hop& h, const std::vector<HolonId>& middle) {
    return std::any_of(middle.begin(), middle.end(), [&](const HolonId& m) { return touches(h, m); });
}

bool direct(const Hop& h, const Transcript& t) {
    return t.provider && ((h.from == t.requester && h.to == *t.provider) ||
                          (h.from == *t.provider && h.to == t.requester));
}

}  // namespace

bool conforms(StrategyKind kind, const Transcript& t, const std::vector<HolonId>& middle) {
    const auto& hops = t.hops;
    if (hops.empty()) return false;
    switch (kind) {
        case StrategyKind::facilitator:
        case StrategyKind::mediator:
            return std::all_of(hops.begin(), hops.end(), [&](const Hop& h) { return any_middle(h, middle); });
        case StrategyKind::broker: {
            // Set-up through the broker, then only direct traffic.
            std::size_t i = 0;
            while (i < hops.size() && any_middle(hops[i], middle)) ++i;
            if (i == 0) return false;
            for (; i < hops.size(); ++i)
                if (!direct(hops[i], t)) return false;
            return true;
        }
        case StrategyKind::matchmaker: {
            if (hops.size() < 2 || !any_middle(hops[0], middle) || !any_middle(hops[1], middle)) return false;
            if (!touches(hops[0], t.requester) || !touches(hops[1], t.requester)) return false;
            for (std::size_t i = 2; i < hops.size(); ++i)
                if (!direct(hops[i], t)) return false;
            return true;
        }
        case StrategyKind::holonic:
            for (const auto& h : hops) {
                const bool tree_edge = (h.from.parent() && *h.from.parent() == h.to) ||
                                       (h.to.parent() && *h.to.parent() == h.from);
                if (!tree_edge) return false;
                for (const auto* end : {&h.from, &h.to}) {
                    if (*end == t.requester || (t.provider && *end == *t.provider)) continue;
                    if (std::find(middle.begin(), middle.end(), *end) == middle.end()) return false;
                }
            }
            return true;
    }
    return false;
}

}  // namespace holonsim
