#include "holonsim/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "holonsim/error.hpp"

namespace holonsim {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::SchemaError, path + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) bad(path, "expected an object");
    if (!obj.contains(key)) bad(path + "." + key, "missing");
    return obj.at(key);
}

std::string str_field(const json& obj, const char* key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_string() || v.get<std::string>().empty()) bad(path + "." + key, "expected a non-empty string");
    return v.get<std::string>();
}

std::int64_t int_field(const json& obj, const char* key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_number_integer()) bad(path + "." + key, "expected an integer");
    return v.get<std::int64_t>();
}

template <class E>
E enum_field(const json& obj, const char* key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_string()) bad(path + "." + key, "expected a string");
    const E e = v.get<E>();
    // The enum macro maps unknown strings to the first value; reject those.
    if (enum_name(e) != v.get<std::string>()) bad(path + "." + key, "unknown value '" + v.get<std::string>() + "'");
    return e;
}

const json& array_field(const json& obj, const char* key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_array()) bad(path + "." + key, "expected an array");
    return v;
}

std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Re-raises library errors raised while building an element under its path.
template <class F>
void under(const std::string& path, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::SchemaError && e.detail().rfind(path, 0) == 0) throw;
        bad(path, e.detail());
    } catch (const json::exception& e) {
        bad(path, e.what());
    }
}

}  // namespace

Scenario parse_scenario(const json& doc) {
    if (!doc.is_object()) bad("$", "expected an object");
    Scenario s;
    s.source = doc;
    s.name = doc.contains("name") ? str_field(doc, "name", "$") : "unnamed";
    if (doc.contains("seed")) {
        if (!doc.at("seed").is_number_unsigned() && !doc.at("seed").is_number_integer()) bad("$.seed", "expected an integer");
        if (doc.at("seed").is_number_integer() && doc.at("seed").get<std::int64_t>() < 0) bad("$.seed", "must be >= 0");
        s.seed = doc.at("seed").get<std::uint64_t>();
    }

    auto graph = std::make_shared<CityGraph>();
    const auto& g = field(doc, "graph", "$");
    const auto& nodes = array_field(g, "nodes", "$.graph");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string p = at("$.graph.nodes", i);
        const auto& n = nodes[i];
        Node node;
        node.id = str_field(n, "id", p);
        node.kind = enum_field<NodeKind>(n, "kind", p);
        node.x = n.contains("x") ? static_cast<int>(int_field(n, "x", p)) : 0;
        node.y = n.contains("y") ? static_cast<int>(int_field(n, "y", p)) : 0;
        if (n.contains("capacity") && !n.at("capacity").is_null()) {
            const auto cap = int_field(n, "capacity", p);
            if (cap < 1) bad(p + ".capacity", "must be >= 1");
            node.capacity = static_cast<int>(cap);
        }
        if (n.contains("charging")) {
            if (!n.at("charging").is_boolean()) bad(p + ".charging", "expected a boolean");
            node.charging = n.at("charging").get<bool>();
        }
        under(p, [&] { graph->add_node(std::move(node)); });
    }
    const auto& edges = array_field(g, "edges", "$.graph");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string p = at("$.graph.edges", i);
        const auto& e = edges[i];
        Edge edge;
        edge.id = str_field(e, "id", p);
        edge.a = str_field(e, "from", p);
        edge.b = str_field(e, "to", p);
        edge.mode = enum_field<EdgeMode>(e, "mode", p);
        edge.base_travel_time = int_field(e, "time", p);
        if (e.contains("blocked")) {
            if (!e.at("blocked").is_boolean()) bad(p + ".blocked", "expected a boolean");
            edge.blocked = e.at("blocked").get<bool>();
        }
        under(p, [&] { graph->add_edge(std::move(edge)); });
    }
    s.graph = graph;

    // A throwaway world runs the resource checks with their exact rules.
    World probe(graph, s.seed);
    const auto& resources = array_field(doc, "resources", "$");
    for (std::size_t i = 0; i < resources.size(); ++i) {
        const std::string p = at("$.resources", i);
        const auto& r = resources[i];
        ResourceState rs;
        rs.id = str_field(r, "id", p);
        rs.kind = enum_field<ResourceKind>(r, "kind", p);
        rs.location = str_field(r, "location", p);
        rs.battery = r.contains("battery") ? static_cast<int>(int_field(r, "battery", p)) : 100;
        if (graph->find_node(rs.id) || graph->find_edge(rs.id)) bad(p + ".id", "collides with a graph element");
        under(p, [&] { probe.add_resource(rs); });
        s.resources.push_back(probe.resource(rs.id));
    }

    std::set<std::string> passenger_ids;
    if (doc.contains("passengers")) {
        const auto& passengers = array_field(doc, "passengers", "$");
        for (std::size_t i = 0; i < passengers.size(); ++i) {
            const std::string p = at("$.passengers", i);
            const auto& ps = passengers[i];
            PassengerSpec spec;
            spec.id = str_field(ps, "id", p);
            if (spec.id.find('/') != std::string::npos) bad(p + ".id", "must not contain '/'");
            if (!passenger_ids.insert(spec.id).second || probe.find_resource(spec.id))
                bad(p + ".id", "duplicate id '" + spec.id + "'");
            spec.location = str_field(ps, "location", p);
            if (!graph->find_node(spec.location)) bad(p + ".location", "unknown node '" + spec.location + "'");
            if (ps.contains("requests")) {
                const auto& reqs = array_field(ps, "requests", p);
                for (std::size_t k = 0; k < reqs.size(); ++k) {
                    const std::string rp = at(p + ".requests", k);
                    TripRequest tr;
                    tr.at_tick = int_field(reqs[k], "at_tick", rp);
                    if (tr.at_tick < 0) bad(rp + ".at_tick", "must be >= 0");
                    tr.text = str_field(reqs[k], "text", rp);
                    spec.requests.push_back(std::move(tr));
                }
            }
            s.passengers.push_back(std::move(spec));
        }
    }

    if (doc.contains("scripted_disruptions")) {
        const auto& ds = array_field(doc, "scripted_disruptions", "$");
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const std::string p = at("$.scripted_disruptions", i);
            under(p, [&] {
                auto d = ds[i].get<Disruption>();
                probe.check_disruption(d);
                probe.inject_disruption(d);
                s.scripted_disruptions.push_back(std::move(d));
            });
        }
    }

    if (doc.contains("limits")) {
        const auto& lim = doc.at("limits");
        if (!lim.is_object()) bad("$.limits", "expected an object");
        if (lim.contains("max_ticks")) s.max_ticks = int_field(lim, "max_ticks", "$.limits");
        if (lim.contains("approval_timeout")) s.approval_timeout = int_field(lim, "approval_timeout", "$.limits");
        if (s.max_ticks < 1) bad("$.limits.max_ticks", "must be >= 1");
        if (s.approval_timeout < 1) bad("$.limits.approval_timeout", "must be >= 1");
    }
    if (doc.contains("rules")) under("$.rules", [&] { s.rules = RuleSet::from_json(doc.at("rules")); });
    return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, "$: " + std::string(e.what()));
    }
    return parse_scenario(doc);
}

OperatorCommand parse_command(const json& doc) {
    if (!doc.is_object() || !doc.contains("kind") || !doc.at("kind").is_string())
        throw Error(ErrorCode::InvalidCommand, "command needs a string 'kind'");
    OperatorCommand c;
    const auto kind = doc.at("kind").get<std::string>();
    c.kind = json(kind).get<CommandKind>();
    if (json(c.kind).get<std::string>() != kind) throw Error(ErrorCode::InvalidCommand, "unknown kind '" + kind + "'");
    c.id = doc.value("id", std::string{});
    if (doc.contains("payload")) {
        if (!doc.at("payload").is_object()) throw Error(ErrorCode::InvalidCommand, "payload must be an object");
        c.payload = doc.at("payload");
    } else {
        c.payload = doc;
        for (const char* k : {"kind", "id", "at_tick"}) c.payload.erase(k);
    }
    auto need = [&](const char* key) {
        if (!c.payload.contains(key)) throw Error(ErrorCode::InvalidCommand, kind + " needs '" + key + "'");
    };
    switch (c.kind) {
        case CommandKind::approve:
        case CommandKind::reject: need("approval_id"); break;
        case CommandKind::override_plan:
            need("approval_id");
            need("plan");
            break;
        case CommandKind::inject_disruption: need("disruption"); break;
        case CommandKind::passenger_message:
            need("passenger");
            need("text");
            break;
        default: break;
    }
    return c;
}

json command_json(const OperatorCommand& c) {
    return {{"id", c.id}, {"kind", c.kind}, {"payload", c.payload}};
}

std::vector<ScriptedAction> parse_script(const json& doc) {
    const json* list = &doc;
    if (doc.is_object() && doc.contains("actions")) list = &doc.at("actions");
    if (!list->is_array()) bad("$", "expected an array of actions");
    std::vector<ScriptedAction> out;
    for (std::size_t i = 0; i < list->size(); ++i) {
        const std::string p = at("$", i);
        const auto& a = (*list)[i];
        ScriptedAction sa;
        sa.at_tick = int_field(a, "at_tick", p);
        if (sa.at_tick < 0) bad(p + ".at_tick", "must be >= 0");
        try {
            sa.command = parse_command(a);
        } catch (const Error& e) {
            bad(p, e.detail());
        }
        if (sa.command.id.empty()) sa.command.id = "script-" + std::to_string(i + 1);
        out.push_back(std::move(sa));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ScriptedAction& a, const ScriptedAction& b) { return a.at_tick < b.at_tick; });
    return out;
}

std::vector<ScriptedAction> load_script(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, "$: " + std::string(e.what()));
    }
    return parse_script(doc);
}

json random_scenario(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    const int w = pick(3, 4);
    const int h = pick(2, 3);
    auto sid = [&](int x, int y) { return "N" + std::to_string(x) + "_" + std::to_string(y); };
    json nodes = json::array();
    json edges = json::array();
    const int vcount = pick(2, 3);
    std::vector<std::pair<int, int>> vpos{{0, 0}, {w - 1, h - 1}, {w - 1, 0}};
    vpos.resize(static_cast<std::size_t>(vcount));
    std::map<std::pair<int, int>, std::string> vname;
    for (int i = 0; i < vcount; ++i) vname[vpos[static_cast<std::size_t>(i)]] = "V" + std::to_string(i + 1);

    auto name_of = [&](int x, int y) {
        auto it = vname.find({x, y});
        return it == vname.end() ? sid(x, y) : it->second;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool vp = vname.count({x, y}) > 0;
            json n{{"id", name_of(x, y)}, {"kind", vp ? "vertiport" : "street"}, {"x", x}, {"y", y}};
            if (vp) n["charging"] = true;
            nodes.push_back(n);
        }
    int eid = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w)
                edges.push_back({{"id", "g" + std::to_string(++eid)}, {"from", name_of(x, y)},
                                 {"to", name_of(x + 1, y)}, {"mode", "ground"}, {"time", pick(2, 9)}});
            if (y + 1 < h)
                edges.push_back({{"id", "g" + std::to_string(++eid)}, {"from", name_of(x, y)},
                                 {"to", name_of(x, y + 1)}, {"mode", "ground"}, {"time", pick(2, 9)}});
        }
    for (int i = 0; i < vcount; ++i)
        for (int k = i + 1; k < vcount; ++k)
            edges.push_back({{"id", "a" + std::to_string(i + 1) + std::to_string(k + 1)},
                             {"from", "V" + std::to_string(i + 1)},
                             {"to", "V" + std::to_string(k + 1)},
                             {"mode", "air"},
                             {"time", pick(2, 5)}});

    std::vector<std::string> all;
    for (const auto& n : nodes) all.push_back(n.at("id").get<std::string>());
    json resources = json::array();
    const int scooters = pick(2, 4);
    for (int i = 0; i < scooters; ++i)
        resources.push_back({{"id", "scooter-" + std::to_string(i + 1)},
                             {"kind", "scooter"},
                             {"location", all[static_cast<std::size_t>(pick(0, static_cast<int>(all.size()) - 1))]},
                             {"battery", pick(60, 100)}});
    for (int i = 0; i < vcount; ++i)
        resources.push_back({{"id", "airtaxi-" + std::to_string(i + 1)},
                             {"kind", "air_taxi"},
                             {"location", "V" + std::to_string(i + 1)},
                             {"battery", 100}});
    resources.push_back({{"id", "ground-taxi-1"},
                         {"kind", "ground_taxi"},
                         {"location", all[static_cast<std::size_t>(pick(0, static_cast<int>(all.size()) - 1))]},
                         {"battery", 100}});

    // Opposite corners so air is usually competitive.
    const std::string origin = name_of(0, h - 1);
    const std::string dest = name_of(w - 1, h > 2 ? 1 : 0);
    json passengers = json::array();
    passengers.push_back({{"id", "c1"},
                          {"location", origin},
                          {"requests", json::array({{{"at_tick", pick(0, 3)}, {"text", "ride from " + origin + " to " + dest}}})}});
    // A second, short ground trip competing for the same fleet.
    const std::string c2_from = name_of(1, 0);
    const std::string c2_to = name_of(1, h - 1);
    passengers.push_back({{"id", "c2"},
                          {"location", c2_from},
                          {"requests", json::array({{{"at_tick", pick(0, 6)}, {"text", "ride from " + c2_from + " to " + c2_to}}})}});

    json disruptions = json::array();
    if (pick(0, 1) == 1) {
        const int e = pick(1, eid);
        const int at = pick(2, 12);
        disruptions.push_back({{"id", "d-block"},
                               {"kind", "edge_blocked"},
                               {"targets", {"g" + std::to_string(e)}},
                               {"activation", at},
                               {"expiry", at + pick(5, 30)}});
    }
    if (pick(0, 2) == 2) {
        const int e = pick(1, eid);
        disruptions.push_back({{"id", "d-weather"},
                               {"kind", "weather_slowdown"},
                               {"targets", {"g" + std::to_string(e)}},
                               {"activation", pick(0, 10)},
                               {"slowdown_factor", 2.0}});
    }

    return {{"name", "random-" + std::to_string(seed)},
            {"seed", seed},
            {"graph", {{"nodes", nodes}, {"edges", edges}}},
            {"resources", resources},
            {"passengers", passengers},
            {"scripted_disruptions", disruptions},
            {"limits", {{"max_ticks", 400}, {"approval_timeout", pick(5, 15)}}}};
}

}  // namespace holonsim
