#include "holonsim/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "holonsim/error.hpp"

namespace holonsim {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad(std::size_t line, const std::string& msg) {
    throw Error(ErrorCode::ConfigError, "line " + std::to_string(line) + ": " + msg);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool bare_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

// Strips a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

json parse_value(const std::string& v, std::size_t line) {
    if (v.empty()) bad(line, "missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') bad(line, "unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] != '\\') {
                out += v[i];
                continue;
            }
            if (++i + 1 >= v.size()) bad(line, "dangling escape");
            switch (v[i]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: bad(line, std::string("unsupported escape \\") + v[i]);
            }
        }
        return out;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    std::string digits;
    for (char c : v)
        if (c != '_') digits += c;
    try {
        std::size_t used = 0;
        if (digits.find_first_of(".eE") == std::string::npos) {
            const long long n = std::stoll(digits, &used);
            if (used == digits.size()) return n;
        } else {
            const double d = std::stod(digits, &used);
            if (used == digits.size()) return d;
        }
    } catch (const std::exception&) {
    }
    bad(line, "unsupported value '" + v + "'");
}

json& table_at(json& root, const std::string& dotted, std::size_t line) {
    json* cur = &root;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        part = trim(part);
        if (!bare_key(part)) bad(line, "bad table name '" + dotted + "'");
        json& next = (*cur)[part];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) bad(line, "'" + part + "' is not a table");
        cur = &next;
    }
    return *cur;
}

template <class T>
T typed(const json& j, const char* path) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::ConfigError, std::string(path) + ": wrong type");
    }
}

}  // namespace

json parse_toml(std::string_view text) {
    json root = json::object();
    json* table = &root;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']' || s.rfind("[[", 0) == 0) bad(line, "unsupported table header");
            table = &table_at(root, s.substr(1, s.size() - 2), line);
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) bad(line, "expected key = value");
        const std::string key = trim(s.substr(0, eq));
        if (!bare_key(key)) bad(line, "bad key '" + key + "'");
        if (table->contains(key)) bad(line, "duplicate key '" + key + "'");
        (*table)[key] = parse_value(trim(s.substr(eq + 1)), line);
    }
    return root;
}

json Config::to_json() const {
    return {{"host", host},
            {"port", port},
            {"ticks_per_second", ticks_per_second},
            {"reasoner", reasoner},
            {"reasoner_url", reasoner_url},
            {"reasoner_budget_ms", reasoner_budget_ms},
            {"approval_timeout", approval_timeout ? json(*approval_timeout) : json(nullptr)},
            {"runs_dir", runs_dir.string()}};
}

Config config_from_json(const json& doc, Config c) {
    if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "config must be a table");
    if (auto g = doc.find("gateway"); g != doc.end()) {
        if (g->contains("host")) c.host = typed<std::string>(g->at("host"), "gateway.host");
        if (g->contains("port")) c.port = typed<int>(g->at("port"), "gateway.port");
        if (g->contains("ticks_per_second"))
            c.ticks_per_second = typed<double>(g->at("ticks_per_second"), "gateway.ticks_per_second");
        if (g->contains("runs_dir")) c.runs_dir = typed<std::string>(g->at("runs_dir"), "gateway.runs_dir");
    }
    if (auto r = doc.find("reasoner"); r != doc.end()) {
        if (r->contains("backend")) c.reasoner = typed<std::string>(r->at("backend"), "reasoner.backend");
        if (r->contains("url")) c.reasoner_url = typed<std::string>(r->at("url"), "reasoner.url");
        if (r->contains("budget_ms")) c.reasoner_budget_ms = typed<int>(r->at("budget_ms"), "reasoner.budget_ms");
    }
    if (auto s = doc.find("simulation"); s != doc.end() && s->contains("approval_timeout"))
        c.approval_timeout = typed<int>(s->at("approval_timeout"), "simulation.approval_timeout");

    if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::ConfigError, "gateway.port out of range");
    if (c.ticks_per_second < 0) throw Error(ErrorCode::ConfigError, "gateway.ticks_per_second must be >= 0");
    if (c.reasoner != "mock" && c.reasoner != "remote")
        throw Error(ErrorCode::ConfigError, "reasoner.backend must be mock or remote");
    if (c.reasoner_budget_ms <= 0) throw Error(ErrorCode::ConfigError, "reasoner.budget_ms must be > 0");
    if (c.approval_timeout && *c.approval_timeout <= 0)
        throw Error(ErrorCode::ConfigError, "simulation.approval_timeout must be > 0");
    return c;
}

Config apply_env(Config c, const EnvLookup& env) {
    auto get = [&](const char* k) -> std::optional<std::string> {
        auto it = env.find(k);
        if (it == env.end() || it->second.empty()) return std::nullopt;
        return it->second;
    };
    auto as_number = [&](const char* k, const std::string& v) {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigError, std::string(k) + ": not a number: " + v);
        }
    };
    json doc = json::object();
    if (auto v = get("HOLONSIM_PORT")) doc["gateway"]["port"] = static_cast<int>(as_number("HOLONSIM_PORT", *v));
    if (auto v = get("HOLONSIM_TICKS_PER_SECOND"))
        doc["gateway"]["ticks_per_second"] = as_number("HOLONSIM_TICKS_PER_SECOND", *v);
    if (auto v = get("HOLONSIM_REASONER_URL")) {
        doc["reasoner"]["url"] = *v;
        doc["reasoner"]["backend"] = "remote";
    }
    if (auto v = get("HOLONSIM_APPROVAL_TIMEOUT"))
        doc["simulation"]["approval_timeout"] = static_cast<int>(as_number("HOLONSIM_APPROVAL_TIMEOUT", *v));
    return config_from_json(doc, std::move(c));
}

EnvLookup process_env() {
    EnvLookup env;
    for (const char* k : {"HOLONSIM_PORT", "HOLONSIM_TICKS_PER_SECOND", "HOLONSIM_REASONER_URL",
                          "HOLONSIM_APPROVAL_TIMEOUT"})
        if (const char* v = std::getenv(k)) env[k] = v;
    return env;
}

Config load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
    Config c;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + file->string());
        std::stringstream buf;
        buf << in.rdbuf();
        try {
            c = config_from_json(parse_toml(buf.str()), c);
        } catch (const Error& e) {
            throw Error(ErrorCode::ConfigError, file->string() + ": " + e.detail());
        }
    }
    return apply_env(std::move(c), env);
}

}  // namespace holonsim
