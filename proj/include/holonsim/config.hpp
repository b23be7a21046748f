#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace holonsim {

// Parses the small TOML subset used by holonsim.toml: [table] and
// [a.b] headers, key = value with strings, integers, floats and booleans,
// and # comments. Returns a nested JSON object. Throws ConfigError with the
// line number on anything else.
nlohmann::json parse_toml(std::string_view text);

struct Config {
    int port = 8080;
    std::string host = "127.0.0.1";
    double ticks_per_second = 2.0;  // 0 = free-run
    std::string reasoner = "mock";  // mock | remote
    std::string reasoner_url;
    int reasoner_budget_ms = 2000;
    std::optional<int> approval_timeout;
    std::filesystem::path runs_dir = "runs";

    nlohmann::json to_json() const;
};

/// Applies a parsed config document on top of the defaults. Keys:
/// gateway.{host,port,ticks_per_second,runs_dir},
/// reasoner.{backend,url,budget_ms}, simulation.approval_timeout.
Config config_from_json(const nlohmann::json& doc, Config base = {});

/// Environment overrides: HOLONSIM_PORT, HOLONSIM_TICKS_PER_SECOND,
/// HOLONSIM_REASONER_URL, HOLONSIM_APPROVAL_TIMEOUT. The lookup is injectable
/// for tests.
using EnvLookup = std::map<std::string, std::string>;
Config apply_env(Config c, const EnvLookup& env);
EnvLookup process_env();

/// File (if given) then environment.
Config load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env());

}  // namespace holonsim
