#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = HOLONSIM_SCENARIO_DIR;
const std::string kBin = HOLONSIM_BIN;

int run(const std::string& args) {
    const std::string cmd = kBin + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("holonsim_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("run writes every artifact and verify accepts it") {
    const auto out = scratch("run");
    const std::string sc = (kScenarios / "fig5-demo.json").string();
    const std::string script = (kScenarios / "fig5-approve.json").string();
    CHECK(run("run --scenario " + sc + " --script " + script + " --out " + out.string()) == 0);
    for (const char* f : {"events.ndjson", "metrics.json", "metrics.csv", "world.json", "scenario.json"})
        CHECK(fs::exists(out / f));
    const json m = json::parse(slurp(out / "metrics.json"));
    CHECK(m["trips_completed"] == 1);

    const std::string log = (out / "events.ndjson").string();
    CHECK(run("verify " + log) == 0);
    CHECK(run("verify " + log + " --template fig5 --passenger c1") == 0);
    CHECK(run("verify " + log + " --template fig5 --passenger c7") == 2);
    CHECK(run("verify " + log + " --template fig9") == 1);

    // Same inputs, same bytes.
    const auto again = scratch("run2");
    CHECK(run("run --scenario " + sc + " --script " + script + " --out " + again.string()) == 0);
    CHECK(slurp(out / "events.ndjson") == slurp(again / "events.ndjson"));

    // A damaged log fails verification with the violation exit code.
    const auto damaged = out / "damaged.ndjson";
    std::string text = slurp(out / "events.ndjson");
    text.erase(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n'));
    std::ofstream(damaged) << text;
    CHECK(run("verify " + damaged.string()) == 2);
    fs::remove_all(out);
    fs::remove_all(again);
}

TEST_CASE("bad input exits with 1") {
    CHECK(run("") == 1);
    CHECK(run("run --scenario /no/such.json") == 1);
    CHECK(run("verify /no/such.ndjson") == 1);
    CHECK(run("run --scenario " + (kScenarios / "fig5-demo.json").string() + " --strategy chaos --out " +
              scratch("bad").string()) == 1);
    CHECK(run("--help") == 0);
}

TEST_CASE("compare writes one row per strategy") {
    const auto out = scratch("cmp");
    CHECK(run("compare --scenario " + (kScenarios / "ten-trips.json").string() + " --out " + out.string()) == 0);
    const std::string csv = slurp(out / "comparison.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK(json::parse(slurp(out / "comparison.json")).size() == 5);
    CHECK(run("compare --scenario " + (kScenarios / "ten-trips.json").string() +
              " --strategies broker,holonic --out " + out.string()) == 0);
    fs::remove_all(out);
}

TEST_CASE("a rules file replaces the scenario rule set") {
    const auto out = scratch("rules");
    CHECK(run("run --scenario " + (kScenarios / "fig5-demo.json").string() + " --rules " +
              (kScenarios / "rules.example.json").string() + " --out " + out.string()) == 0);
    const auto written = json::parse(slurp(out / "scenario.json"));
    bool found = false;
    for (const auto& r : written.at("rules").at("rules"))
        if (r.at("id") == "battery_insufficient") {
            CHECK(r.at("params").at("reserve_percent") == 20);
            found = true;
        }
    CHECK(found);

    const auto bad = scratch("rules_bad");
    fs::create_directories(bad);
    std::ofstream(bad / "rules.json") << R"({"rules":[{"id":"no_such_rule"}]})";
    CHECK(run("run --scenario " + (kScenarios / "fig5-demo.json").string() + " --rules " +
              (bad / "rules.json").string() + " --out " + (bad / "out").string()) == 1);
}
