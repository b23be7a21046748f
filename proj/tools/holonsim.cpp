// holonsim: headless runs, log verification, strategy comparison and the
// HTTP gateway.
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "holonsim/config.hpp"
#include "holonsim/error.hpp"
#include "holonsim/gateway.hpp"
#include "holonsim/simulation.hpp"
#include "holonsim/verifier.hpp"

using namespace holonsim;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitViolation = 2;

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + p.string());
    out << content;
}

std::string metrics_csv(const RunMetrics& m) {
    std::ostringstream out;
    out << "ticks,trips_requested,trips_completed,trips_aborted,clarifications,revisions,approvals_requested,"
           "approvals_approved,approvals_overridden,approvals_rejected,fallbacks_activated,reasoner_fallbacks,"
           "messages,mean_door_to_door,log_hash\n";
    out << m.ticks << ',' << m.trips_requested << ',' << m.trips_completed << ',' << m.trips_aborted << ','
        << m.clarifications << ',' << m.revisions << ',' << m.approvals_requested << ',' << m.approvals_approved
        << ',' << m.approvals_overridden << ',' << m.approvals_rejected << ',' << m.fallbacks_activated << ','
        << m.reasoner_fallbacks << ',' << m.messages << ',' << m.mean_door_to_door << ',' << m.log_hash << '\n';
    return out.str();
}

struct RunArgs {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string strategy = "holonic";
    std::string script;
    std::string out = "out";
    double ticks_per_second = 0;
    std::string reasoner = "mock";
    std::string remote_url;
    std::string config;
    std::string rules;
};

SimOptions sim_options(const RunArgs& a, const Config& cfg) {
    SimOptions o;
    o.seed = a.seed;
    o.strategy = parse_strategy(a.strategy);
    if (!a.script.empty()) o.script = load_script(a.script);
    o.approval_timeout = cfg.approval_timeout;
    const std::string backend = a.reasoner.empty() ? cfg.reasoner : a.reasoner;
    const std::string url = a.remote_url.empty() ? cfg.reasoner_url : a.remote_url;
    if (backend == "remote") {
        if (url.empty()) throw Error(ErrorCode::ConfigError, "--reasoner remote needs --remote-url");
        o.backend = std::make_shared<RemoteReasoner>(url, std::chrono::milliseconds(cfg.reasoner_budget_ms));
    }
    return o;
}

Config config_for(const std::string& path) {
    return load_config(path.empty() ? std::nullopt : std::optional<fs::path>(path));
}

int cmd_run(const RunArgs& a) {
    const Config cfg = config_for(a.config);
    Scenario scenario = load_scenario(a.scenario);
    if (!a.rules.empty()) {
        // A rules file replaces the scenario's rule set; the copy written out records it.
        scenario.rules = RuleSet::load(a.rules);
        scenario.source["rules"] = scenario.rules.to_json();
    }
    SimOptions o = sim_options(a, cfg);
    const fs::path out(a.out);
    fs::create_directories(out);
    o.log_file = out / "events.ndjson";
    write_file(out / "scenario.json", scenario.source.dump(2) + "\n");

    Simulation sim(std::move(scenario), std::move(o));
    const auto period = a.ticks_per_second > 0 ? std::chrono::duration<double>(1.0 / a.ticks_per_second)
                                               : std::chrono::duration<double>(0);
    while (sim.step())
        if (a.ticks_per_second > 0) std::this_thread::sleep_for(period);

    const RunMetrics m = sim.metrics();
    write_file(out / "metrics.json", m.to_json().dump(2) + "\n");
    write_file(out / "metrics.csv", metrics_csv(m));
    write_file(out / "world.json", sim.state().dump(2) + "\n");

    const VerifyReport rep = verify_log(sim.log().records());
    std::cout << "scenario " << sim.scenario().name << ": finished (" << sim.finish_reason() << ") at tick "
              << sim.now() << "\n"
              << "  trips " << m.trips_completed << "/" << m.trips_requested << " completed, " << m.trips_aborted
              << " aborted, " << m.clarifications << " clarifications\n"
              << "  approvals " << m.approvals_requested << " requested, " << m.approvals_approved << " approved, "
              << m.approvals_overridden << " overridden, " << m.approvals_rejected << " rejected, "
              << m.fallbacks_activated << " fallbacks\n"
              << "  mean door-to-door " << m.mean_door_to_door << " ticks\n"
              << "  log " << sim.log().size() << " records, sha256 " << m.log_hash << "\n"
              << "  artifacts in " << out.string() << "\n";
    bool violated = false;
    for (const auto& v : sim.violations()) {
        std::cerr << "invariant violation: " << v << "\n";
        violated = true;
    }
    if (!rep.ok()) {
        std::cerr << rep.to_text();
        violated = true;
    }
    return violated ? kExitViolation : kExitOk;
}

int cmd_verify(const std::string& path, const std::string& tmpl, const std::string& passenger, bool as_json) {
    if (!fs::exists(path)) throw Error(ErrorCode::ConfigError, "no such log: " + path);
    VerifyReport rep = verify_file(path);
    if (!tmpl.empty()) {
        auto extra = check_template(EventLog::read_file(path), tmpl, passenger);
        rep.violations.insert(rep.violations.end(), extra.begin(), extra.end());
    }
    if (as_json) {
        std::cout << rep.to_json().dump(2) << "\n";
    } else {
        std::cout << rep.to_text();
        std::cout << path << ": " << rep.records << " records, " << rep.violations.size() << " violations, sha256 "
                  << rep.hash << "\n";
    }
    return rep.ok() ? kExitOk : kExitViolation;
}

int cmd_compare(const RunArgs& a, const std::string& strategies) {
    const Config cfg = config_for(a.config);
    std::vector<StrategyKind> kinds;
    if (strategies == "all") {
        kinds = all_strategies();
    } else {
        std::stringstream ss(strategies);
        std::string s;
        while (std::getline(ss, s, ','))
            if (!s.empty()) kinds.push_back(parse_strategy(s));
    }
    if (kinds.empty()) throw Error(ErrorCode::ConfigError, "no strategies given");
    const Scenario scenario = load_scenario(a.scenario);
    const fs::path out(a.out);
    fs::create_directories(out);
    const auto rows = run_comparison(scenario, kinds, sim_options(a, cfg), out);
    const auto csv = comparison_csv(rows);
    write_file(out / "comparison.csv", csv);
    write_file(out / "comparison.json", comparison_json(rows).dump(2) + "\n");
    std::cout << csv;
    return kExitOk;
}

Gateway* g_gateway = nullptr;

void on_signal(int) {
    if (g_gateway) g_gateway->stop();
}

int cmd_serve(const std::string& config, std::optional<int> port, std::optional<double> tps,
              const std::string& runs_dir, const std::string& host) {
    Config cfg = config_for(config);
    if (port) cfg.port = *port;
    if (tps) cfg.ticks_per_second = *tps;
    if (!runs_dir.empty()) cfg.runs_dir = runs_dir;
    if (!host.empty()) cfg.host = host;
    Gateway gw(cfg);
    g_gateway = &gw;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "holonsim gateway on http://" << cfg.host << ":" << cfg.port << " (" << cfg.ticks_per_second
              << " ticks/s, reasoner " << cfg.reasoner << ")" << std::endl;
    const bool ok = gw.listen();
    g_gateway = nullptr;
    if (!ok) {
        std::cerr << "cannot listen on " << cfg.host << ":" << cfg.port << "\n";
        return kExitInput;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Holonic urban air mobility simulator"};
    app.require_subcommand(1);

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run a scenario headlessly and write artifacts");
    run->add_option("--scenario", ra.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", ra.seed, "Override the scenario seed");
    run->add_option("--strategy", ra.strategy, "facilitator|broker|matchmaker|mediator|holonic");
    run->add_option("--script", ra.script, "Scripted operator actions")->check(CLI::ExistingFile);
    run->add_option("--out", ra.out, "Output directory");
    run->add_option("--ticks-per-second", ra.ticks_per_second, "Wall-clock pacing, 0 = free-run")
        ->check(CLI::NonNegativeNumber);
    run->add_option("--reasoner", ra.reasoner, "mock|remote")->check(CLI::IsMember({"mock", "remote"}));
    run->add_option("--remote-url", ra.remote_url, "Remote reasoner endpoint");
    run->add_option("--config", ra.config, "holonsim.toml")->check(CLI::ExistingFile);
    run->add_option("--rules", ra.rules, "Validation rules JSON, replaces the scenario's")->check(CLI::ExistingFile);

    std::string log_path, tmpl, passenger = "c1";
    bool as_json = false;
    auto* verify = app.add_subcommand("verify", "Re-check log invariants");
    verify->add_option("log", log_path, "events.ndjson")->required();
    verify->add_option("--template", tmpl, "Sequence template (fig5)")->check(CLI::IsMember({"fig5"}));
    verify->add_option("--passenger", passenger, "Passenger whose conversation the template follows");
    verify->add_flag("--json", as_json, "Machine-readable report");

    RunArgs ca;
    ca.out = "compare";
    std::string strategies = "all";
    auto* compare = app.add_subcommand("compare", "Run one scenario under several coordination strategies");
    compare->add_option("--scenario", ca.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    compare->add_option("--strategies", strategies, "Comma-separated list or 'all'");
    compare->add_option("--seed", ca.seed, "Override the scenario seed");
    compare->add_option("--script", ca.script, "Scripted operator actions")->check(CLI::ExistingFile);
    compare->add_option("--out", ca.out, "Output directory");
    compare->add_option("--config", ca.config, "holonsim.toml")->check(CLI::ExistingFile);

    std::string serve_config, runs_dir, host;
    std::optional<int> port;
    std::optional<double> tps;
    auto* serve = app.add_subcommand("serve", "Start the HTTP gateway");
    serve->add_option("--config", serve_config, "holonsim.toml")->check(CLI::ExistingFile);
    serve->add_option("--port", port, "Listen port");
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--ticks-per-second", tps, "Default pacing for new runs")->check(CLI::NonNegativeNumber);
    serve->add_option("--runs-dir", runs_dir, "Where run logs are persisted");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*run) return cmd_run(ra);
        if (*verify) return cmd_verify(log_path, tmpl, passenger, as_json);
        if (*compare) return cmd_compare(ca, strategies);
        if (*serve) return cmd_serve(serve_config, port, tps, runs_dir, host);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitOk;
}
