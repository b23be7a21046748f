// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failed criteria (capped at 1 for ctest).
#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "holonsim/error.hpp"
#include "holonsim/simulation.hpp"
#include "holonsim/verifier.hpp"
#include "oracles.hpp"

using namespace holonsim;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Tolerances and fixture constants, pinned here.
constexpr double kFig5Seconds = 5.0;
constexpr double kDisruptionSeconds = 5.0;
constexpr double kRandomSeconds = 120.0;
constexpr double kOracleSeconds = 60.0;
constexpr int kRandomSeeds = 100;
constexpr int kDeterminismRuns = 20;
constexpr int kOracleGraphs = 200;
constexpr int kMatchSets = 200;
constexpr double kMultimodalRatio = 0.7;
constexpr Tick kFallbackSlack = 1;

// Golden coordination counts on ten-trips, frozen after the first verified
// run: conversations, total messages, middle hops, max single-agent load.
struct Golden {
    std::size_t conversations, total, middle, max_load;
};
const std::map<StrategyKind, Golden> kGolden = {
    {StrategyKind::facilitator, {22, 88, 88, 88}},
    {StrategyKind::broker, {22, 88, 44, 66}},
    {StrategyKind::matchmaker, {22, 110, 44, 110}},
    {StrategyKind::mediator, {22, 366, 366, 366}},
    {StrategyKind::holonic, {22, 132, 132, 88}},
};

const fs::path kScenarios = HOLONSIM_SCENARIO_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::unique_ptr<Simulation> run_file(const std::string& scenario, const std::string& script = "",
                                     StrategyKind strategy = StrategyKind::holonic) {
    SimOptions o;
    o.strategy = strategy;
    if (!script.empty()) o.script = load_script(kScenarios / script);
    auto sim = std::make_unique<Simulation>(load_scenario(kScenarios / scenario), std::move(o));
    sim->run();
    return sim;
}

std::vector<LogRecord> of_kind(const std::vector<LogRecord>& recs, const std::string& kind) {
    std::vector<LogRecord> out;
    for (const auto& r : recs)
        if (r.kind == kind) out.push_back(r);
    return out;
}

std::string join_problems(const std::vector<LogViolation>& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size() && i < 3; ++i) s << (i ? "; " : "") << v[i].check << ": " << v[i].message;
    return s.str();
}

Outcome fig5_replication() {
    const auto t0 = std::chrono::steady_clock::now();
    auto sim = run_file("fig5-demo.json", "fig5-approve.json");
    const auto recs = sim->log().records();
    auto rep = verify_log(recs);
    auto tmpl = check_template(recs, "fig5", "c1");
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = rep.ok() && tmpl.empty() && sim->violations().empty() && secs < kFig5Seconds;
    std::ostringstream d;
    d << recs.size() << " records, " << rep.violations.size() << " log violations, " << tmpl.size()
      << " template mismatches, " << secs << " s";
    if (!tmpl.empty()) d << " (" << join_problems(tmpl) << ")";
    o.detail = d.str();
    return o;
}

Outcome disruption_continuity() {
    const auto t0 = std::chrono::steady_clock::now();
    auto sim = run_file("fig5-demo.json", "fig5-disruption.json");
    const auto recs = sim->log().records();
    Outcome o;
    auto fail = [&](const std::string& why) {
        o.pass = false;
        o.detail = why;
        return o;
    };

    std::optional<std::uint64_t> blocked_seq;
    std::size_t traversed_before_block = 0;
    for (const auto& r : recs) {
        if (r.kind != "status" || r.payload.value("revision", -1) != 0) continue;
        if (r.payload["kind"] == "leg_blocked") {
            blocked_seq = r.seq;
            break;
        }
        if (r.payload["kind"] == "leg_progress") traversed_before_block = r.payload["detail"]["traversed"].get<std::size_t>();
    }
    if (!blocked_seq) return fail("no leg_blocked");

    std::optional<Plan> original, revised;
    std::uint64_t revised_seq = 0;
    for (const auto& r : of_kind(recs, "plan_activated")) {
        Plan p = r.payload.at("plan").get<Plan>();
        if (p.revision == 0 && !original) original = p;
        if (p.revision == 1 && r.seq > *blocked_seq && !revised) {
            revised = p;
            revised_seq = r.seq;
        }
    }
    if (!original || !revised) return fail("missing revision 0 or revision 1 activation");

    const auto specs = of_kind(recs, "task_spec");
    if (specs.empty()) return fail("no task_spec");
    const TaskSpec spec = specs.front().payload.at("spec").get<TaskSpec>();
    auto problems = plan_structure_problems(*revised, spec, sim->scenario().graph ? *sim->scenario().graph : CityGraph{});
    if (!problems.empty()) return fail("revision 1 breaks plan invariants: " + problems.front());

    // The traversed part of the blocked leg survives as the completed prefix.
    std::vector<std::string> done_edges;
    for (const auto& l : revised->legs)
        if (l.state == LegState::completed) done_edges.insert(done_edges.end(), l.route.edges.begin(), l.route.edges.end());
    std::vector<std::string> original_edges;
    for (const auto& l : original->legs) original_edges.insert(original_edges.end(), l.route.edges.begin(), l.route.edges.end());
    if (done_edges.size() != traversed_before_block ||
        !std::equal(done_edges.begin(), done_edges.end(), original_edges.begin()))
        return fail("completed prefix not preserved");

    bool completed = false;
    for (const auto& r : of_kind(recs, "trip_completed"))
        if (r.seq > revised_seq) completed = true;
    if (!completed) return fail("trip did not complete after revision");
    const auto rep = verify_log(recs);
    const double secs = seconds_since(t0);
    if (!rep.ok()) return fail("log violations: " + join_problems(rep.violations));
    if (secs >= kDisruptionSeconds) return fail("too slow");
    std::ostringstream d;
    d << "blocked at seq " << *blocked_seq << ", prefix " << done_edges.size() << " edges kept, revision 1 "
      << revised->legs.size() << " legs, completed at tick " << sim->trips().begin()->second.finished_at.value_or(-1)
      << ", " << secs << " s";
    o.detail = d.str();
    return o;
}

// Independent re-check of gate totality over one log: every air
// leg_started must follow a cleared or fallback_activated outcome for the
// same plan revision.
std::size_t ungated_air_starts(const std::vector<LogRecord>& recs, std::size_t& air_starts) {
    std::set<std::pair<std::string, int>> cleared;
    std::size_t bad = 0;
    for (const auto& r : recs) {
        if (r.kind == "gate_outcome" && r.payload["outcome"] != "rejected")
            cleared.insert({r.payload["plan_id"].get<std::string>(), r.payload["revision"].get<int>()});
        if (r.kind == "status" && r.payload["kind"] == "leg_started" && r.payload["detail"].value("mode", "") == "air_taxi") {
            ++air_starts;
            if (!cleared.count({r.payload["plan"].get<std::string>(), r.payload["revision"].get<int>()})) ++bad;
        }
    }
    return bad;
}

Outcome gate_totality() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t air_starts = 0, ungated = 0, high = 0, timely = 0, verify_fail = 0;
    for (int seed = 1; seed <= kRandomSeeds; ++seed) {
        // Silent operator: every high-risk approval must fall back.
        {
            Simulation sim(parse_scenario(random_scenario(seed)));
            sim.run();
            const auto recs = sim.log().records();
            ungated += ungated_air_starts(recs, air_starts);
            if (!verify_log(recs).ok() || !sim.violations().empty()) ++verify_fail;
            std::map<std::string, Tick> activated;
            for (const auto& r : of_kind(recs, "gate_outcome"))
                if (r.payload["outcome"] == "fallback_activated") activated[r.payload["approval_id"]] = r.tick;
            for (const auto& [id, a] : sim.approvals()) {
                if (a.risk_class != RiskClass::high || a.withdrawn) continue;
                ++high;
                auto it = activated.find(id);
                if (it != activated.end() && it->second >= a.timeout_at && it->second <= a.timeout_at + kFallbackSlack)
                    ++timely;
            }
        }
        // Attentive operator: air legs actually start, and each must be gated.
        {
            Simulation sim(parse_scenario(random_scenario(seed)));
            std::size_t n = 0;
            while (sim.step())
                for (const auto& a : sim.pending_approvals()) {
                    OperatorCommand c;
                    c.id = "auto-" + std::to_string(++n);
                    c.kind = CommandKind::approve;
                    c.payload = {{"approval_id", a.approval_id}};
                    sim.submit_command(c);
                }
            const auto recs = sim.log().records();
            ungated += ungated_air_starts(recs, air_starts);
            if (!verify_log(recs).ok() || !sim.violations().empty()) ++verify_fail;
        }
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = ungated == 0 && verify_fail == 0 && high > 0 && timely == high && secs < kRandomSeconds;
    std::ostringstream d;
    d << air_starts << " air starts, " << ungated << " ungated, fallback on time " << timely << "/" << high
      << ", " << verify_fail << " runs with violations, " << secs << " s";
    o.detail = d.str();
    return o;
}

Outcome determinism() {
    struct Case {
        std::function<std::unique_ptr<Simulation>()> make;
    };
    std::vector<Case> cases;
    const std::vector<std::pair<std::string, std::string>> files = {
        {"fig5-demo.json", ""},          {"fig5-demo.json", "fig5-approve.json"},
        {"fig5-demo.json", "fig5-disruption.json"}, {"congested-core.json", ""},
        {"congested-core.json", "congested-core-approve.json"}, {"ten-trips.json", ""}};
    for (const auto& [s, sc] : files) cases.push_back({[s = s, sc = sc] { return run_file(s, sc); }});
    for (std::uint64_t seed = 1; cases.size() < kDeterminismRuns; ++seed)
        cases.push_back({[seed] {
            auto sim = std::make_unique<Simulation>(parse_scenario(random_scenario(seed * 7919)));
            sim->run();
            return sim;
        }});
    int same = 0;
    for (auto& c : cases) {
        auto a = c.make();
        auto b = c.make();
        if (a->log().hash() == b->log().hash() && a->log().text() == b->log().text()) ++same;
    }
    Outcome o;
    o.pass = same == kDeterminismRuns;
    o.detail = std::to_string(same) + "/" + std::to_string(kDeterminismRuns) + " identical";
    return o;
}

Outcome routing_planning_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t routes = 0, route_bad = 0, plans = 0, plan_bad = 0;
    std::string first_bad;
    for (int g = 0; g < kOracleGraphs; ++g) {
        const auto gc = oracle::random_graph(1000 + g, 8);
        const auto& graph = *gc.graph;
        const std::vector<RouteOptions> opts = [] {
            RouteOptions a, gr, ar, turb;
            gr.modes = ModeSet::ground_only();
            ar.modes = ModeSet::air_only();
            turb.avoid_turbulence = true;
            return std::vector<RouteOptions>{a, gr, ar, turb};
        }();
        for (const auto& from : graph.nodes())
            for (const auto& to : graph.nodes())
                for (const auto& opt : opts) {
                    ++routes;
                    const auto want = oracle::best_path_time(graph, from.id, to.id, gc.active, opt);
                    const auto got = try_shortest_route(graph, from.id, to.id, gc.active, opt);
                    bool ok = want.has_value() == got.has_value();
                    if (ok && got)
                        ok = got->total_time == *want &&
                             oracle::replay_route(graph, *got, from.id, to.id, gc.active, opt) == want;
                    if (!ok) {
                        ++route_bad;
                        if (first_bad.empty()) first_bad = "route graph " + std::to_string(g) + " " + from.id + ">" + to.id;
                    }
                }

        ReasonerContext ctx;
        ctx.graph = gc.graph;
        ctx.disruptions = gc.active;
        for (const auto& from : graph.nodes())
            for (const auto& to : graph.nodes()) {
                if (from.id == to.id) continue;
                for (int variant = 0; variant < 2; ++variant) {
                    TaskSpec spec;
                    spec.request_id = "R1";
                    spec.origin = from.id;
                    spec.destination = to.id;
                    if (variant == 1) spec.constraints.push_back({ConstraintKind::avoid_turbulence, std::nullopt});
                    ++plans;
                    const auto want = oracle::best_plan(spec, graph, gc.active);
                    std::optional<Plan> got;
                    try {
                        got = generate_plan(spec, ctx);
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::NoFeasiblePlan) throw;
                    }
                    bool ok = want.has_value() == got.has_value();
                    if (ok && got) ok = oracle::signature(got->legs) == want->signature && got->estimated_time() == want->total;
                    if (!ok) {
                        ++plan_bad;
                        if (first_bad.empty()) first_bad = "plan graph " + std::to_string(g) + " " + from.id + ">" + to.id;
                    }
                }
            }
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = route_bad == 0 && plan_bad == 0 && secs < kOracleSeconds;
    std::ostringstream d;
    d << "routes " << routes - route_bad << "/" << routes << ", plans " << plans - plan_bad << "/" << plans << ", "
      << secs << " s";
    if (!first_bad.empty()) d << " (first mismatch: " << first_bad << ")";
    o.detail = d.str();
    return o;
}

Outcome matching_oracle() {
    std::size_t sets = 0, agree = 0, invariant = 0, checks = 0;
    for (std::uint64_t seed = 1; sets < kMatchSets; ++seed) {
        const auto mc = oracle::random_match_case(seed, 20);
        if (!mc) continue;
        ++sets;
        const auto want = oracle::best_resource(mc->leg, mc->candidates, *mc->graph.graph, mc->graph.active);
        std::optional<std::string> got;
        try {
            got = match_resources(mc->leg, mc->candidates, *mc->graph.graph, mc->graph.active).resource_id;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoCandidate) throw;
        }
        if (got == want) ++agree;

        const auto scores = score_candidates(mc->leg, mc->candidates, *mc->graph.graph, mc->graph.active);
        const auto base = select_best(scores);
        for (double k : {0.5, 2.0, 10.0}) {
            ++checks;
            auto scaled = scores;
            for (auto& s : scaled) s.distance *= k;
            if (select_best(scaled) == base) ++invariant;
        }
    }
    Outcome o;
    o.pass = agree == sets && invariant == checks;
    o.detail = "argmax " + std::to_string(agree) + "/" + std::to_string(sets) + ", scaling invariance " +
               std::to_string(invariant) + "/" + std::to_string(checks);
    return o;
}

Outcome federation_conformance() {
    Outcome o;
    std::ostringstream d;
    for (StrategyKind kind : all_strategies()) {
        auto sim = run_file("ten-trips.json", "", kind);
        const auto& fed = sim->federation();
        const auto middle = fed.middle_agents();
        std::size_t bad = 0;
        for (const auto& t : fed.transcripts())
            if (!conforms(kind, t, middle)) ++bad;
        const auto& m = fed.metrics();
        bool ok = bad == 0 && m.failed_conversations == 0 && !fed.transcripts().empty();
        if (kind == StrategyKind::facilitator) ok = ok && m.max_single_agent_load == m.total_messages;
        if (kind == StrategyKind::matchmaker) ok = ok && m.middle_hops == 2 * m.conversations;
        const Golden& g = kGolden.at(kind);
        const bool golden = g.conversations == m.conversations && g.total == m.total_messages &&
                            g.middle == m.middle_hops && g.max_load == m.max_single_agent_load;
        ok = ok && golden;
        o.pass = o.pass && ok;
        d << enum_name(kind) << "(" << m.conversations << "," << m.total_messages << "," << m.middle_hops << ","
          << m.max_single_agent_load << (bad ? ",nonconforming" : "") << (golden ? "" : ",golden-mismatch") << ") ";
    }
    o.detail = d.str();
    return o;
}

Outcome multimodal_benefit() {
    auto air = run_file("congested-core.json", "congested-core-approve.json");
    auto ground = run_file("congested-core.json");
    Outcome o;
    const auto air_recs = air->log().records();
    const auto ground_recs = ground->log().records();
    // Air: request to arrival. Ground: the fallback plan's own travel, from
    // activation to arrival, so the approval wait is not charged to it.
    std::optional<Tick> air_requested, air_done, fb_start, fb_done;
    bool air_used = false;
    for (const auto& r : air_recs) {
        if (r.kind == "trip_requested" && !air_requested) air_requested = r.tick;
        if (r.kind == "trip_completed") air_done = r.tick;
        if (r.kind == "status" && r.payload["kind"] == "leg_started" && r.payload["detail"].value("mode", "") == "air_taxi")
            air_used = true;
    }
    for (const auto& r : ground_recs) {
        if (r.kind == "gate_outcome" && r.payload["outcome"] == "fallback_activated" && !fb_start) fb_start = r.tick;
        if (r.kind == "trip_completed") fb_done = r.tick;
    }
    if (!air_requested || !air_done || !fb_start || !fb_done || !air_used) {
        o.pass = false;
        o.detail = "runs did not take the expected paths";
        return o;
    }
    const double a = static_cast<double>(*air_done - *air_requested);
    const double g = static_cast<double>(*fb_done - *fb_start);
    const double ratio = a / g;
    o.pass = ratio <= kMultimodalRatio;
    std::ostringstream d;
    d << "air " << a << " ticks, ground fallback " << g << " ticks, ratio " << ratio << " (limit " << kMultimodalRatio
      << ")";
    o.detail = d.str();
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"fig5 sequence replication", fig5_replication},
        {"disruption replan continuity", disruption_continuity},
        {"safety gate totality and fallback", gate_totality},
        {"determinism", determinism},
        {"routing and planning oracles", routing_planning_oracles},
        {"resource matching oracle", matching_oracle},
        {"federation topology conformance", federation_conformance},
        {"multimodal benefit sanity", multimodal_benefit},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
