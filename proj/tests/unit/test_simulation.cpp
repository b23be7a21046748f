#include <doctest.h>

#include <algorithm>

#include "holonsim/error.hpp"
#include "holonsim/simulation.hpp"
#include "holonsim/verifier.hpp"

using namespace holonsim;
using json = nlohmann::json;

namespace {

const std::filesystem::path kScenarios = HOLONSIM_SCENARIO_DIR;

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::ConfigError;
}

std::string detail_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.detail();
    }
    return "";
}

Scenario fig5() { return load_scenario(kScenarios / "fig5-demo.json"); }

OperatorCommand cmd(const json& doc) { return parse_command(doc); }

std::vector<LogRecord> kinds(const Simulation& s, const std::string& kind) {
    std::vector<LogRecord> out;
    for (const auto& r : s.log().records())
        if (r.kind == kind) out.push_back(r);
    return out;
}

// Runs until the first approval shows up.
std::string first_approval(Simulation& sim) {
    while (sim.pending_approvals().empty() && sim.step()) {
    }
    REQUIRE_FALSE(sim.pending_approvals().empty());
    return sim.pending_approvals().front().approval_id;
}

}  // namespace

TEST_CASE("scenario parsing reports the offending field path") {
    json doc = fig5().source;
    CHECK(parse_scenario(doc).graph->nodes().size() == doc["graph"]["nodes"].size());

    json bad = doc;
    bad["graph"]["edges"][0]["to"] = "nowhere";
    CHECK(detail_of([&] { parse_scenario(bad); }).rfind("$.graph.edges[0]", 0) == 0);
    bad = doc;
    bad["resources"][0]["battery"] = 140;
    CHECK(code_of([&] { parse_scenario(bad); }) == ErrorCode::SchemaError);
    CHECK(detail_of([&] { parse_scenario(bad); }).rfind("$.resources[0]", 0) == 0);
    bad = doc;
    bad["graph"].erase("nodes");
    CHECK(detail_of([&] { parse_scenario(bad); }).rfind("$.graph.nodes", 0) == 0);
}

TEST_CASE("commands and scripts parse strictly") {
    const auto c = cmd({{"kind", "approve"}, {"approval_id", "A1"}});
    CHECK(c.kind == CommandKind::approve);
    CHECK(c.payload == json{{"approval_id", "A1"}});
    CHECK(cmd({{"kind", "override"}, {"payload", {{"approval_id", "A1"}, {"plan", json::object()}}}}).kind ==
          CommandKind::override_plan);
    CHECK(code_of([] { parse_command({{"kind", "dance"}}); }) == ErrorCode::InvalidCommand);
    CHECK(code_of([] { parse_command({{"kind", "approve"}}); }) == ErrorCode::InvalidCommand);
    CHECK(code_of([] { parse_command(json::array()); }) == ErrorCode::InvalidCommand);

    const auto script = parse_script(json::array({{{"at_tick", 5}, {"kind", "pause"}},
                                                  {{"at_tick", 1}, {"kind", "approve"}, {"approval_id", "A1"}}}));
    REQUIRE(script.size() == 2);
    CHECK(script[0].at_tick == 1);
    CHECK(script[0].command.id == "script-2");
    CHECK(detail_of([] { parse_script(json::array({{{"at_tick", 1}, {"kind", "nope"}}})); }).rfind("$[0]", 0) == 0);
    CHECK(detail_of([] { parse_script(json::array({{{"at_tick", -1}, {"kind", "pause"}}})); }).rfind("$[0].at_tick", 0) == 0);
}

TEST_CASE("random scenarios are a pure function of the seed") {
    for (std::uint64_t s : {1u, 2u, 77u}) {
        CHECK(random_scenario(s) == random_scenario(s));
        CHECK_NOTHROW(parse_scenario(random_scenario(s)));
    }
    CHECK(random_scenario(1) != random_scenario(2));
}

TEST_CASE("approval within the timeout clears the gate") {
    SimOptions o;
    o.script = load_script(kScenarios / "fig5-approve.json");
    Simulation sim(fig5(), o);
    sim.run();
    const auto m = sim.metrics();
    CHECK(m.trips_completed == 1);
    CHECK(m.approvals_approved == 1);
    CHECK(m.fallbacks_activated == 0);
    const auto outcomes = kinds(sim, "gate_outcome");
    REQUIRE(outcomes.size() == 1);
    CHECK(outcomes[0].payload["outcome"] == "cleared");
    CHECK(sim.violations().empty());
    CHECK(sim.world().check_invariants().empty());
    CHECK(verify_log(sim.log().records()).ok());
    CHECK(check_template(sim.log().records(), "fig5", "c1").empty());
}

TEST_CASE("a silent operator gets the fallback at timeout") {
    Simulation sim(fig5());
    sim.run();
    const auto& a = sim.approvals().at("A1");
    CHECK(a.fallback_activated);
    const auto outcomes = kinds(sim, "gate_outcome");
    REQUIRE(outcomes.size() == 1);
    CHECK(outcomes[0].payload["outcome"] == "fallback_activated");
    CHECK(outcomes[0].tick >= a.timeout_at);
    CHECK(outcomes[0].tick <= a.timeout_at + 1);
    const auto& trip = sim.trips().begin()->second;
    CHECK(trip.phase == TripPhase::completed);
    REQUIRE(trip.plan);
    CHECK(trip.plan->fallback);
    CHECK_FALSE(trip.plan->has_air_leg());
    // No air leg ever starts.
    for (const auto& r : kinds(sim, "status")) CHECK(r.payload["detail"].value("mode", "") != "air_taxi");
}

TEST_CASE("rejection aborts the trip") {
    Simulation sim(fig5());
    const auto aid = first_approval(sim);
    sim.submit_command(cmd({{"kind", "reject"}, {"approval_id", aid}}));
    sim.run();
    CHECK(sim.metrics().approvals_rejected == 1);
    CHECK(sim.trips().begin()->second.phase == TripPhase::aborted);
    CHECK(verify_log(sim.log().records()).ok());
}

TEST_CASE("override validates the replacement plan") {
    Simulation sim(fig5());
    const auto aid = first_approval(sim);
    const auto pending = sim.pending_approvals().front();
    REQUIRE(pending.fallback_plan);
    CHECK(code_of([&] { sim.submit_command(cmd({{"kind", "approve"}, {"approval_id", "A99"}})); }) ==
          ErrorCode::UnknownApproval);
    json empty_plan = *pending.fallback_plan;
    empty_plan["legs"] = json::array();
    CHECK(code_of([&] {
              sim.submit_command(cmd({{"kind", "override"}, {"approval_id", aid}, {"plan", empty_plan}}));
          }) == ErrorCode::InvalidOverridePlan);
    CHECK(code_of([&] {
              sim.submit_command(cmd({{"kind", "override"}, {"approval_id", aid}, {"plan", "not a plan"}}));
          }) == ErrorCode::InvalidOverridePlan);

    sim.submit_command(cmd({{"kind", "override"}, {"approval_id", aid}, {"plan", *pending.fallback_plan}}));
    sim.run();
    CHECK(sim.metrics().approvals_overridden == 1);
    const auto& trip = sim.trips().begin()->second;
    CHECK(trip.phase == TripPhase::completed);
    CHECK_FALSE(trip.plan->has_air_leg());
    CHECK(verify_log(sim.log().records()).ok());
}

TEST_CASE("low-risk ground plans skip the human step") {
    json doc = fig5().source;
    doc["passengers"][0]["requests"][0]["text"] = "ground only, from X to Y";
    Simulation sim(parse_scenario(doc));
    sim.run();
    const auto steps = kinds(sim, "gate_step");
    REQUIRE(steps.size() == 3);
    CHECK(steps[2].payload["skipped"] == true);
    CHECK(sim.metrics().approvals_requested == 0);
    CHECK(sim.metrics().trips_completed == 1);
}

TEST_CASE("input validation rejects unknown targets") {
    Simulation sim(fig5());
    CHECK(code_of([&] { sim.submit_trip("nobody", "to Y"); }) == ErrorCode::UnknownPassenger);
    CHECK(code_of([&] {
              sim.submit_command(cmd({{"kind", "passenger_message"}, {"passenger", "ghost"}, {"text", "hi"}}));
          }) == ErrorCode::UnknownPassenger);
    CHECK(code_of([&] {
              sim.submit_command(cmd({{"kind", "inject_disruption"},
                                      {"disruption", {{"id", "x"}, {"kind", "edge_blocked"}, {"targets", {"nope"}}}}}));
          }) == ErrorCode::UnknownTarget);
    const json d{{"id", "x"}, {"kind", "edge_blocked"}, {"targets", {"X-A"}}, {"activation", 50}};
    sim.submit_command(cmd({{"kind", "inject_disruption"}, {"disruption", d}}));
    CHECK(code_of([&] { sim.submit_command(cmd({{"kind", "inject_disruption"}, {"disruption", d}})); }) ==
          ErrorCode::DuplicateDisruption);
    sim.run();
    CHECK(code_of([&] { sim.submit_command(cmd({{"kind", "pause"}})); }) == ErrorCode::InvalidCommand);
}

TEST_CASE("a passenger can cancel mid-approval") {
    Simulation sim(fig5());
    const auto aid = first_approval(sim);
    sim.submit_command(cmd({{"kind", "passenger_message"}, {"passenger", "c1"}, {"text", "please cancel my trip"}}));
    sim.run();
    CHECK(sim.trips().begin()->second.phase == TripPhase::aborted);
    CHECK(sim.approvals().at(aid).withdrawn);
    CHECK(verify_log(sim.log().records()).ok());
}

TEST_CASE("trips submitted at runtime are planned and served") {
    SimOptions o;
    o.stop_when_idle = false;
    Scenario sc = fig5();
    sc.max_ticks = 80;
    Simulation sim(std::move(sc), o);
    for (int i = 0; i < 3; ++i) sim.step();
    const auto rid = sim.submit_trip("c1", "ground only from E to F");
    sim.run();
    CHECK(sim.finish_reason() == "max_ticks");
    CHECK(sim.trips().at(rid).phase == TripPhase::completed);
}

TEST_CASE("identical inputs give byte-identical logs") {
    auto once = [] {
        SimOptions o;
        o.script = load_script(kScenarios / "fig5-disruption.json");
        Simulation sim(fig5(), o);
        sim.run();
        return sim.log().text();
    };
    CHECK(once() == once());
}

TEST_CASE("strategy comparison runs identical inputs") {
    const auto rows = run_comparison(load_scenario(kScenarios / "ten-trips.json"), all_strategies());
    REQUIRE(rows.size() == 5);
    for (const auto& r : rows) {
        CHECK(r.run.trips_completed == rows[0].run.trips_completed);
        CHECK(r.metrics.conversations == rows[0].metrics.conversations);
        CHECK(r.metrics.failed_conversations == 0);
    }
    const auto csv = comparison_csv(rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK(comparison_json(rows).size() == 5);
}

TEST_CASE("killing the middle agent degrades discovery but not the log") {
    SimOptions o;
    o.strategy = StrategyKind::facilitator;
    o.kill_middle_after_hop = 6;
    Simulation sim(load_scenario(kScenarios / "ten-trips.json"), o);
    sim.run();
    CHECK(sim.coordination().failed_conversations > 0);
    CHECK(verify_log(sim.log().records()).ok());
    CHECK(sim.violations().empty());
}

// ---- verifier ----

namespace {

std::vector<LogRecord> approved_fig5() {
    SimOptions o;
    o.script = load_script(kScenarios / "fig5-approve.json");
    Simulation sim(fig5(), o);
    sim.run();
    return sim.log().records();
}

std::vector<LogRecord> renumber(std::vector<LogRecord> recs) {
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].seq = i;
    return recs;
}

bool has_check(const VerifyReport& r, const std::string& check) {
    return std::any_of(r.violations.begin(), r.violations.end(), [&](const LogViolation& v) { return v.check == check; });
}

}  // namespace

TEST_CASE("verifier catches an air leg without a gate outcome") {
    auto recs = approved_fig5();
    recs.erase(std::remove_if(recs.begin(), recs.end(), [](const LogRecord& r) { return r.kind == "gate_outcome"; }),
               recs.end());
    const auto rep = verify_log(renumber(recs));
    CHECK_FALSE(rep.ok());
    CHECK(has_check(rep, "gate_totality"));
}

TEST_CASE("verifier catches out-of-order gate steps and legs") {
    auto recs = approved_fig5();
    auto s1 = std::find_if(recs.begin(), recs.end(), [](const LogRecord& r) { return r.kind == "gate_step"; });
    REQUIRE(s1 != recs.end());
    std::iter_swap(s1, s1 + 1);
    CHECK(has_check(verify_log(renumber(recs)), "gate_ordering"));

    recs = approved_fig5();
    // Start T_a3 before T_a1 by swapping their leg ids on the first starts.
    std::vector<LogRecord*> starts;
    for (auto& r : recs)
        if (r.kind == "status" && r.payload["kind"] == "leg_started") starts.push_back(&r);
    REQUIRE(starts.size() == 3);
    std::swap(starts[0]->payload["leg"], starts[2]->payload["leg"]);
    CHECK(has_check(verify_log(recs), "status_discipline"));
}

TEST_CASE("verifier catches format damage") {
    auto recs = approved_fig5();
    recs.erase(recs.begin() + 5);
    CHECK(has_check(verify_log(recs), "log_format"));
    recs = approved_fig5();
    recs[10].tick = 99;
    CHECK(has_check(verify_log(recs), "log_format"));
    const auto rep = verify_text("{\"tick\":0,\"seq\":0,\"kind\":\"x\",\"payload\":{}}\nnot json\n");
    CHECK(has_check(rep, "log_format"));
}

TEST_CASE("verifier catches a late fallback") {
    Simulation sim(fig5());
    sim.run();
    auto recs = sim.log().records();
    for (auto& r : recs)
        if (r.kind == "gate_outcome") r.payload["outcome"] = "cleared";
    // Nothing resolved the approval by timeout_at + 1.
    CHECK(has_check(verify_log(recs), "fallback_timeliness"));
}

TEST_CASE("template matching is specific") {
    auto recs = approved_fig5();
    CHECK(check_template(recs, "fig5", "c1").empty());
    CHECK_FALSE(check_template(recs, "fig5", "c9").empty());
    recs.erase(std::remove_if(recs.begin(), recs.end(),
                              [](const LogRecord& r) {
                                  return r.kind == "message" && r.payload.value("kind", "") == "command";
                              }),
               recs.end());
    CHECK_FALSE(check_template(recs, "fig5", "c1").empty());
    CHECK(code_of([&] { check_template(recs, "fig6", "c1"); }) == ErrorCode::ConfigError);
}

TEST_CASE("verify report renders") {
    const auto rep = verify_log(approved_fig5());
    CHECK(rep.ok());
    CHECK(rep.records > 100);
    CHECK(rep.to_json()["violations"].empty());
    CHECK(rep.hash.size() == 64);
}
