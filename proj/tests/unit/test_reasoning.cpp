#include <doctest.h>

#include "holonsim/error.hpp"
#include "holonsim/reasoner.hpp"
#include "holonsim/simulation.hpp"
#include "oracles.hpp"

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

std::string clarification(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NeedsClarification) return e.detail();
    }
    return "";
}

ReasonerContext fig5_context() {
    Simulation sim(load_scenario(kScenarios / "fig5-demo.json"));
    auto ctx = sim.context();
    ctx.passenger_locations["S-SoS/c1"] = "X";
    return ctx;
}

const HolonId kC1 = HolonId::parse("S-SoS/c1");

class BrokenBackend : public Reasoner {
public:
    std::string id() const override { return "broken"; }
    json call(const Prompt&) override { throw Error(ErrorCode::BackendUnavailable, "down"); }
};

class SloppyBackend : public Reasoner {
public:
    std::string id() const override { return "sloppy"; }
    json call(const Prompt&) override { return {{"nonsense", true}}; }
};

}  // namespace

TEST_CASE("requests resolve endpoints and constraints") {
    const auto ctx = fig5_context();
    auto s = parse_request("ride from X to Y", ctx, "R1", kC1);
    CHECK(s.origin == "X");
    CHECK(s.destination == "Y");
    CHECK(s.constraints.empty());

    s = parse_request("take me to Y avoiding turbulence, within 20 ticks, in 3 ticks", ctx, "R2", kC1);
    CHECK(s.origin == "X");
    CHECK(s.has(ConstraintKind::avoid_turbulence));
    CHECK(s.max_cost() == 20);
    CHECK(s.earliest_departure == ctx.tick + 3);

    s = parse_request("ground only please, from A to F", ctx, "R3", kC1);
    CHECK(s.origin == "A");
    CHECK(s.destination == "F");
    CHECK(s.has(ConstraintKind::ground_only));

    CHECK(clarification([&] { parse_request("", ctx, "R", kC1); }) == "empty_utterance");
    CHECK(clarification([&] { parse_request("somewhere nice", ctx, "R", kC1); }) == "unresolved_destination");
    CHECK(clarification([&] { parse_request("from X to X", ctx, "R", kC1); }) == "same_origin_destination");
    CHECK(clarification([&] { parse_request("to Y by air, ground only", ctx, "R", kC1); }) ==
          "contradictory_constraints");
}

TEST_CASE("passenger updates map to schedule adjustments") {
    const auto ctx = fig5_context();
    CHECK(interpret_update("please cancel", ctx, "R1").kind == AdjustmentKind::cancel);
    CHECK(interpret_update("this is urgent", ctx, "R1").kind == AdjustmentKind::reprioritize);
    auto a = interpret_update("running late by 4", ctx, "R1");
    CHECK(a.kind == AdjustmentKind::delay_departure);
    CHECK(a.magnitude == 4);
    CHECK(interpret_update("I'll be late", ctx, "R1").magnitude == kDefaultDelayTicks);
    CHECK(interpret_update("can we go earlier by 2", ctx, "R1").kind == AdjustmentKind::advance_departure);
    CHECK(clarification([&] { interpret_update("what a lovely day", ctx, "R1"); }) == "no_rule_matched");
}

TEST_CASE("the bundled city yields the three-leg air plan") {
    const auto ctx = fig5_context();
    const auto spec = parse_request("ride from X to Y", ctx, "R1", kC1);
    const Plan p = generate_plan(spec, ctx);
    REQUIRE(p.legs.size() == 3);
    CHECK(p.legs[0].leg_id == "T_a1");
    CHECK(p.legs[1].mode == LegMode::air_taxi);
    CHECK(p.legs[2].leg_id == "T_a3");
    CHECK(p.has_air_leg());
    CHECK(plan_structure_problems(p, spec, *ctx.graph).empty());
    CHECK(validate_plan(p, RuleSet::defaults(), ctx).ok());

    TaskSpec ground = spec;
    ground.constraints.push_back({ConstraintKind::ground_only, std::nullopt});
    const Plan g = generate_plan(ground, ctx);
    CHECK_FALSE(g.has_air_leg());
    CHECK(g.estimated_time() >= p.estimated_time());

    TaskSpec tight = spec;
    tight.constraints.push_back({ConstraintKind::max_cost, Tick{1}});
    CHECK(code_of([&] { generate_plan(tight, ctx); }) == ErrorCode::NoFeasiblePlan);
}

TEST_CASE("generate_plan picks the exhaustive optimum on random graphs") {
    int compared = 0;
    for (std::uint64_t seed = 500; seed < 560; ++seed) {
        const auto gc = oracle::random_graph(seed, 8);
        ReasonerContext ctx;
        ctx.graph = gc.graph;
        ctx.disruptions = gc.active;
        for (const auto& a : gc.graph->nodes())
            for (const auto& b : gc.graph->nodes()) {
                if (a.id == b.id) continue;
                TaskSpec spec;
                spec.request_id = "R1";
                spec.origin = a.id;
                spec.destination = b.id;
                const auto want = oracle::best_plan(spec, *gc.graph, gc.active);
                if (!want) {
                    CHECK(code_of([&] { generate_plan(spec, ctx); }) == ErrorCode::NoFeasiblePlan);
                    continue;
                }
                const Plan got = generate_plan(spec, ctx);
                CHECK(oracle::signature(got.legs) == want->signature);
                CHECK(got.estimated_time() == want->total);
                CHECK(leg_chain_problems(got, *gc.graph).empty());
                ++compared;
            }
    }
    CHECK(compared > 100);
}

TEST_CASE("modal candidates come back best first") {
    const auto ctx = fig5_context();
    const auto spec = parse_request("ride from X to Y", ctx, "R1", kC1);
    const auto c = enumerate_modal_plans(spec, ctx, "X", 0);
    REQUIRE(c.size() > 1);
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i - 1].total_time <= c[i].total_time);
    CHECK(enumerate_modal_plans(spec, ctx, "X", 0, {true, false}).size() == 1);
}

TEST_CASE("validation flags each rule") {
    auto ctx = fig5_context();
    const auto spec = parse_request("ride from X to Y", ctx, "R1", kC1);
    Plan p = generate_plan(spec, ctx);
    const std::string from_port = p.legs[1].origin;

    auto rules_hit = [&](const Plan& plan, const ReasonerContext& c, const RuleSet& rs = RuleSet::defaults()) {
        std::set<std::string> out;
        for (const auto& v : validate_plan(plan, rs, c).violations) out.insert(v.rule);
        return out;
    };

    ReasonerContext nofly = ctx;
    nofly.disruptions.push_back({"nf", DisruptionKind::no_fly_zone, {from_port}, 0, std::nullopt, 1.0});
    CHECK(rules_hit(p, nofly).count("no_fly_zone"));
    ReasonerContext closed = ctx;
    closed.disruptions.push_back({"vc", DisruptionKind::vertiport_closed, {from_port}, 0, std::nullopt, 1.0});
    CHECK(rules_hit(p, closed).count("vertiport_closed"));

    ReasonerContext busy = ctx;
    const int cap = ctx.graph->node(from_port).capacity.value_or(1);
    for (int i = 0; i < cap; ++i)
        busy.reservations.push_back({from_port, "P-other" + std::to_string(i), "T_a2", 0, 1000});
    CHECK(rules_hit(p, busy).count("vertiport_capacity"));

    Plan drained = p;
    drained.legs[1].assigned_resource = "airtaxi-1";
    ReasonerContext flat = ctx;
    flat.resources.at("airtaxi-1").battery = 1;
    CHECK(rules_hit(drained, flat).count("battery_insufficient"));
    // Disabling the rule silences it.
    const auto lax = RuleSet::from_json({{"rules", {{{"id", "battery_insufficient"}, {"enabled", false}}}}});
    CHECK_FALSE(rules_hit(drained, flat, lax).count("battery_insufficient"));

    Plan overlap = p;
    overlap.legs[0].assigned_resource = "scooter-1";
    overlap.legs[2].assigned_resource = "scooter-1";
    overlap.legs[2].planned_start = overlap.legs[0].planned_start;
    CHECK(rules_hit(overlap, ctx).count("resource_overlap"));

    Plan broken = p;
    broken.legs[2].origin = "A";
    CHECK(rules_hit(broken, ctx).count("plan_structure"));

    CHECK(code_of([] { RuleSet::from_json({{"rules", {{{"id", "made_up"}}}}}); }) == ErrorCode::SchemaError);
}

TEST_CASE("revision keeps the completed prefix and reroutes around a block") {
    auto ctx = fig5_context();
    const auto spec = parse_request("ride from X to Y", ctx, "R1", kC1);
    Plan p = generate_plan(spec, ctx);
    p.legs[0].assigned_resource = "scooter-1";
    REQUIRE(p.legs[0].route.edges.size() >= 2);

    // Passenger has covered the first edge of T_a1 when its next edge blocks.
    TripProgress prog;
    prog.current_leg = 0;
    prog.traversed_edges = 1;
    prog.location = p.legs[0].route.nodes[1];
    ctx.resources.at("scooter-1").location = prog.location;
    ctx.disruptions.push_back({"blk", DisruptionKind::edge_blocked, {p.legs[0].route.edges[1]}, 0, std::nullopt, 1.0});

    const Plan r = revise_plan(p, spec, {"status", "leg_blocked"}, prog, RuleSet::defaults(), ctx);
    CHECK(r.revision == 1);
    REQUIRE(!r.legs.empty());
    CHECK(r.legs[0].state == LegState::completed);
    CHECK(r.legs[0].route.edges == std::vector<std::string>{p.legs[0].route.edges[0]});
    CHECK(plan_structure_problems(r, spec, *ctx.graph).empty());
    for (const auto& l : r.legs)
        for (const auto& e : l.route.edges)
            if (l.state != LegState::completed) CHECK(e != p.legs[0].route.edges[1]);

    TripProgress arrived = prog;
    arrived.location = "Y";
    CHECK(code_of([&] { revise_plan(p, spec, {"status", "x"}, arrived, RuleSet::defaults(), ctx); }) ==
          ErrorCode::NoFeasibleRevision);
}

TEST_CASE("retiming keeps legs contiguous") {
    auto ctx = fig5_context();
    Plan p = generate_plan(parse_request("ride from X to Y", ctx, "R1", kC1), ctx);
    retime_legs(p.legs, 0, 7);
    CHECK(p.legs[0].planned_start == 7);
    for (std::size_t i = 1; i < p.legs.size(); ++i) CHECK(p.legs[i].planned_start >= p.legs[i - 1].planned_end);
}

TEST_CASE("the engine falls back to the mock on backend trouble") {
    const auto ctx = fig5_context();
    for (std::shared_ptr<Reasoner> backend :
         {std::shared_ptr<Reasoner>(new BrokenBackend), std::shared_ptr<Reasoner>(new SloppyBackend)}) {
        ReasoningEngine engine(backend);
        std::vector<FallbackNotice> notices;
        engine.on_fallback([&](const FallbackNotice& n) { notices.push_back(n); });
        const auto spec = engine.parse_request("ride from X to Y", ctx, "R1", kC1);
        CHECK(spec.destination == "Y");
        const Plan p = engine.generate_plan(spec, ctx);
        CHECK(p.legs.size() == 3);
        CHECK(notices.size() == 2);
    }
    // Domain errors are not backend trouble and still surface.
    ReasoningEngine mock;
    CHECK(code_of([&] { mock.parse_request("from X to X", ctx, "R1", kC1); }) == ErrorCode::NeedsClarification);
}

TEST_CASE("response schemas are enforced") {
    CHECK(code_of([] { check_response_schema(task::generate_plan, json::object()); }) == ErrorCode::SchemaViolation);
    const auto ctx = fig5_context();
    MockReasoner mock;
    Prompt prompt;
    prompt.task = task::generate_plan;
    const auto spec = parse_request("ride from X to Y", ctx, "R1", kC1);
    prompt.input = {{"spec", spec}};
    prompt.context = &ctx;
    const auto rules = RuleSet::defaults();
    prompt.rules = &rules;
    const json out = mock.call(prompt);
    CHECK_NOTHROW(check_response_schema(task::generate_plan, out));
    // The wire form carries a digest, never the raw snapshot.
    CHECK(prompt.wire().dump().find("passenger_locations") == std::string::npos);
}

TEST_CASE("context digest is a pure function of contents") {
    const auto a = fig5_context();
    auto b = fig5_context();
    CHECK(a.digest() == b.digest());
    b.disruptions.push_back({"wx", DisruptionKind::weather_slowdown, {"V1"}, 0, std::nullopt, 2.0});
    CHECK(a.digest() != b.digest());
}
