#include <doctest.h>

#include <algorithm>
#include <random>

#include "holonsim/error.hpp"
#include "holonsim/holons.hpp"
#include "holonsim/simulation.hpp"
#include "oracles.hpp"

using namespace holonsim;

namespace {

const std::filesystem::path kScenarios = HOLONSIM_SCENARIO_DIR;

// Brute force over the stated ordering: smaller distance, then higher
// battery, then smaller id.
std::optional<std::size_t> argmax(const std::vector<CandidateScore>& c) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (!c[i].feasible) continue;
        bool beaten = false;
        for (std::size_t k = 0; k < c.size(); ++k) {
            if (!c[k].feasible || k == i) continue;
            const bool better = c[k].distance < c[i].distance ||
                                (c[k].distance == c[i].distance &&
                                 (c[k].battery > c[i].battery || (c[k].battery == c[i].battery && c[k].id < c[i].id)));
            if (better)
                beaten = true;
        }
        if (!beaten) best = i;
    }
    return best;
}

}  // namespace

TEST_CASE("select_best equals brute-force argmax and ignores distance scale") {
    std::mt19937_64 rng(42);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (int round = 0; round < 300; ++round) {
        std::vector<CandidateScore> c;
        const int n = pick(0, 20);
        for (int i = 0; i < n; ++i)
            c.push_back({"r" + std::to_string(pick(0, 30)) + "-" + std::to_string(i), static_cast<double>(pick(0, 6)),
                         pick(0, 3) * 25, pick(0, 5) != 0});
        const auto want = argmax(c);
        CHECK(select_best(c) == want);
        for (double k : {0.5, 2.0, 10.0}) {
            auto scaled = c;
            for (auto& s : scaled) s.distance *= k;
            CHECK(select_best(scaled) == want);
        }
    }
}

TEST_CASE("tie-break prefers battery, then id") {
    std::vector<CandidateScore> c{{"b", 2, 50, true}, {"a", 2, 50, true}, {"c", 2, 70, true}, {"z", 1, 5, false}};
    CHECK(select_best(c) == 2);
    c[2].battery = 50;
    CHECK(select_best(c) == 1);
    CHECK_FALSE(select_best(std::vector<CandidateScore>{}).has_value());
}

TEST_CASE("match_resources agrees with the brute-force oracle") {
    int compared = 0;
    for (std::uint64_t seed = 1; compared < 150; ++seed) {
        const auto mc = oracle::random_match_case(seed);
        if (!mc) continue;
        ++compared;
        const auto want = oracle::best_resource(mc->leg, mc->candidates, *mc->graph.graph, mc->graph.active);
        if (!want) {
            CHECK_THROWS_AS(match_resources(mc->leg, mc->candidates, *mc->graph.graph, mc->graph.active), Error);
            continue;
        }
        const auto got = match_resources(mc->leg, mc->candidates, *mc->graph.graph, mc->graph.active);
        CHECK(got.resource_id == *want);
        CHECK(got.alternatives_considered == mc->candidates.size());
        CHECK(got.score <= 0);
    }
}

TEST_CASE("resource kinds and capabilities line up with leg modes") {
    CHECK(resource_kind_for(LegMode::scooter) == ResourceKind::scooter);
    CHECK(resource_kind_for(LegMode::air_taxi) == ResourceKind::air_taxi);
    CHECK_FALSE(resource_kind_for(LegMode::walk).has_value());
    CHECK(capability_for(ResourceKind::air_taxi) == "fly.air_taxi");
    CHECK(glob_match("ride.*", capability_for(ResourceKind::ground_taxi)));
}

TEST_CASE("risk and feasibility on the bundled city") {
    Simulation sim(load_scenario(kScenarios / "fig5-demo.json"));
    auto ctx = sim.context();
    TaskSpec spec;
    spec.request_id = "R1";
    spec.origin = "X";
    spec.destination = "Y";
    Plan air = generate_plan(spec, ctx);
    CHECK(classify_risk(air, false) == RiskClass::high);
    spec.constraints.push_back({ConstraintKind::ground_only, std::nullopt});
    Plan ground = generate_plan(spec, ctx);
    CHECK(classify_risk(ground, false) == RiskClass::low);
    // A disruption alone only raises risk for a revised plan.
    CHECK(classify_risk(ground, true) == RiskClass::low);
    Plan revised = ground;
    revised.revision = 1;
    CHECK(classify_risk(revised, true) == RiskClass::high);
    CHECK(classify_risk(revised, false) == RiskClass::low);
    // Completed air legs no longer count.
    for (auto& l : air.legs)
        if (l.mode == LegMode::air_taxi) l.state = LegState::completed;
    CHECK(classify_risk(air, false) == RiskClass::low);

    // Unassigned motorized legs are reported until resources are matched.
    CHECK(feasibility_problems(ground, ctx) == std::vector<std::string>{ground.legs[0].leg_id + ": no resource assigned"});
    ground.legs[0].assigned_resource = "scooter-1";
    CHECK(feasibility_problems(ground, ctx).empty());
    CHECK_FALSE(disruption_on_route(ground, ctx.disruptions, *ctx.graph));
    ctx.disruptions.push_back({"b", DisruptionKind::edge_blocked, {ground.legs[0].route.edges[0]}, 0, std::nullopt, 1.0});
    CHECK(disruption_on_route(ground, ctx.disruptions, *ctx.graph));
    CHECK_FALSE(feasibility_problems(ground, ctx).empty());

    ctx.disruptions.clear();
    ctx.resources.at("scooter-1").status = ResourceStatus::out_of_service;
    CHECK_FALSE(feasibility_problems(ground, ctx).empty());
}
