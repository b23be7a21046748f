#include "holonsim/reasoner.hpp"

#include <httplib.h>

#include "holonsim/error.hpp"

namespace holonsim {

namespace {

const char* role_prompt_for(const std::string& t) {
    if (t == task::parse_request) return "Supervisor: turn the passenger utterance into a task specification.";
    if (t == task::interpret_update) return "Supervisor: map the passenger update to a schedule adjustment.";
    return "Planner: produce a multimodal trip plan as ordered legs.";
}

const ReasonerContext& need_context(const Prompt& p) {
    if (!p.context) throw Error(ErrorCode::SchemaViolation, "prompt without context");
    return *p.context;
}

}  // namespace

nlohmann::json Prompt::wire() const {
    nlohmann::json digest = context ? context->digest() : nlohmann::json::object();
    return {{"role_prompt", role_prompt.empty() ? role_prompt_for(task) : role_prompt},
            {"context_digest", digest},
            {"task", {{"name", task}, {"input", input}}},
            {"schema_version", kSchemaVersion}};
}

nlohmann::json MockReasoner::call(const Prompt& p) {
    const ReasonerContext& ctx = need_context(p);
    const auto& in = p.input;
    if (p.task == task::parse_request) {
        return parse_request(in.at("text").get<std::string>(), ctx, in.at("request_id").get<std::string>(),
                             in.at("passenger").get<HolonId>());
    }
    if (p.task == task::generate_plan) {
        return generate_plan(in.at("spec").get<TaskSpec>(), ctx);
    }
    if (p.task == task::revise_plan) {
        const RuleSet rules = p.rules ? *p.rules : RuleSet::defaults();
        TripProgress progress{in.at("progress").at("location").get<std::string>(),
                              in.at("progress").at("current_leg").get<std::size_t>(),
                              in.at("progress").at("traversed_edges").get<std::size_t>()};
        RevisionTrigger trigger{in.at("trigger").at("kind").get<std::string>(),
                                in.at("trigger").at("detail").get<std::string>()};
        return revise_plan(in.at("plan").get<Plan>(), in.at("spec").get<TaskSpec>(), trigger, progress,
                           rules, ctx);
    }
    if (p.task == task::interpret_update) {
        return interpret_update(in.at("text").get<std::string>(), ctx,
                                in.at("request_id").get<std::string>());
    }
    throw Error(ErrorCode::SchemaViolation, "unknown task " + p.task);
}

RemoteReasoner::RemoteReasoner(std::string url, std::chrono::milliseconds budget) : budget_(budget) {
    const auto scheme = url.find("://");
    const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    scheme_host_port_ = slash == std::string::npos ? url : url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

nlohmann::json RemoteReasoner::call(const Prompt& p) {
    httplib::Client cli(scheme_host_port_);
    if (!cli.is_valid()) throw Error(ErrorCode::BackendUnavailable, "invalid endpoint " + scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(budget_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(budget_ - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());

    auto res = cli.Post(path_, p.wire().dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write ||
            err == httplib::Error::ConnectionTimeout)
            throw Error(ErrorCode::Timeout, "remote reasoner exceeded " + std::to_string(budget_.count()) + " ms");
        throw Error(ErrorCode::BackendUnavailable, httplib::to_string(err));
    }
    if (res->status != 200)
        throw Error(ErrorCode::BackendUnavailable, "HTTP " + std::to_string(res->status));

    nlohmann::json body;
    try {
        body = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("unparseable body: ") + e.what());
    }
    if (!body.is_object() || !body.contains("response") || body.value("schema_version", "") != kSchemaVersion)
        throw Error(ErrorCode::SchemaViolation, "envelope must be {response, schema_version}");
    const auto& response = body.at("response");
    // Domain refusals travel as {"error": {"code", "detail"}}.
    if (response.is_object() && response.contains("error")) {
        const auto& e = response.at("error");
        const auto code = e.value("code", "");
        const auto detail = e.value("detail", "");
        if (code == "NeedsClarification") throw Error(ErrorCode::NeedsClarification, detail);
        if (code == "NoFeasiblePlan") throw Error(ErrorCode::NoFeasiblePlan, detail);
        if (code == "NoFeasibleRevision") throw Error(ErrorCode::NoFeasibleRevision, detail);
        throw Error(ErrorCode::SchemaViolation, "unknown error code " + code);
    }
    check_response_schema(p.task, response);
    return response;
}

void check_response_schema(const std::string& t, const nlohmann::json& r) {
    auto fail = [&](const std::string& what) { throw Error(ErrorCode::SchemaViolation, t + ": " + what); };
    auto need_string = [&](const nlohmann::json& obj, const char* key, const std::string& path) {
        if (!obj.contains(key) || !obj.at(key).is_string()) fail(path + key + " must be a string");
    };
    if (!r.is_object()) fail("response must be an object");
    if (t == task::parse_request) {
        need_string(r, "origin", "");
        need_string(r, "destination", "");
        if (r.contains("constraints")) {
            if (!r.at("constraints").is_array()) fail("constraints must be an array");
            for (const auto& c : r.at("constraints")) {
                try {
                    c.get<Constraint>();
                } catch (const nlohmann::json::exception&) {
                    fail("constraint outside the registered vocabulary");
                }
            }
        }
    } else if (t == task::generate_plan || t == task::revise_plan) {
        if (!r.contains("legs") || !r.at("legs").is_array() || r.at("legs").empty())
            fail("legs must be a non-empty array");
        std::size_t i = 0;
        for (const auto& leg : r.at("legs")) {
            const std::string path = "legs[" + std::to_string(i++) + "].";
            if (!leg.is_object()) fail(path + " must be an object");
            for (const char* k : {"leg_id", "mode", "origin", "destination"}) need_string(leg, k, path);
            if (!leg.contains("route") || !leg.at("route").is_object()) fail(path + "route must be an object");
            if (!leg.contains("planned_start") || !leg.at("planned_start").is_number_integer() ||
                !leg.contains("planned_end") || !leg.at("planned_end").is_number_integer())
                fail(path + "planned_start/planned_end must be integers");
            try {
                leg.get<Leg>();
            } catch (const nlohmann::json::exception& e) {
                fail(path + e.what());
            }
        }
    } else if (t == task::interpret_update) {
        need_string(r, "kind", "");
        try {
            r.get<ScheduleAdjustment>();
        } catch (const nlohmann::json::exception&) {
            fail("unknown adjustment kind");
        }
    } else {
        fail("unknown task");
    }
}

ReasoningEngine::ReasoningEngine(std::shared_ptr<Reasoner> backend)
    : backend_(std::move(backend)), backend_id_(backend_ ? backend_->id() : "mock") {}

nlohmann::json ReasoningEngine::call(const Prompt& prompt) {
    if (!backend_) return mock_.call(prompt);
    try {
        return backend_->call(prompt);
    } catch (const Error& e) {
        const auto c = e.code();
        if (c != ErrorCode::BackendUnavailable && c != ErrorCode::SchemaViolation && c != ErrorCode::Timeout)
            throw;
        if (on_fallback_) on_fallback_({prompt.task, backend_->id(), e.what()});
        return mock_.call(prompt);
    }
}

namespace {

// A remote answer that decodes but breaks plan invariants is treated the
// same as a malformed one.
template <class F>
auto checked(F&& decode) {
    try {
        return decode();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, e.what());
    }
}

}  // namespace

TaskSpec ReasoningEngine::parse_request(std::string_view text, const ReasonerContext& ctx,
                                        const std::string& request_id, const HolonId& passenger) {
    Prompt p{"", task::parse_request,
             {{"text", text}, {"request_id", request_id}, {"passenger", passenger}}, &ctx, nullptr};
    auto decode = [&](const nlohmann::json& r) {
        return checked([&] {
            TaskSpec s;
            s.request_id = request_id;
            s.passenger = passenger;
            s.origin = r.at("origin").get<std::string>();
            s.destination = r.at("destination").get<std::string>();
            s.earliest_departure = std::max(ctx.tick, r.value("earliest_departure", ctx.tick));
            s.constraints = r.value("constraints", std::vector<Constraint>{});
            s.free_text = std::string(text);
            if (!ctx.graph->find_node(s.origin) || !ctx.graph->find_node(s.destination))
                throw Error(ErrorCode::SchemaViolation, "task spec names unknown nodes");
            return s;
        });
    };
    try {
        return decode(call(p));
    } catch (const Error& e) {
        if (!backend_ || e.code() != ErrorCode::SchemaViolation) throw;
        if (on_fallback_) on_fallback_({p.task, backend_->id(), e.what()});
        return decode(mock_.call(p));
    }
}

Plan ReasoningEngine::generate_plan(const TaskSpec& spec, const ReasonerContext& ctx) {
    Prompt p{"", task::generate_plan, {{"spec", spec}}, &ctx, nullptr};
    auto decode = [&](const nlohmann::json& r) {
        return checked([&] {
            Plan plan;
            plan.plan_id = "P-" + spec.request_id;
            plan.request_id = spec.request_id;
            plan.legs = r.at("legs").get<std::vector<Leg>>();
            const auto problems = plan_structure_problems(plan, spec, *ctx.graph);
            if (!problems.empty()) throw Error(ErrorCode::SchemaViolation, problems.front());
            return plan;
        });
    };
    try {
        return decode(call(p));
    } catch (const Error& e) {
        if (!backend_ || e.code() != ErrorCode::SchemaViolation) throw;
        if (on_fallback_) on_fallback_({p.task, backend_->id(), e.what()});
        return decode(mock_.call(p));
    }
}

Plan ReasoningEngine::revise_plan(const Plan& plan, const TaskSpec& spec, const RevisionTrigger& trigger,
                                  const TripProgress& progress, const RuleSet& rules,
                                  const ReasonerContext& ctx) {
    Prompt p{"",
             task::revise_plan,
             {{"plan", plan},
              {"spec", spec},
              {"trigger", {{"kind", trigger.kind}, {"detail", trigger.detail}}},
              {"progress",
               {{"location", progress.location},
                {"current_leg", progress.current_leg},
                {"traversed_edges", progress.traversed_edges}}}},
             &ctx,
             &rules};
    auto decode = [&](const nlohmann::json& r) {
        return checked([&] {
            Plan out = plan;
            out.legs = r.at("legs").get<std::vector<Leg>>();
            out.revision = plan.revision + 1;
            out.status = PlanStatus::draft;
            out.fallback = false;
            const auto problems = plan_structure_problems(out, spec, *ctx.graph);
            if (!problems.empty()) throw Error(ErrorCode::SchemaViolation, problems.front());
            return out;
        });
    };
    try {
        return decode(call(p));
    } catch (const Error& e) {
        if (!backend_ || e.code() != ErrorCode::SchemaViolation) throw;
        if (on_fallback_) on_fallback_({p.task, backend_->id(), e.what()});
        return decode(mock_.call(p));
    }
}

ScheduleAdjustment ReasoningEngine::interpret_update(std::string_view text, const ReasonerContext& ctx,
                                                     const std::string& request_id) {
    Prompt p{"", task::interpret_update, {{"text", text}, {"request_id", request_id}}, &ctx, nullptr};
    auto decode = [&](const nlohmann::json& r) {
        return checked([&] {
            auto adj = r.get<ScheduleAdjustment>();
            adj.request_id = request_id;
            if ((adj.kind == AdjustmentKind::delay_departure || adj.kind == AdjustmentKind::advance_departure) &&
                adj.magnitude < 1)
                throw Error(ErrorCode::SchemaViolation, "magnitude must be >= 1");
            return adj;
        });
    };
    try {
        return decode(call(p));
    } catch (const Error& e) {
        if (!backend_ || e.code() != ErrorCode::SchemaViolation) throw;
        if (on_fallback_) on_fallback_({p.task, backend_->id(), e.what()});
        return decode(mock_.call(p));
    }
}

}  // namespace holonsim
