#include "holonsim/gateway.hpp"

#include <fstream>

#include <httplib.h>

#include "holonsim/error.hpp"

namespace holonsim {

using json = nlohmann::json;

json descriptor_json(const RunDescriptor& d) {
    return {{"run_id", d.run_id},
            {"scenario", d.scenario},
            {"seed", d.seed},
            {"status", d.status},
            {"tick", d.tick},
            {"strategy", d.strategy}};
}

LoadRequest LoadRequest::from_json(const json& body) {
    if (!body.is_object()) throw Error(ErrorCode::SchemaError, "$: body must be an object");
    LoadRequest r;
    if (body.contains("scenario")) {
        r.scenario = body.at("scenario");
    } else if (body.contains("graph")) {
        r.scenario = body;  // a bare scenario document
    } else {
        throw Error(ErrorCode::SchemaError, "$.scenario: missing");
    }
    try {
        if (body.contains("seed") && body.contains("scenario")) r.seed = body.at("seed").get<std::uint64_t>();
        if (body.contains("strategy") && body.contains("scenario"))
            r.strategy = parse_strategy(body.at("strategy").get<std::string>());
        if (body.contains("ticks_per_second")) r.ticks_per_second = body.at("ticks_per_second").get<double>();
        r.autostart = body.value("autostart", false);
        r.stop_when_idle = body.value("stop_when_idle", false);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("$: ") + e.what());
    }
    if (body.contains("script") && body.contains("scenario")) r.script = parse_script(body.at("script"));
    if (r.ticks_per_second && *r.ticks_per_second < 0)
        throw Error(ErrorCode::SchemaError, "$.ticks_per_second: must be >= 0");
    return r;
}

// ------------------------------------------------------------------ runs

struct RunManager::Run {
    std::string id;
    mutable std::mutex m;
    mutable std::condition_variable cv;
    std::unique_ptr<Simulation> sim;
    RunStatus status = RunStatus::loaded;
    double ticks_per_second = 2.0;
    bool stop = false;
    std::size_t next_command = 1;
    StrategyKind strategy = StrategyKind::holonic;
    std::uint64_t seed = 0;
    std::thread driver;
};

RunManager::RunManager(Config config) : config_(std::move(config)) {}

RunManager::~RunManager() { shutdown(); }

void RunManager::shutdown() {
    std::vector<Run*> all;
    {
        std::lock_guard lk(runs_mutex_);
        for (auto& [id, r] : runs_) all.push_back(r.get());
    }
    for (Run* r : all) {
        {
            std::lock_guard lk(r->m);
            r->stop = true;
        }
        r->cv.notify_all();
        if (r->driver.joinable()) r->driver.join();
        std::lock_guard lk(r->m);
        if (!r->sim->finished()) r->sim->finish("shutdown");
        r->status = RunStatus::finished;
    }
}

RunManager::Run& RunManager::run(const std::string& id) const {
    std::lock_guard lk(runs_mutex_);
    auto it = runs_.find(id);
    if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, id);
    return *it->second;
}

RunDescriptor RunManager::describe_locked(const Run& r) {
    return {r.id, r.sim->scenario().name, r.seed, r.status, r.sim->now(), r.strategy};
}

RunDescriptor RunManager::load(const LoadRequest& req) {
    Scenario scenario = parse_scenario(req.scenario);
    auto r = std::make_unique<Run>();
    {
        std::lock_guard lk(runs_mutex_);
        r->id = "run-" + std::to_string(next_run_++);
    }
    SimOptions o;
    o.seed = req.seed;
    o.strategy = req.strategy;
    o.script = req.script;
    o.stop_when_idle = req.stop_when_idle;
    o.approval_timeout = config_.approval_timeout;
    if (config_.reasoner == "remote")
        o.backend = std::make_shared<RemoteReasoner>(config_.reasoner_url,
                                                     std::chrono::milliseconds(config_.reasoner_budget_ms));
    if (!config_.runs_dir.empty()) {
        const auto dir = config_.runs_dir / r->id;
        std::filesystem::create_directories(dir);
        std::ofstream(dir / "scenario.json") << scenario.source.dump(2) << '\n';
        o.log_file = dir / "events.ndjson";
    }
    r->seed = req.seed.value_or(scenario.seed);
    r->strategy = req.strategy;
    r->ticks_per_second = req.ticks_per_second.value_or(config_.ticks_per_second);
    r->sim = std::make_unique<Simulation>(std::move(scenario), std::move(o));
    if (req.autostart) r->status = RunStatus::running;
    Run& ref = *r;
    const RunDescriptor d = describe_locked(ref);
    {
        std::lock_guard lk(runs_mutex_);
        runs_.emplace(ref.id, std::move(r));
    }
    ref.driver = std::thread([this, &ref] { drive(ref); });
    return d;
}

void RunManager::drive(Run& r) {
    std::unique_lock lk(r.m);
    while (!r.stop) {
        if (r.status != RunStatus::running) {
            r.cv.wait(lk);
            continue;
        }
        r.sim->step();
        if (r.sim->finished()) {
            r.status = RunStatus::finished;
            r.cv.notify_all();
            return;
        }
        if (r.ticks_per_second > 0) {
            const auto period = std::chrono::duration<double>(1.0 / r.ticks_per_second);
            r.cv.wait_for(lk, period, [&] { return r.stop || r.status != RunStatus::running; });
        } else {
            // Free-run: let waiting commands in between ticks.
            lk.unlock();
            std::this_thread::yield();
            lk.lock();
        }
    }
}

std::vector<RunDescriptor> RunManager::list() const {
    std::vector<Run*> all;
    {
        std::lock_guard lk(runs_mutex_);
        for (const auto& [id, r] : runs_) all.push_back(r.get());
    }
    std::vector<RunDescriptor> out;
    for (Run* r : all) {
        std::lock_guard lk(r->m);
        out.push_back(describe_locked(*r));
    }
    return out;
}

RunDescriptor RunManager::describe(const std::string& run_id) const {
    Run& r = run(run_id);
    std::lock_guard lk(r.m);
    return describe_locked(r);
}

std::string RunManager::submit_trip(const std::string& run_id, const std::string& passenger,
                                    const std::string& text) {
    Run& r = run(run_id);
    std::lock_guard lk(r.m);
    return r.sim->submit_trip(passenger, text);
}

json RunManager::command(const std::string& run_id, OperatorCommand cmd) {
    Run& r = run(run_id);
    std::unique_lock lk(r.m);
    if (r.status == RunStatus::finished) throw Error(ErrorCode::InvalidCommand, "run finished");
    if (cmd.id.empty()) cmd.id = "cmd-" + std::to_string(r.next_command++);
    switch (cmd.kind) {
        case CommandKind::pause:
            if (r.status != RunStatus::running) throw Error(ErrorCode::InvalidCommand, "pause needs a running run");
            r.sim->submit_command(cmd);
            r.status = RunStatus::paused;
            break;
        case CommandKind::resume:
            if (r.status == RunStatus::running) throw Error(ErrorCode::InvalidCommand, "run already running");
            r.sim->submit_command(cmd);
            r.status = RunStatus::running;
            break;
        case CommandKind::step:
            if (r.status == RunStatus::running) throw Error(ErrorCode::InvalidCommand, "step needs a paused run");
            // From loaded this is an implicit start followed by a pause.
            r.sim->submit_command(cmd);
            r.sim->step();
            r.status = r.sim->finished() ? RunStatus::finished : RunStatus::paused;
            break;
        default:
            r.sim->submit_command(cmd);
            break;
    }
    r.cv.notify_all();
    return {{"accepted", true}, {"command_id", cmd.id}, {"tick", r.sim->now()}, {"status", r.status}};
}

json RunManager::approvals(const std::string& run_id) const {
    Run& r = run(run_id);
    std::lock_guard lk(r.m);
    json out = json::array();
    for (const auto& a : r.sim->pending_approvals()) {
        json j = approval_json(a);
        j["ticks_remaining"] = std::max<Tick>(0, a.timeout_at - r.sim->now());
        out.push_back(j);
    }
    return out;
}

json RunManager::state(const std::string& run_id) const {
    Run& r = run(run_id);
    std::lock_guard lk(r.m);
    json s = r.sim->state();
    s["run"] = descriptor_json(describe_locked(r));
    return s;
}

json RunManager::metrics(const std::string& run_id) const {
    Run& r = run(run_id);
    std::lock_guard lk(r.m);
    return r.sim->metrics().to_json();
}

const EventLog& RunManager::log(const std::string& run_id) const { return run(run_id).sim->log(); }

bool RunManager::wait_finished(const std::string& run_id, std::chrono::milliseconds timeout) const {
    Run& r = run(run_id);
    std::unique_lock lk(r.m);
    return r.cv.wait_for(lk, timeout, [&] { return r.status == RunStatus::finished; });
}

// ------------------------------------------------------------------ http

namespace {

int http_status(ErrorCode c) {
    switch (c) {
        case ErrorCode::UnknownRun:
        case ErrorCode::UnknownPassenger:
        case ErrorCode::UnknownApproval:
            return 404;
        case ErrorCode::InvalidOverridePlan:
        case ErrorCode::DuplicateDisruption:
        case ErrorCode::UnknownTarget:
        case ErrorCode::InvalidCommand:
        case ErrorCode::SchemaError:
            return 422;
        default:
            return 500;
    }
}

void reply(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

// Runs a handler, turning domain errors into structured error bodies.
template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        reply(res, {{"error", std::string(to_string(e.code()))}, {"detail", e.detail()}}, http_status(e.code()));
    } catch (const json::exception& e) {
        reply(res, {{"error", "SchemaError"}, {"detail", e.what()}}, 400);
    }
}

json body_of(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, std::string("$: body is not JSON: ") + e.what());
    }
}

std::uint64_t from_param(const httplib::Request& req) {
    if (!req.has_param("from")) return 0;
    try {
        return std::stoull(req.get_param_value("from"));
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidCommand, "from must be a sequence number");
    }
}

}  // namespace

Gateway::Gateway(Config config) : manager_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
    routes();
}

Gateway::~Gateway() {
    stop();
    manager_.shutdown();
}

void Gateway::routes() {
    auto& s = *server_;
    s.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, descriptor_json(manager_.load(LoadRequest::from_json(body_of(req)))), 201); });
    });
    s.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json out = json::array();
            for (const auto& d : manager_.list()) out.push_back(descriptor_json(d));
            reply(res, out);
        });
    });
    s.Get(R"(/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, descriptor_json(manager_.describe(req.matches[1]))); });
    });
    s.Post(R"(/runs/([^/]+)/trips)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json b = body_of(req);
            if (!b.is_object() || !b.contains("passenger") || !b.contains("text"))
                throw Error(ErrorCode::InvalidCommand, "need passenger and text");
            auto passenger = b.at("passenger").get<std::string>();
            // Accept either the leaf name or the full holon id.
            if (auto slash = passenger.rfind('/'); slash != std::string::npos) passenger = passenger.substr(slash + 1);
            const auto rid = manager_.submit_trip(req.matches[1], passenger, b.at("text").get<std::string>());
            reply(res, {{"request_id", rid}}, 202);
        });
    });
    s.Post(R"(/runs/([^/]+)/commands)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            OperatorCommand cmd = parse_command(body_of(req));
            cmd.received_at = std::to_string(
                std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
                    .count());
            reply(res, manager_.command(req.matches[1], std::move(cmd)), 202);
        });
    });
    s.Get(R"(/runs/([^/]+)/approvals)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, manager_.approvals(req.matches[1])); });
    });
    s.Get(R"(/runs/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, manager_.state(req.matches[1])); });
    });
    s.Get(R"(/runs/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, manager_.metrics(req.matches[1])); });
    });
    s.Get(R"(/runs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const EventLog& log = manager_.log(req.matches[1]);
            const std::uint64_t from = from_param(req);
            const bool sse = req.get_header_value("Accept").find("text/event-stream") != std::string::npos ||
                             req.get_param_value("stream") == "sse";
            if (!sse) {
                // Poll with cursor; wait_ms turns it into a long poll.
                if (req.has_param("wait_ms") && log.next_seq() <= from && !log.closed()) {
                    const auto ms = std::min<long long>(std::stoll(req.get_param_value("wait_ms")), 30000);
                    log.wait_for(from, std::chrono::milliseconds(std::max<long long>(ms, 0)));
                }
                const auto text = log.text(from);
                const auto next = std::max<std::uint64_t>(from, log.next_seq());
                res.set_header("X-Next-Seq", std::to_string(next));
                res.set_header("X-Log-Closed", log.closed() ? "true" : "false");
                res.set_content(text, "application/x-ndjson");
                return;
            }
            auto cursor = std::make_shared<std::uint64_t>(from);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [&log, cursor](std::size_t, httplib::DataSink& sink) {
                log.wait_for(*cursor, std::chrono::milliseconds(250));
                const auto lines = log.lines(*cursor);
                for (const auto& line : lines) {
                    const std::string frame = "id: " + std::to_string(*cursor) + "\ndata: " + line + "\n\n";
                    if (!sink.write(frame.data(), frame.size())) return false;
                    ++*cursor;
                }
                if (log.closed() && *cursor >= log.next_seq()) {
                    const std::string end = "event: end\ndata: {}\n\n";
                    sink.write(end.data(), end.size());
                    sink.done();
                }
                return true;
            });
        });
    });
}

bool Gateway::listen() { return server_->listen(manager_.config().host, manager_.config().port); }

int Gateway::bind_any() { return server_->bind_to_any_port(manager_.config().host); }

void Gateway::listen_after_bind() { server_->listen_after_bind(); }

void Gateway::stop() {
    if (server_) server_->stop();
}

}  // namespace holonsim
