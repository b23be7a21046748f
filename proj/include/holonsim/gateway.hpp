#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "holonsim/config.hpp"
#include "holonsim/simulation.hpp"

namespace httplib {
class Server;
}

namespace holonsim {

enum class RunStatus { loaded, running, paused, finished };
NLOHMANN_JSON_SERIALIZE_ENUM(RunStatus, {{RunStatus::loaded, "loaded"},
                                         {RunStatus::running, "running"},
                                         {RunStatus::paused, "paused"},
                                         {RunStatus::finished, "finished"}})

struct RunDescriptor {
    std::string run_id;
    std::string scenario;
    std::uint64_t seed = 0;
    RunStatus status = RunStatus::loaded;
    Tick tick = 0;
    StrategyKind strategy = StrategyKind::holonic;
};
nlohmann::json descriptor_json(const RunDescriptor& d);

struct LoadRequest {
    nlohmann::json scenario;  // the scenario document itself
    std::optional<std::uint64_t> seed;
    StrategyKind strategy = StrategyKind::holonic;
    std::vector<ScriptedAction> script;
    std::optional<double> ticks_per_second;
    bool autostart = false;
    // Interactive runs keep ticking when idle so trips can arrive later.
    bool stop_when_idle = false;

    static LoadRequest from_json(const nlohmann::json& body);
};

/// Owns every run of one gateway process. Each run has its own mutex and a
/// driver thread that paces it; all mutations of a run go through that mutex,
/// so commands land at tick boundaries. Event reads go straight to the
/// internally synchronized log.
class RunManager {
public:
    explicit RunManager(Config config);
    ~RunManager();
    RunManager(const RunManager&) = delete;
    RunManager& operator=(const RunManager&) = delete;

    RunDescriptor load(const LoadRequest& req);
    std::vector<RunDescriptor> list() const;
    RunDescriptor describe(const std::string& run_id) const;

    std::string submit_trip(const std::string& run_id, const std::string& passenger, const std::string& text);
    /// pause / resume / step drive the clock here; everything else is
    /// validated and queued by the simulation. Returns the command id.
    nlohmann::json command(const std::string& run_id, OperatorCommand cmd);

    nlohmann::json approvals(const std::string& run_id) const;
    nlohmann::json state(const std::string& run_id) const;
    nlohmann::json metrics(const std::string& run_id) const;
    /// The run's log; stays valid for the manager's lifetime.
    const EventLog& log(const std::string& run_id) const;

    /// Blocks until the run is finished or the timeout passes.
    bool wait_finished(const std::string& run_id, std::chrono::milliseconds timeout) const;
    void shutdown();

    const Config& config() const { return config_; }

private:
    struct Run;
    Run& run(const std::string& id) const;
    void drive(Run& r);
    static RunDescriptor describe_locked(const Run& r);

    Config config_;
    mutable std::mutex runs_mutex_;
    std::map<std::string, std::unique_ptr<Run>> runs_;
    std::size_t next_run_ = 1;
};

/// HTTP surface over a RunManager.
class Gateway {
public:
    explicit Gateway(Config config);
    ~Gateway();

    RunManager& runs() { return manager_; }
    /// Binds and serves on the calling thread until stop().
    bool listen();
    /// Binds to an ephemeral port (tests). Returns the port.
    int bind_any();
    void listen_after_bind();
    void stop();

private:
    void routes();

    RunManager manager_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace holonsim
