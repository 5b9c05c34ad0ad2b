#pragma once

// Portable stand-in for a desktop task scheduler: poll every few minutes, start
// only when the machine has been idle long enough, kill the job the moment the
// user comes back, never run two instances.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "scavenger/clock.hpp"
#include "scavenger/coordination.hpp"
#include "scavenger/optimizer.hpp"

namespace scavenger {

struct WorkerConfig {
    double poll_interval = 600.0;
    double idle_threshold = 3600.0;
    double retry_window = 300.0; // recorded only; polling already retries
    double daily_start = 12 * 3600.0;
    double daily_duration = 85800.0;
    double probe_granule = 1.0;
    std::vector<JobDirectory> jobs;
    std::string worker_id;
    OptimizerMode mode = OptimizerMode::ChangeMerge;
    std::uint64_t seed = 0;

    // Throws ContractError on violated invariants.
    void validate() const;

    // key=value text; repeated `job=<path>` lines. `clock` is attached to every
    // job directory.
    static WorkerConfig parse(std::string_view text, std::string_view source, std::shared_ptr<Clock> clock = nullptr);
    static WorkerConfig load(const std::filesystem::path& file, std::shared_ptr<Clock> clock = nullptr);
};

// Seconds since the last user activity.
class IdleProbe {
public:
    virtual ~IdleProbe() = default;
    virtual double idle_duration(double now) const = 0;
};

struct ActivityEvent {
    double timestamp = 0.0;
};

// Idle/busy trace. The user counts as idle since `origin` until the first
// activity; busy intervals [start, end) pin idle time to zero.
class ScriptedIdleProbe final : public IdleProbe {
public:
    explicit ScriptedIdleProbe(double origin = 0.0) : origin_(origin) {}

    ScriptedIdleProbe& busy(double start, double end);
    ScriptedIdleProbe& activity(ActivityEvent event);

    double idle_duration(double now) const override;

private:
    double origin_;
    std::vector<std::pair<double, double>> busy_;
};

// Best-effort: the most recent access to any terminal device, which is what
// `w` reports as idle time. Headless machines read as idle since boot.
class SystemIdleProbe final : public IdleProbe {
public:
    double idle_duration(double now) const override;
};

enum class SkipReason { OutsideWindow, NotIdle, AlreadyRunning, NoSignal, ShareError };
std::string_view to_string(SkipReason reason);

struct TickDecision {
    bool start = false;
    std::size_t job_index = 0; // valid when start
    SkipReason reason = SkipReason::NoSignal;
};

enum class GuardResult { Acquired, Busy };

// In-process single-instance bookkeeping per (worker, job).
class InstanceGuard {
public:
    GuardResult acquire(std::string_view worker_id, std::string_view job_id);
    void release(std::string_view worker_id, std::string_view job_id);
    bool busy(std::string_view worker_id, std::string_view job_id) const;
    bool any_busy(std::string_view worker_id) const;

private:
    mutable std::mutex mu_;
    std::set<std::pair<std::string, std::string>, std::less<>> live_;
};

bool in_daily_window(const WorkerConfig& config, double time_of_day);

// Pure decision for one scheduler poll.
TickDecision scheduler_tick(const WorkerConfig& config, const IdleProbe& probe, const Clock& clock, double now,
                            const InstanceGuard& guard);

// What the daemon drives when a tick says Start.
class LoopLauncher {
public:
    virtual ~LoopLauncher() = default;
    virtual void start(const JobDirectory& job) = 0;
    virtual bool running() = 0;
    virtual void cancel() = 0;
    // Blocks until the loop has returned.
    virtual void wait() = 0;
    // Virtual-time launchers do their work here; thread-backed ones ignore it.
    virtual void advance(double /*now*/) {}
};

// Runs optimizer::work_loop on a background thread. The objective comes from
// the job's manifest.
class ThreadLauncher final : public LoopLauncher {
public:
    explicit ThreadLauncher(WorkLoopOptions base_options);
    ~ThreadLauncher() override;

    void start(const JobDirectory& job) override;
    bool running() override;
    void cancel() override;
    void wait() override;

    std::optional<LoopReport> last_report() const;
    // An exception that ended the last loop, if any.
    std::optional<std::string> last_error() const;

private:
    WorkLoopOptions base_options_;
    std::jthread thread_;
    mutable std::mutex mu_;
    bool done_ = true;
    std::optional<LoopReport> report_;
    std::optional<std::string> error_;
    std::uint64_t launches_ = 0;
};

struct DaemonEvent {
    enum class Kind { Tick, Start, Kill, Completed, Shutdown };
    Kind kind = Kind::Tick;
    double time = 0.0;
    std::string job_id;
    std::optional<SkipReason> skip; // for ticks that did not start anything
};

struct DaemonReport {
    std::int64_t ticks = 0;
    std::int64_t starts = 0;
    std::int64_t kills = 0;
    std::int64_t completed_loops = 0;
    std::map<SkipReason, std::int64_t> skips;
    std::vector<DaemonEvent> events;
};

struct DaemonOptions {
    // Stop the daemon once the clock passes this instant (virtual runs).
    std::optional<double> run_until;
    // First poll; defaults to the clock's current time.
    std::optional<double> first_tick;
};

DaemonReport run_daemon(const WorkerConfig& config, const IdleProbe& probe, Clock& clock, LoopLauncher& launcher,
                        std::stop_token cancel = {}, DaemonOptions options = {});

} // namespace scavenger
