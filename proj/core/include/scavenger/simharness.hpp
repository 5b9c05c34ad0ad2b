#pragma once

// Deterministic discrete-event simulation of a worker fleet sharing one job
// directory. Workers run the real optimizer and coordination code against an
// in-memory store; only time is simulated.

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scavenger/coordination.hpp"
#include "scavenger/objective.hpp"
#include "scavenger/optimizer.hpp"
#include "scavenger/store.hpp"
#include "scavenger/worker.hpp"

namespace scavenger::sim {

inline constexpr double kForever = std::numeric_limits<double>::infinity();

struct Interval {
    double start = 0.0;
    double end = kForever;
};

struct SimWorker {
    std::string id;
    double speed_factor = 1.0;
    // Idle periods during which the machine may work. Disjoint, ordered.
    std::vector<Interval> availability{Interval{}};
    // Scheduler settings; `jobs` and `worker_id` are filled in by the
    // simulator. Defaults differ from a desktop daemon: no idle wait and a
    // window covering the whole day.
    WorkerConfig config = default_config();

    static WorkerConfig default_config();
};

struct SimConfig {
    double t_eval = 1.0; // virtual seconds per evaluation at speed 1.0
    double t_io = 0.001; // virtual seconds per coordination operation
    std::uint64_t seed = 1;
    double horizon = 1e9;
    StopCondition stop;
    OptimizerMode mode = OptimizerMode::ChangeMerge;
    double checkpoint_interval = 0.1;
    bool second_read = true;
    // The master deletes go.dat at this instant.
    std::optional<double> master_stop_at;
};

struct JobSetup {
    ObjectiveParams objective{"phase_mask", 32, 4, 1, 0.0};
    std::string init_config = "zero";
    std::uint64_t init_seed = 0;
};

struct KillEvent {
    std::string worker;
    double time = 0.0;
};

enum class Category { Commit, WastedDuplicate, WastedOutdated, NotBetter };
std::string_view to_string(Category category);

// One completed or abandoned evaluation.
struct ProposalRecord {
    std::int64_t eval_id = 0;
    std::string worker;
    std::int64_t base_version = 0;
    Change change;
    double started = 0.0;
    double finished = 0.0;
    bool completed = false; // false: abandoned (kill, stop, or budget exhausted)
    bool killed = false;
    std::optional<MergeKind> outcome;
    std::optional<Category> category;

    friend bool operator==(const ProposalRecord&, const ProposalRecord&) = default;
};

struct CommitEntry {
    BestState record;
    Change change;
    std::int64_t eval_id = 0;
    double time = 0.0;

    friend bool operator==(const CommitEntry&, const CommitEntry&) = default;
};

struct WorkerStats {
    std::int64_t evaluations = 0;
    std::int64_t commits = 0;
    std::int64_t killed = 0;
    std::int64_t starts = 0;
    double busy_time = 0.0; // virtual seconds spent inside started loops
    std::optional<double> quiesced_at; // first instant idle after the signal cleared

    friend bool operator==(const WorkerStats&, const WorkerStats&) = default;
};

struct SpeedupReport {
    double makespan = 0.0;
    std::int64_t evaluations_total = 0;
    std::int64_t commits = 0;
    std::int64_t wasted_duplicate = 0;
    std::int64_t wasted_outdated = 0;
    std::int64_t rejected_not_better = 0;
    std::int64_t abandoned = 0;
    double speedup = 0.0;
    double ideal_speedup = 0.0;
    double efficiency = 0.0;
    bool incomplete = false;

    std::int64_t final_version = 0;
    double final_performance = 0.0;
    bool final_estimated = false;
    std::optional<double> signal_cleared_at;
    std::int64_t lost_updates = 0;

    std::map<std::string, WorkerStats> workers;
    std::vector<CommitEntry> commit_log; // includes version 0 first
    std::vector<ProposalRecord> proposals;

    friend bool operator==(const SpeedupReport&, const SpeedupReport&) = default;
};

// Sum of speeds over the reference worker's speed.
double ideal_speedup(std::span<const SimWorker> fleet, std::string_view reference);
// Fastest worker; ties go to the smallest id.
std::string reference_worker(std::span<const SimWorker> fleet);

// Fleet run plus a solo run of the reference worker for the speedup baseline.
SpeedupReport run_sim(std::span<const SimWorker> fleet, const JobSetup& setup, const SimConfig& sim,
                      std::span<const KillEvent> kills = {});

// The fleet run alone; speedup fields are left at zero. `store` defaults to a
// fresh in-memory directory; pass an empty FsStore to drive real files.
SpeedupReport simulate(std::span<const SimWorker> fleet, const JobSetup& setup, const SimConfig& sim,
                       std::span<const KillEvent> kills = {}, std::shared_ptr<Store> store = nullptr);

struct SweepRow {
    int p = 0;
    double makespan = 0.0;
    double speedup = 0.0;
    double efficiency = 0.0;
    std::int64_t wasted_duplicate = 0;
    std::int64_t wasted_outdated = 0;
};

// Homogeneous fleets of 1..max_p speed-1.0 workers.
std::vector<SweepRow> sweep_fleet_size(int max_p, const SimConfig& sim, const JobSetup& setup = {});
std::string sweep_csv(std::span<const SweepRow> rows);

struct InterruptionReport {
    SpeedupReport run;
    SpeedupReport baseline; // same fleet, no kills
    bool versions_gapless = false;
    bool no_killed_commits = false;
    // Largest relative change in evaluation throughput (per busy second) of a
    // worker that was never killed.
    double max_rate_deviation = 0.0;
};

InterruptionReport interruption_test(std::span<const SimWorker> fleet, std::span<const KillEvent> kills,
                                     const JobSetup& setup, const SimConfig& sim);

// Commits that changed some element other than their own proposal's index,
// i.e. silently reverted another worker's change. `log` starts with version 0.
std::int64_t count_lost_updates(std::span<const CommitEntry> log);

// ---- scripted interleavings -------------------------------------------------

struct ScriptStep {
    enum class Action { Read, Evaluate, Merge };
    std::string worker;
    Action action = Action::Read;
    Change change; // used by Evaluate
};

struct ScriptResult {
    std::vector<CommitEntry> commit_log; // starts with version 0
    std::vector<std::pair<std::string, MergeOutcome>> outcomes;
    std::int64_t lost_updates = 0;
    BestState final_state;
};

// Runs the steps in order against a fresh in-memory job. Each worker must
// Read, then Evaluate, then Merge.
ScriptResult run_script(const ObjectiveParams& objective, const ConfigVector& initial, std::span<const ScriptStep> steps,
                        OptimizerMode mode, bool second_read = true);

// ---- scenario files -----------------------------------------------------------

struct Scenario {
    std::vector<SimWorker> fleet;
    JobSetup setup;
    SimConfig sim;
    std::vector<KillEvent> kills;
};

Scenario parse_scenario(std::string_view text, std::string_view source);
std::string format_report(const SpeedupReport& report);

} // namespace scavenger::sim
