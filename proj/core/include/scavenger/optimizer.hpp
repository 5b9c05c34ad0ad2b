#pragma once

// Distributed single-change hill climbing over the shared best state.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <stop_token>
#include <string>
#include <string_view>
#include <utility>

#include "scavenger/coordination.hpp"
#include "scavenger/objective.hpp"

namespace scavenger {

class KeyValues;

enum class OptimizerMode {
    // A winning proposal replaces the whole global config with base + change.
    ReplaceIfBetter,
    // A winning proposal is re-applied to the latest global config and its
    // performance estimated as latest + delta.
    ChangeMerge,
};

std::string_view to_string(OptimizerMode mode);
OptimizerMode parse_mode(std::string_view text);

// Any-of composition; all fields unset means stop only when the signal clears.
struct StopCondition {
    std::optional<std::int64_t> max_total_evaluations;
    std::optional<double> target_performance;
    // No commit observed during the last K proposals of a worker.
    std::optional<std::int64_t> stagnation_proposals;
    // Every neighbour of the current best has been tried and rejected.
    bool local_optimum = false;

    bool manual_only() const;
    void write(KeyValues& out) const;
    static StopCondition read(const KeyValues& in);
};

enum class MergeKind { Committed, RejectedNotBetter, RejectedConflict, RejectedStale };
std::string_view to_string(MergeKind kind);

struct MergeOutcome {
    MergeKind kind = MergeKind::RejectedNotBetter;
    std::int64_t new_version = -1; // set when committed
    double measured = 0.0;
    double delta = 0.0;
    // The record that decided the outcome: the new record when committed,
    // otherwise the latest one read.
    BestState latest;
};

// Evaluates `initial` and writes version 0. Init-once: throws
// AlreadyInitializedError unless `force`.
BestState initialize(const JobDirectory& job, const ConfigVector& initial, const Objective& objective,
                     std::string_view worker_id, bool force = false);

// Uniform index, then a uniform level other than the current one.
Change propose(const ConfigVector& base, int level_count, std::mt19937_64& rng);

struct MergeOptions {
    OptimizerMode mode = OptimizerMode::ChangeMerge;
    std::string worker_id;
    // Evaluations run since this worker's last commit; written to changes.log.
    std::int64_t evaluations_to_flush = 1;
    int max_retries = 8;
    // false reproduces the naive single-read worker: it overwrites the global
    // record whenever it beat the base it started from.
    bool second_read = true;
};

// Everything after the evaluation: re-read, decide, commit.
MergeOutcome merge_evaluated(const JobDirectory& job, const BestState& base, Change change, double measured,
                             const MergeOptions& options);

// Evaluate base + change, then merge. nullopt when the checkpoint abandoned
// the evaluation (nothing is written).
std::optional<MergeOutcome> evaluate_and_merge(const JobDirectory& job, const BestState& base, Change change,
                                               const Objective& objective, const MergeOptions& options,
                                               const Checkpoint& checkpoint = {});

// true = keep going. Unreachable share counts as "stop".
bool check_stop_during_evaluation(const JobDirectory& job, double elapsed_fraction);

struct RunLogEntry {
    double timestamp = 0.0;
    std::int64_t base_version = 0;
    Change change;
    MergeKind outcome = MergeKind::RejectedNotBetter;
};

using RunLog = std::function<void(const RunLogEntry&)>;

// Appends "timestamp base_version index outcome" lines to run-<worker>.log in
// the job directory.
RunLog job_run_log(const JobDirectory& job, std::string_view worker_id);
std::string run_log_name(std::string_view worker_id);

enum class LoopExit { SignalAbsent, StopCondition, Cancelled };
std::string_view to_string(LoopExit exit);

struct LoopReport {
    std::int64_t evaluations = 0;
    std::int64_t commits = 0;
    std::int64_t rejected_not_better = 0;
    std::int64_t rejected_conflict = 0;
    std::int64_t rejected_stale = 0;
    std::int64_t abandoned = 0;
    LoopExit exit = LoopExit::SignalAbsent;
};

struct WorkLoopOptions {
    std::string worker_id;
    OptimizerMode mode = OptimizerMode::ChangeMerge;
    StopCondition stop;
    std::uint64_t seed = 0;
    // Share of an evaluation between signal checks.
    double checkpoint_interval = 0.1;
    // Transient I/O errors are retried for this long before propagating.
    double io_retry_deadline = 30.0;
    bool second_read = true;
    RunLog run_log;
};

// One worker's optimization loop, steppable so virtual-time drivers can run
// it one proposal at a time.
class WorkLoop {
public:
    WorkLoop(JobDirectory job, const Objective& objective, WorkLoopOptions options);

    // check signal -> read best -> stop checks -> propose -> evaluate -> merge.
    // Returns the exit reason once the loop is over, nullopt to keep going.
    std::optional<LoopExit> step(std::stop_token cancel = {});

    const LoopReport& report() const { return report_; }

private:
    std::optional<LoopExit> stop_now(std::string_view why, std::stop_token cancel);

    JobDirectory job_;
    const Objective& objective_;
    WorkLoopOptions options_;
    std::mt19937_64 rng_;
    LoopReport report_;
    std::int64_t unflushed_ = 0;
    std::int64_t seen_version_ = -1;
    std::int64_t proposals_at_version_ = 0;
    std::set<std::pair<std::size_t, int>> tried_at_version_;
};

// Runs WorkLoop::step until the signal clears, a stop condition fires (this
// worker then clears the signal), or `cancel` is requested.
// NotInitializedError propagates.
LoopReport work_loop(const JobDirectory& job, const Objective& objective, const WorkLoopOptions& options,
                     std::stop_token cancel = {});

// Fleet-wide evaluation count as recorded in changes.log.
std::int64_t recorded_evaluations(const JobDirectory& job);

struct EstimateAudit {
    double recorded = 0.0;
    double actual = 0.0;
    double drift = 0.0; // |recorded - actual|
    bool estimated = false;
};

EstimateAudit audit_estimate(const BestState& state, const Objective& objective);

} // namespace scavenger
