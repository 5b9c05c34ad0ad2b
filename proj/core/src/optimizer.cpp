#include "scavenger/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <thread>
#include <utility>

#include <fmt/format.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"

namespace scavenger {

std::string_view to_string(OptimizerMode mode) {
    switch (mode) {
    case OptimizerMode::ReplaceIfBetter: return "replace_if_better";
    case OptimizerMode::ChangeMerge: return "change_merge";
    }
    return "?";
}

OptimizerMode parse_mode(std::string_view text) {
    if (text == "replace_if_better") return OptimizerMode::ReplaceIfBetter;
    if (text == "change_merge") return OptimizerMode::ChangeMerge;
    throw FormatError(fmt::format("unknown optimizer mode '{}' (replace_if_better | change_merge)", text));
}

std::string_view to_string(MergeKind kind) {
    switch (kind) {
    case MergeKind::Committed: return "committed";
    case MergeKind::RejectedNotBetter: return "rejected_not_better";
    case MergeKind::RejectedConflict: return "rejected_conflict";
    case MergeKind::RejectedStale: return "rejected_stale";
    }
    return "?";
}

std::string_view to_string(LoopExit exit) {
    switch (exit) {
    case LoopExit::SignalAbsent: return "signal_absent";
    case LoopExit::StopCondition: return "stop_condition";
    case LoopExit::Cancelled: return "cancelled";
    }
    return "?";
}

bool StopCondition::manual_only() const {
    return !max_total_evaluations && !target_performance && !stagnation_proposals && !local_optimum;
}

void StopCondition::write(KeyValues& out) const {
    if (max_total_evaluations) out.add("stop_max_evals", std::to_string(*max_total_evaluations));
    if (target_performance) out.add("stop_target", format_double(*target_performance));
    if (stagnation_proposals) out.add("stop_stagnation", std::to_string(*stagnation_proposals));
    if (local_optimum) out.add("stop_local_optimum", "1");
}

StopCondition StopCondition::read(const KeyValues& in) {
    StopCondition s;
    s.max_total_evaluations = in.get_int("stop_max_evals");
    s.target_performance = in.get_double("stop_target");
    s.stagnation_proposals = in.get_int("stop_stagnation");
    s.local_optimum = in.get_int("stop_local_optimum").value_or(0) != 0;
    if (s.max_total_evaluations && *s.max_total_evaluations < 1) {
        throw FormatError(fmt::format("{}: stop_max_evals must be >= 1", in.source()));
    }
    if (s.stagnation_proposals && *s.stagnation_proposals < 1) {
        throw FormatError(fmt::format("{}: stop_stagnation must be >= 1", in.source()));
    }
    return s;
}

BestState initialize(const JobDirectory& job, const ConfigVector& initial, const Objective& objective,
                     std::string_view worker_id, bool force) {
    objective.validate(initial);
    if (!force && job.store().exists(files::kBest)) {
        throw AlreadyInitializedError(
            fmt::format("job {} already initialized ({} exists in {})", job.job_id(), files::kBest, job.describe()));
    }
    BestState state;
    state.version = 0;
    state.config = initial;
    state.performance = objective.evaluate(initial);
    state.estimated = false;
    state.updated_by = std::string(worker_id);
    state.updated_at = job.clock().now();
    write_initial_best(job, state, force);
    return state;
}

Change propose(const ConfigVector& base, int level_count, std::mt19937_64& rng) {
    if (base.size() == 0) throw ContractError("cannot propose a change to an empty config");
    if (level_count < 2) throw ContractError("need at least two levels to propose a change");
    std::uniform_int_distribution<std::size_t> pick_index(0, base.size() - 1);
    std::uniform_int_distribution<int> pick_level(0, level_count - 2);
    Change c;
    c.index = pick_index(rng);
    int v = pick_level(rng);
    c.new_value = v >= base[c.index] ? v + 1 : v;
    return c;
}

namespace {

BestState make_record(std::int64_t version, ConfigVector config, double performance, bool estimated,
                      const JobDirectory& job, const MergeOptions& options) {
    BestState s;
    s.version = version;
    s.config = std::move(config);
    s.performance = performance;
    s.estimated = estimated;
    s.updated_by = options.worker_id;
    s.updated_at = job.clock().now();
    return s;
}

ChangeRecord make_change(const BestState& record, Change change, double delta, const MergeOptions& options) {
    return {record.version, change.index, change.new_value, delta, options.worker_id, options.evaluations_to_flush};
}

} // namespace

MergeOutcome merge_evaluated(const JobDirectory& job, const BestState& base, Change change, double measured,
                             const MergeOptions& options) {
    if (change.index >= base.config.size()) {
        throw ContractError(fmt::format("change index {} outside config of length {}", change.index, base.config.size()));
    }
    MergeOutcome out;
    out.measured = measured;
    out.delta = measured - base.performance;
    out.latest = base;
    if (!(measured > base.performance)) {
        out.kind = MergeKind::RejectedNotBetter;
        return out;
    }
    ConfigVector candidate = apply(base.config, change);

    if (!options.second_read) {
        // Single-read worker: trusts that `base` is still current and
        // overwrites whatever is there.
        std::int64_t expected = base.version;
        for (;;) {
            auto record = make_record(expected + 1, candidate, measured, false, job, options);
            auto log = make_change(record, change, out.delta, options);
            auto r = commit_update(job, expected, record, &log);
            if (r.committed()) {
                out.kind = MergeKind::Committed;
                out.new_version = record.version;
                out.latest = std::move(record);
                return out;
            }
            expected = r.current.version;
        }
    }

    BestState latest = read_best(job);
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        out.latest = latest;
        if (latest.config.size() != base.config.size()) {
            throw FormatError(fmt::format("best.dat config length changed from {} to {}", base.config.size(),
                                          latest.config.size()));
        }
        BestState record;
        if (latest.version == base.version) {
            record = make_record(base.version + 1, candidate, measured, false, job, options);
        } else if (latest.config[change.index] != base.config[change.index]) {
            out.kind = MergeKind::RejectedConflict;
            return out;
        } else if (options.mode == OptimizerMode::ChangeMerge) {
            record = make_record(latest.version + 1, apply(latest.config, change), latest.performance + out.delta,
                                 true, job, options);
        } else if (measured > latest.performance) {
            record = make_record(latest.version + 1, candidate, measured, false, job, options);
        } else {
            out.kind = MergeKind::RejectedStale;
            return out;
        }

        auto log = make_change(record, change, out.delta, options);
        auto r = commit_update(job, latest.version, record, &log);
        if (r.committed()) {
            out.kind = MergeKind::Committed;
            out.new_version = record.version;
            out.latest = std::move(record);
            return out;
        }
        latest = std::move(r.current);
    }
    out.latest = latest;
    out.kind = MergeKind::RejectedStale;
    return out;
}

std::optional<MergeOutcome> evaluate_and_merge(const JobDirectory& job, const BestState& base, Change change,
                                               const Objective& objective, const MergeOptions& options,
                                               const Checkpoint& checkpoint) {
    auto measured = objective.evaluate(apply(base.config, change), checkpoint);
    if (!measured) return std::nullopt;
    return merge_evaluated(job, base, change, *measured, options);
}

bool check_stop_during_evaluation(const JobDirectory& job, double /*elapsed_fraction*/) {
    try {
        return signal_exists(job);
    } catch (const Error& e) {
        logger()->warn("signal check failed, stopping evaluation: {}", e.what());
        return false;
    }
}

std::string run_log_name(std::string_view worker_id) {
    std::string name = "run-";
    for (char c : worker_id) name += (c == '/' || c == '\\') ? '_' : c;
    name += ".log";
    return name;
}

RunLog job_run_log(const JobDirectory& job, std::string_view worker_id) {
    return [job, name = run_log_name(worker_id)](const RunLogEntry& e) {
        try {
            job.store().append(name, fmt::format("{} {} {} {}\n", format_double(e.timestamp), e.base_version,
                                                 e.change.index, to_string(e.outcome)));
        } catch (const IoError& err) {
            logger()->warn("run log: {}", err.what());
        }
    };
}

std::int64_t recorded_evaluations(const JobDirectory& job) {
    std::int64_t total = 0;
    for (const auto& c : read_changes(job)) total += c.evaluations;
    return total;
}

namespace {

// Retries transient I/O trouble with backoff; anything else propagates.
template <class F>
auto with_retry(const WorkLoopOptions& options, std::stop_token cancel, F&& f) -> decltype(f()) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(options.io_retry_deadline);
    double backoff = 0.01;
    for (;;) {
        try {
            return f();
        } catch (const NotInitializedError&) {
            throw;
        } catch (const IoError& e) {
            if (std::chrono::steady_clock::now() >= deadline || cancel.stop_requested()) throw;
            logger()->warn("transient I/O error, retrying: {}", e.what());
        } catch (const ContentionError& e) {
            if (std::chrono::steady_clock::now() >= deadline || cancel.stop_requested()) throw;
            logger()->warn("lock contention, retrying: {}", e.what());
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff = std::min(backoff * 2, 1.0);
    }
}

} // namespace

WorkLoop::WorkLoop(JobDirectory job, const Objective& objective, WorkLoopOptions options)
    : job_(std::move(job)), objective_(objective), options_(std::move(options)), rng_(options_.seed) {
    if (!(options_.checkpoint_interval > 0.0)) throw ContractError("checkpoint_interval must be > 0");
}

std::optional<LoopExit> WorkLoop::stop_now(std::string_view why, std::stop_token cancel) {
    logger()->info("{}: stop condition met ({}), clearing signal", options_.worker_id, why);
    with_retry(options_, cancel, [&] { signal_clear(job_); });
    report_.exit = LoopExit::StopCondition;
    return report_.exit;
}

std::optional<LoopExit> WorkLoop::step(std::stop_token cancel) {
    auto finish = [&](LoopExit e) {
        report_.exit = e;
        return std::optional<LoopExit>(e);
    };
    if (cancel.stop_requested()) return finish(LoopExit::Cancelled);
    if (!with_retry(options_, cancel, [&] { return signal_exists(job_); })) return finish(LoopExit::SignalAbsent);

    BestState base = with_retry(options_, cancel, [&] { return read_best(job_); });
    if (base.version != seen_version_) {
        seen_version_ = base.version;
        proposals_at_version_ = 0;
        tried_at_version_.clear();
    }

    const auto& stop = options_.stop;
    if (stop.target_performance && base.performance >= *stop.target_performance) {
        return stop_now("target performance", cancel);
    }
    if (stop.max_total_evaluations) {
        auto total = with_retry(options_, cancel, [&] { return recorded_evaluations(job_); }) + unflushed_;
        if (total >= *stop.max_total_evaluations) return stop_now("evaluation budget", cancel);
    }
    if (stop.stagnation_proposals && proposals_at_version_ >= *stop.stagnation_proposals) {
        return stop_now("stagnation", cancel);
    }
    const std::size_t neighbour_count =
        objective_.length() * static_cast<std::size_t>(objective_.level_count() - 1);
    if (stop.local_optimum && tried_at_version_.size() >= neighbour_count) {
        return stop_now("local optimum", cancel);
    }

    Change change = propose(base.config, objective_.level_count(), rng_);
    ++proposals_at_version_;

    double next_check = options_.checkpoint_interval;
    Checkpoint checkpoint = [&](double fraction) {
        if (cancel.stop_requested()) return false;
        if (fraction + 1e-12 < next_check) return true;
        while (next_check <= fraction + 1e-12) next_check += options_.checkpoint_interval;
        return check_stop_during_evaluation(job_, fraction);
    };
    auto measured = objective_.evaluate(apply(base.config, change), checkpoint);
    if (!measured) {
        ++report_.abandoned;
        return std::nullopt;
    }
    ++report_.evaluations;
    ++unflushed_;
    // Cancelled between evaluation and merge: the result is dropped.
    if (cancel.stop_requested()) return finish(LoopExit::Cancelled);

    MergeOptions mo;
    mo.mode = options_.mode;
    mo.worker_id = options_.worker_id;
    mo.evaluations_to_flush = unflushed_;
    mo.second_read = options_.second_read;
    auto outcome = with_retry(options_, cancel, [&] { return merge_evaluated(job_, base, change, *measured, mo); });

    switch (outcome.kind) {
    case MergeKind::Committed:
        ++report_.commits;
        unflushed_ = 0;
        break;
    case MergeKind::RejectedNotBetter:
        ++report_.rejected_not_better;
        tried_at_version_.emplace(change.index, change.new_value);
        break;
    case MergeKind::RejectedConflict: ++report_.rejected_conflict; break;
    case MergeKind::RejectedStale: ++report_.rejected_stale; break;
    }
    if (options_.run_log) options_.run_log({job_.clock().now(), base.version, change, outcome.kind});
    return std::nullopt;
}

LoopReport work_loop(const JobDirectory& job, const Objective& objective, const WorkLoopOptions& options,
                     std::stop_token cancel) {
    WorkLoop loop(job, objective, options);
    while (!loop.step(cancel)) {
    }
    return loop.report();
}

EstimateAudit audit_estimate(const BestState& state, const Objective& objective) {
    EstimateAudit a;
    a.recorded = state.performance;
    a.actual = objective.evaluate(state.config);
    a.drift = std::abs(a.recorded - a.actual);
    a.estimated = state.estimated;
    return a;
}

} // namespace scavenger
