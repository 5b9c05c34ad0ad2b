#include "scavenger/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"

namespace scavenger::sim {

WorkerConfig SimWorker::default_config() {
    WorkerConfig c;
    c.idle_threshold = 0.0;
    c.daily_start = 0.0;
    c.daily_duration = 86400.0;
    return c;
}

std::string_view to_string(Category category) {
    switch (category) {
    case Category::Commit: return "commit";
    case Category::WastedDuplicate: return "wasted_duplicate";
    case Category::WastedOutdated: return "wasted_outdated";
    case Category::NotBetter: return "not_better";
    }
    return "?";
}

double ideal_speedup(std::span<const SimWorker> fleet, std::string_view reference) {
    const SimWorker* ref = nullptr;
    double total = 0.0;
    for (const auto& w : fleet) {
        total += w.speed_factor;
        if (w.id == reference) ref = &w;
    }
    if (ref == nullptr) throw ContractError(fmt::format("reference worker '{}' is not in the fleet", reference));
    return total / ref->speed_factor;
}

std::string reference_worker(std::span<const SimWorker> fleet) {
    if (fleet.empty()) throw ContractError("empty fleet");
    const SimWorker* best = &fleet[0];
    for (const auto& w : fleet) {
        if (w.speed_factor > best->speed_factor || (w.speed_factor == best->speed_factor && w.id < best->id)) best = &w;
    }
    return best->id;
}

std::int64_t count_lost_updates(std::span<const CommitEntry> log) {
    std::int64_t lost = 0;
    for (std::size_t i = 1; i < log.size(); ++i) {
        const auto& prev = log[i - 1].record.config;
        const auto& cur = log[i].record.config;
        for (std::size_t j = 0; j < cur.size() && j < prev.size(); ++j) {
            if (j != log[i].change.index && cur[j] != prev[j]) {
                ++lost;
                break;
            }
        }
    }
    return lost;
}

namespace {

// Idle while inside an availability interval, reset by kill events.
class AvailabilityProbe final : public IdleProbe {
public:
    AvailabilityProbe(std::vector<Interval> availability, std::vector<double> kills)
        : availability_(std::move(availability)), kills_(std::move(kills)) {
        std::sort(kills_.begin(), kills_.end());
    }

    const Interval* interval_at(double now) const {
        for (const auto& iv : availability_) {
            if (iv.start <= now && now < iv.end) return &iv;
        }
        return nullptr;
    }

    bool available(double now) const { return interval_at(now) != nullptr; }

    double idle_duration(double now) const override {
        const auto* iv = interval_at(now);
        if (iv == nullptr) return 0.0;
        double since = iv->start;
        for (double k : kills_) {
            if (k <= now && k >= since) since = k;
        }
        return now - since;
    }

private:
    std::vector<Interval> availability_;
    std::vector<double> kills_;
};

enum class Ev : int { Kill = 0, Tick = 1, ReadDone = 2, Checkpoint = 3, EvalDone = 4, MergeDone = 5 };

struct Event {
    double time = 0.0;
    int worker = -1; // -1: the master
    Ev kind = Ev::Tick;
    std::uint64_t epoch = 0;
    std::uint64_t seq = 0;

    auto key() const { return std::make_tuple(time, worker, static_cast<int>(kind), seq); }
    bool operator>(const Event& o) const { return key() > o.key(); }
};

enum class Phase { Idle, Reading, Evaluating, Merging };

struct WorkerState {
    SimWorker def;
    WorkerConfig config;
    std::unique_ptr<AvailabilityProbe> probe;
    std::mt19937_64 rng;
    Phase phase = Phase::Idle;
    std::uint64_t epoch = 0;
    double loop_started = 0.0;
    BestState base;
    Change change;
    double measured = 0.0;
    std::size_t proposal = 0; // index into report.proposals
    std::int64_t unflushed = 0;
    std::int64_t seen_version = -1;
    std::int64_t proposals_at_version = 0;
    std::set<std::pair<std::size_t, int>> tried;
    WorkerStats stats;
};

class Simulation {
public:
    Simulation(std::span<const SimWorker> fleet, const JobSetup& setup, const SimConfig& sim,
               std::span<const KillEvent> kills, std::shared_ptr<Store> store)
        : sim_(sim),
          store_(store ? std::move(store) : std::make_shared<MemoryStore>("sim:")),
          clock_(std::make_shared<VirtualClock>(0.0)),
          job_(store_, "sim", clock_),
          objective_(setup.objective.n, setup.objective.levels, setup.objective.target_order) {
        if (fleet.empty()) throw ContractError("fleet must not be empty");
        if (!(sim.t_eval > 0)) throw ContractError("t_eval must be > 0");
        if (!(sim.t_io >= 0)) throw ContractError("t_io must be >= 0");
        if (!(sim.checkpoint_interval > 0 && sim.checkpoint_interval <= 1)) {
            throw ContractError("checkpoint_interval must be in (0, 1]");
        }

        std::vector<SimWorker> sorted(fleet.begin(), fleet.end());
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            const auto& w = sorted[i];
            if (w.id.empty()) throw ContractError("worker id must not be empty");
            if (i > 0 && sorted[i - 1].id == w.id) throw ContractError(fmt::format("duplicate worker id '{}'", w.id));
            if (!(w.speed_factor > 0)) throw ContractError(fmt::format("worker '{}': speed_factor must be > 0", w.id));
            for (std::size_t j = 0; j < w.availability.size(); ++j) {
                const auto& iv = w.availability[j];
                if (!(iv.end > iv.start) || (j > 0 && iv.start < w.availability[j - 1].end)) {
                    throw ContractError(fmt::format("worker '{}': availability intervals must be ordered and disjoint", w.id));
                }
            }
            index_[w.id] = static_cast<int>(i);
        }

        std::map<std::string, std::vector<double>> kill_times;
        for (const auto& k : kills) {
            if (!index_.count(k.worker)) throw ContractError(fmt::format("kill for unknown worker '{}'", k.worker));
            kill_times[k.worker].push_back(k.time);
        }

        for (const auto& w : sorted) {
            WorkerState st;
            st.def = w;
            st.config = w.config;
            st.config.worker_id = w.id;
            st.config.jobs = {job_};
            st.config.mode = sim.mode;
            st.config.validate();
            st.probe = std::make_unique<AvailabilityProbe>(w.availability, kill_times[w.id]);
            auto h = checksum64(w.id);
            std::seed_seq seq{static_cast<std::uint32_t>(sim.seed), static_cast<std::uint32_t>(sim.seed >> 32),
                              static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
            st.rng.seed(seq);
            workers_.push_back(std::move(st));
        }

        auto initial = initial_config(setup.objective, setup.init_config, setup.init_seed);
        auto v0 = initialize(job_, initial, objective_, "master");
        signal_set(job_);
        report_.commit_log.push_back({v0, Change{}, -1, 0.0});

        for (std::size_t i = 0; i < workers_.size(); ++i) {
            push(0.0, static_cast<int>(i), Ev::Tick);
            for (double t : kill_times[workers_[i].def.id]) push(t, static_cast<int>(i), Ev::Kill);
            for (const auto& iv : workers_[i].def.availability) {
                if (std::isfinite(iv.end)) push(iv.end, static_cast<int>(i), Ev::Kill);
            }
        }
        if (sim.master_stop_at) push(*sim.master_stop_at, -1, Ev::Kill);
    }

    SpeedupReport run() {
        while (!queue_.empty()) {
            Event ev = queue_.top();
            queue_.pop();
            if (ev.time > sim_.horizon) {
                report_.incomplete = true;
                now_ = sim_.horizon;
                break;
            }
            now_ = ev.time;
            clock_->set(now_);
            if (ev.worker < 0) {
                master_stop();
            } else {
                auto& w = workers_[static_cast<std::size_t>(ev.worker)];
                if (ev.kind == Ev::Kill) {
                    kill(w);
                } else if (ev.kind == Ev::Tick) {
                    if (ev.epoch == w.epoch) tick(ev.worker, w);
                } else if (ev.epoch == w.epoch) {
                    handle(ev.worker, w, ev.kind);
                }
            }
            if (stopped_ && std::all_of(workers_.begin(), workers_.end(),
                                        [](const auto& w) { return w.phase == Phase::Idle; })) {
                break;
            }
        }
        if (queue_.empty() && !stopped_) report_.incomplete = true;
        return finish();
    }

private:
    void push(double t, int worker, Ev kind) {
        std::uint64_t epoch = worker >= 0 ? workers_[static_cast<std::size_t>(worker)].epoch : 0;
        queue_.push({t, worker, kind, epoch, seq_++});
    }

    bool signal() const { return signal_exists(job_); }

    // Reads and merges move best.dat across the one link to the master's
    // share, so they queue behind each other. Signal checks are treated as
    // free metadata lookups.
    double share_io() {
        double start = std::max(now_, share_free_at_);
        share_free_at_ = start + sim_.t_io;
        return share_free_at_;
    }

    void clear_signal() {
        signal_clear(job_);
        if (!stopped_) {
            stopped_ = true;
            report_.signal_cleared_at = now_;
            for (auto& w : workers_) {
                if (w.phase == Phase::Idle && !w.stats.quiesced_at) w.stats.quiesced_at = now_;
            }
        }
    }

    void master_stop() { clear_signal(); }

    double next_tick_after(const WorkerState& w, double t) const {
        double poll = w.config.poll_interval;
        double k = std::floor(t / poll) + 1.0;
        return k * poll;
    }

    void go_idle(int idx, WorkerState& w) {
        w.phase = Phase::Idle;
        ++w.epoch;
        guard_.release(w.def.id, job_.job_id());
        w.stats.busy_time += now_ - w.loop_started;
        if (stopped_ && !w.stats.quiesced_at) w.stats.quiesced_at = now_;
        push(next_tick_after(w, now_), idx, Ev::Tick);
    }

    void abandon(WorkerState& w, bool killed) {
        if (w.phase == Phase::Evaluating || w.phase == Phase::Merging) {
            auto& rec = report_.proposals[w.proposal];
            rec.finished = now_;
            rec.killed = killed;
            if (rec.completed) {
                rec.completed = false;
                --completed_;
                --w.stats.evaluations;
                --w.unflushed;
            }
            ++report_.abandoned;
        }
    }

    void kill(WorkerState& w) {
        if (w.phase == Phase::Idle) return;
        abandon(w, true);
        ++w.stats.killed;
        go_idle(index_.at(w.def.id), w);
    }

    void tick(int idx, WorkerState& w) {
        if (w.phase != Phase::Idle) return;
        TickDecision d;
        if (!w.probe->available(now_)) {
            d.reason = SkipReason::NotIdle;
        } else {
            d = scheduler_tick(w.config, *w.probe, *clock_, now_, guard_);
        }
        if (!d.start) {
            if (!stopped_) push(now_ + w.config.poll_interval, idx, Ev::Tick);
            return;
        }
        guard_.acquire(w.def.id, job_.job_id());
        ++w.stats.starts;
        w.loop_started = now_;
        w.seen_version = -1;
        begin_proposal(idx, w);
    }

    void begin_proposal(int idx, WorkerState& w) {
        if (!signal()) {
            go_idle(idx, w);
            return;
        }
        w.phase = Phase::Reading;
        push(share_io(), idx, Ev::ReadDone);
    }

    bool stop_condition_met(WorkerState& w) {
        const auto& stop = sim_.stop;
        if (stop.target_performance && w.base.performance >= *stop.target_performance) return true;
        if (stop.max_total_evaluations && completed_ >= *stop.max_total_evaluations) return true;
        if (stop.stagnation_proposals && w.proposals_at_version >= *stop.stagnation_proposals) return true;
        if (stop.local_optimum &&
            w.tried.size() >= objective_.length() * static_cast<std::size_t>(objective_.level_count() - 1)) {
            return true;
        }
        return false;
    }

    void handle(int idx, WorkerState& w, Ev kind) {
        switch (kind) {
        case Ev::ReadDone: {
            if (!signal()) {
                go_idle(idx, w);
                return;
            }
            w.base = read_best(job_);
            if (w.base.version != w.seen_version) {
                w.seen_version = w.base.version;
                w.proposals_at_version = 0;
                w.tried.clear();
            }
            if (stop_condition_met(w)) {
                clear_signal();
                go_idle(idx, w);
                return;
            }
            w.change = propose(w.base.config, objective_.level_count(), w.rng);
            ++w.proposals_at_version;
            ProposalRecord rec;
            rec.eval_id = static_cast<std::int64_t>(report_.proposals.size());
            rec.worker = w.def.id;
            rec.base_version = w.base.version;
            rec.change = w.change;
            rec.started = now_;
            w.proposal = report_.proposals.size();
            report_.proposals.push_back(rec);
            w.phase = Phase::Evaluating;

            double duration = sim_.t_eval * objective_.cost_hint() / w.def.speed_factor;
            for (int k = 1;; ++k) {
                double f = k * sim_.checkpoint_interval;
                if (f >= 1.0 - 1e-12) break;
                push(now_ + duration * f, idx, Ev::Checkpoint);
            }
            push(now_ + duration, idx, Ev::EvalDone);
            return;
        }
        case Ev::Checkpoint:
            if (!signal()) {
                abandon(w, false);
                go_idle(idx, w);
            }
            return;
        case Ev::EvalDone: {
            if (!signal()) {
                abandon(w, false);
                go_idle(idx, w);
                return;
            }
            if (sim_.stop.max_total_evaluations && completed_ >= *sim_.stop.max_total_evaluations) {
                // Budget already spent by other workers.
                abandon(w, false);
                begin_proposal(idx, w);
                return;
            }
            w.measured = objective_.evaluate(apply(w.base.config, w.change));
            ++completed_;
            ++w.stats.evaluations;
            ++w.unflushed;
            report_.proposals[w.proposal].completed = true;
            w.phase = Phase::Merging;
            push(share_io(), idx, Ev::MergeDone);
            return;
        }
        case Ev::MergeDone: {
            if (!signal()) {
                abandon(w, false);
                go_idle(idx, w);
                return;
            }
            merge(w);
            w.phase = Phase::Reading; // about to start the next proposal
            if (sim_.stop.max_total_evaluations && completed_ >= *sim_.stop.max_total_evaluations) {
                clear_signal();
                go_idle(idx, w);
                return;
            }
            if (sim_.stop.target_performance && read_best(job_).performance >= *sim_.stop.target_performance) {
                clear_signal();
                go_idle(idx, w);
                return;
            }
            begin_proposal(idx, w);
            return;
        }
        default: return;
        }
    }

    void merge(WorkerState& w) {
        MergeOptions mo;
        mo.mode = sim_.mode;
        mo.worker_id = w.def.id;
        mo.evaluations_to_flush = w.unflushed;
        mo.second_read = sim_.second_read;
        auto outcome = merge_evaluated(job_, w.base, w.change, w.measured, mo);

        auto& rec = report_.proposals[w.proposal];
        rec.finished = now_;
        rec.outcome = outcome.kind;
        auto key = std::make_tuple(w.base.version, w.change.index, w.change.new_value);
        bool duplicate = !seen_keys_.insert(key).second;

        if (outcome.kind == MergeKind::Committed) {
            rec.category = Category::Commit;
            ++report_.commits;
            ++w.stats.commits;
            w.unflushed = 0;
            report_.commit_log.push_back({outcome.latest, w.change, rec.eval_id, now_});
        } else if (duplicate) {
            rec.category = Category::WastedDuplicate;
            ++report_.wasted_duplicate;
        } else if (outcome.kind == MergeKind::RejectedConflict || outcome.kind == MergeKind::RejectedStale) {
            rec.category = Category::WastedOutdated;
            ++report_.wasted_outdated;
        } else {
            rec.category = Category::NotBetter;
            ++report_.rejected_not_better;
        }
        if (outcome.kind == MergeKind::RejectedNotBetter) w.tried.emplace(w.change.index, w.change.new_value);
    }

    SpeedupReport finish() {
        for (auto& w : workers_) {
            if (w.phase != Phase::Idle) {
                // Horizon cut the run short.
                w.stats.busy_time += now_ - w.loop_started;
            }
            report_.workers[w.def.id] = w.stats;
        }
        report_.evaluations_total = completed_;
        report_.makespan = report_.signal_cleared_at.value_or(now_);
        auto best = read_best(job_);
        report_.final_version = best.version;
        report_.final_performance = best.performance;
        report_.final_estimated = best.estimated;
        report_.lost_updates = count_lost_updates(report_.commit_log);
        return std::move(report_);
    }

    SimConfig sim_;
    std::shared_ptr<Store> store_;
    std::shared_ptr<VirtualClock> clock_;
    JobDirectory job_;
    PhaseMaskObjective objective_;
    std::vector<WorkerState> workers_;
    std::map<std::string, int> index_;
    InstanceGuard guard_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::uint64_t seq_ = 0;
    double now_ = 0.0;
    double share_free_at_ = 0.0;
    bool stopped_ = false;
    std::int64_t completed_ = 0;
    std::set<std::tuple<std::int64_t, std::size_t, int>> seen_keys_;
    SpeedupReport report_;
};

} // namespace

SpeedupReport simulate(std::span<const SimWorker> fleet, const JobSetup& setup, const SimConfig& sim,
                       std::span<const KillEvent> kills, std::shared_ptr<Store> store) {
    return Simulation(fleet, setup, sim, kills, std::move(store)).run();
}

SpeedupReport run_sim(std::span<const SimWorker> fleet, const JobSetup& setup, const SimConfig& sim,
                      std::span<const KillEvent> kills) {
    auto report = simulate(fleet, setup, sim, kills);
    auto ref_id = reference_worker(fleet);
    auto ref = std::find_if(fleet.begin(), fleet.end(), [&](const auto& w) { return w.id == ref_id; });
    std::vector<SimWorker> solo{*ref};
    auto baseline = simulate(solo, setup, sim);
    report.ideal_speedup = ideal_speedup(fleet, ref_id);
    report.speedup = report.makespan > 0 ? baseline.makespan / report.makespan : 0.0;
    report.efficiency = report.ideal_speedup > 0 ? report.speedup / report.ideal_speedup : 0.0;
    return report;
}

std::vector<SweepRow> sweep_fleet_size(int max_p, const SimConfig& sim, const JobSetup& setup) {
    if (max_p < 1) throw ContractError("max_p must be >= 1");
    std::vector<SweepRow> rows;
    std::optional<double> baseline;
    for (int p = 1; p <= max_p; ++p) {
        std::vector<SimWorker> fleet;
        for (int i = 0; i < p; ++i) {
            SimWorker w;
            w.id = fmt::format("w{:03d}", i);
            fleet.push_back(w);
        }
        auto r = simulate(fleet, setup, sim);
        if (!baseline) baseline = r.makespan; // p == 1, the reference alone
        SweepRow row;
        row.p = p;
        row.makespan = r.makespan;
        row.speedup = *baseline / r.makespan;
        row.efficiency = row.speedup / ideal_speedup(fleet, fleet[0].id);
        row.wasted_duplicate = r.wasted_duplicate;
        row.wasted_outdated = r.wasted_outdated;
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::string out = "p,speedup,efficiency,wasted_duplicate,wasted_outdated\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{}\n", r.p, format_double(r.speedup), format_double(r.efficiency),
                           r.wasted_duplicate, r.wasted_outdated);
    }
    return out;
}

InterruptionReport interruption_test(std::span<const SimWorker> fleet, std::span<const KillEvent> kills,
                                     const JobSetup& setup, const SimConfig& sim) {
    for (const auto& k : kills) {
        if (k.time > sim.horizon) throw ContractError("kill scheduled after the horizon");
    }
    InterruptionReport r;
    r.run = run_sim(fleet, setup, sim, kills);
    r.baseline = run_sim(fleet, setup, sim);

    r.versions_gapless = true;
    for (std::size_t i = 0; i < r.run.commit_log.size(); ++i) {
        if (r.run.commit_log[i].record.version != static_cast<std::int64_t>(i)) r.versions_gapless = false;
        if (i > 0 && !(r.run.commit_log[i].record.performance > r.run.commit_log[i - 1].record.performance)) {
            r.versions_gapless = false;
        }
    }

    std::set<std::int64_t> killed;
    for (const auto& p : r.run.proposals) {
        if (p.killed) killed.insert(p.eval_id);
    }
    r.no_killed_commits = std::none_of(r.run.commit_log.begin(), r.run.commit_log.end(),
                                       [&](const auto& c) { return killed.count(c.eval_id) > 0; });

    std::set<std::string> killed_workers;
    for (const auto& k : kills) killed_workers.insert(k.worker);
    for (const auto& [id, stats] : r.run.workers) {
        if (killed_workers.count(id)) continue;
        const auto& base = r.baseline.workers.at(id);
        if (stats.busy_time <= 0 || base.busy_time <= 0 || base.evaluations == 0) continue;
        double rate = static_cast<double>(stats.evaluations) / stats.busy_time;
        double base_rate = static_cast<double>(base.evaluations) / base.busy_time;
        r.max_rate_deviation = std::max(r.max_rate_deviation, std::abs(rate - base_rate) / base_rate);
    }
    return r;
}

// ---- scripted interleavings -------------------------------------------------

ScriptResult run_script(const ObjectiveParams& params, const ConfigVector& initial, std::span<const ScriptStep> steps,
                        OptimizerMode mode, bool second_read) {
    auto store = std::make_shared<MemoryStore>("script:");
    auto clock = std::make_shared<VirtualClock>(0.0);
    JobDirectory job(store, "script", clock);
    PhaseMaskObjective objective(params.n, params.levels, params.target_order);

    ScriptResult result;
    auto v0 = initialize(job, initial, objective, "master");
    signal_set(job);
    result.commit_log.push_back({v0, Change{}, -1, 0.0});

    struct Pending {
        std::optional<BestState> base;
        std::optional<Change> change;
        std::optional<double> measured;
    };
    std::map<std::string, Pending> pending;
    double t = 0.0;
    std::int64_t step_id = 0;
    for (const auto& step : steps) {
        clock->set(t += 1.0);
        auto& p = pending[step.worker];
        switch (step.action) {
        case ScriptStep::Action::Read:
            p = Pending{read_best(job), std::nullopt, std::nullopt};
            break;
        case ScriptStep::Action::Evaluate:
            if (!p.base) throw ContractError(fmt::format("{} evaluates before reading", step.worker));
            p.change = step.change;
            p.measured = objective.evaluate(apply(p.base->config, step.change));
            break;
        case ScriptStep::Action::Merge: {
            if (!p.measured) throw ContractError(fmt::format("{} merges before evaluating", step.worker));
            MergeOptions mo;
            mo.mode = mode;
            mo.worker_id = step.worker;
            mo.second_read = second_read;
            auto out = merge_evaluated(job, *p.base, *p.change, *p.measured, mo);
            if (out.kind == MergeKind::Committed) result.commit_log.push_back({out.latest, *p.change, step_id, t});
            result.outcomes.emplace_back(step.worker, out);
            p = Pending{};
            break;
        }
        }
        ++step_id;
    }
    result.lost_updates = count_lost_updates(result.commit_log);
    result.final_state = read_best(job);
    return result;
}

// ---- scenario files -----------------------------------------------------------

Scenario parse_scenario(std::string_view text, std::string_view source) {
    auto kv = KeyValues::parse(text, source);
    Scenario sc;
    WorkerConfig defaults = SimWorker::default_config();
    SimWorker* current = nullptr;
    int replicate = 1;
    std::vector<std::pair<std::string, int>> replicas;

    auto fail = [&](const KeyValue& e, std::string_view what) -> void {
        throw FormatError(fmt::format("{} line {}: {} ({}={})", source, e.line, what, e.key, e.value));
    };
    auto num = [&](const KeyValue& e) {
        try {
            return parse_double(e.value);
        } catch (const FormatError&) {
            fail(e, "not a number");
        }
        return 0.0;
    };
    auto integer = [&](const KeyValue& e) {
        try {
            return parse_int(e.value);
        } catch (const FormatError&) {
            fail(e, "not an integer");
        }
        return std::int64_t{0};
    };
    auto close_stanza = [&] {
        if (current != nullptr && replicate > 1) replicas.emplace_back(current->id, replicate);
        replicate = 1;
    };

    bool custom_availability = false;
    for (const auto& e : kv.entries()) {
        const auto& k = e.key;
        if (k == "worker") {
            close_stanza();
            SimWorker w;
            w.id = e.value;
            w.config = defaults;
            sc.fleet.push_back(w);
            current = &sc.fleet.back();
            custom_availability = false;
        } else if (k == "kill") {
            auto at = e.value.rfind('@');
            if (at == std::string::npos) fail(e, "expected <worker>@<time>");
            KillEvent ke;
            ke.worker = e.value.substr(0, at);
            try {
                ke.time = parse_double(std::string_view(e.value).substr(at + 1));
            } catch (const FormatError&) {
                fail(e, "bad kill time");
            }
            sc.kills.push_back(ke);
        } else if (current != nullptr && k == "speed") {
            current->speed_factor = num(e);
        } else if (current != nullptr && k == "available") {
            auto colon = e.value.find(':');
            if (colon == std::string::npos) fail(e, "expected <start>:<end>");
            Interval iv;
            try {
                iv.start = parse_double(std::string_view(e.value).substr(0, colon));
                auto end = std::string_view(e.value).substr(colon + 1);
                iv.end = (end == "inf" || end.empty()) ? kForever : parse_double(end);
            } catch (const FormatError&) {
                fail(e, "bad interval");
            }
            if (!custom_availability) current->availability.clear();
            custom_availability = true;
            current->availability.push_back(iv);
        } else if (current != nullptr && k == "replicate") {
            replicate = static_cast<int>(integer(e));
            if (replicate < 1) fail(e, "replicate must be >= 1");
        } else if (k == "poll_interval" || k == "idle_threshold" || k == "daily_start" || k == "daily_duration") {
            WorkerConfig& target = current != nullptr ? current->config : defaults;
            double v = num(e);
            if (k == "poll_interval") target.poll_interval = v;
            if (k == "idle_threshold") target.idle_threshold = v;
            if (k == "daily_start") target.daily_start = v;
            if (k == "daily_duration") target.daily_duration = v;
        } else if (k == "t_eval") {
            sc.sim.t_eval = num(e);
        } else if (k == "t_io") {
            sc.sim.t_io = num(e);
        } else if (k == "seed") {
            sc.sim.seed = static_cast<std::uint64_t>(integer(e));
        } else if (k == "horizon") {
            sc.sim.horizon = num(e);
        } else if (k == "mode") {
            sc.sim.mode = parse_mode(e.value);
        } else if (k == "checkpoint_interval") {
            sc.sim.checkpoint_interval = num(e);
        } else if (k == "second_read") {
            sc.sim.second_read = integer(e) != 0;
        } else if (k == "master_stop_at") {
            sc.sim.master_stop_at = num(e);
        } else if (k == "stop_max_evals") {
            sc.sim.stop.max_total_evaluations = integer(e);
        } else if (k == "stop_target") {
            sc.sim.stop.target_performance = num(e);
        } else if (k == "stop_stagnation") {
            sc.sim.stop.stagnation_proposals = integer(e);
        } else if (k == "stop_local_optimum") {
            sc.sim.stop.local_optimum = integer(e) != 0;
        } else if (k == "n") {
            sc.setup.objective.n = static_cast<std::size_t>(integer(e));
        } else if (k == "levels") {
            sc.setup.objective.levels = static_cast<int>(integer(e));
        } else if (k == "target_order") {
            sc.setup.objective.target_order = static_cast<std::size_t>(integer(e));
        } else if (k == "init_config") {
            sc.setup.init_config = e.value;
        } else if (k == "init_seed") {
            sc.setup.init_seed = static_cast<std::uint64_t>(integer(e));
        } else if (k == "objective") {
            if (e.value != "phase_mask") fail(e, "unknown objective");
        } else {
            fail(e, current != nullptr ? "unknown key in worker stanza" : "unknown key");
        }
    }
    close_stanza();

    for (const auto& [id, count] : replicas) {
        auto it = std::find_if(sc.fleet.begin(), sc.fleet.end(), [&](const auto& w) { return w.id == id; });
        SimWorker proto = *it;
        it->id = fmt::format("{}-1", id);
        for (int i = 2; i <= count; ++i) {
            SimWorker copy = proto;
            copy.id = fmt::format("{}-{}", id, i);
            sc.fleet.push_back(copy);
        }
    }
    if (sc.fleet.empty()) throw FormatError(fmt::format("{}: no worker= stanzas", source));
    return sc;
}

std::string format_report(const SpeedupReport& r) {
    std::string out;
    auto line = [&](std::string_view k, const auto& v) { out += fmt::format("{}={}\n", k, v); };
    line("makespan", format_double(r.makespan));
    line("evaluations_total", r.evaluations_total);
    line("commits", r.commits);
    line("wasted_duplicate", r.wasted_duplicate);
    line("wasted_outdated", r.wasted_outdated);
    line("rejected_not_better", r.rejected_not_better);
    line("abandoned", r.abandoned);
    line("speedup", format_double(r.speedup));
    line("ideal_speedup", format_double(r.ideal_speedup));
    line("efficiency", format_double(r.efficiency));
    line("incomplete", r.incomplete ? 1 : 0);
    line("final_version", r.final_version);
    line("final_performance", format_double(r.final_performance));
    line("final_estimated", r.final_estimated ? 1 : 0);
    line("lost_updates", r.lost_updates);
    for (const auto& [id, w] : r.workers) {
        line(fmt::format("worker.{}.evaluations", id), w.evaluations);
        line(fmt::format("worker.{}.commits", id), w.commits);
        line(fmt::format("worker.{}.killed", id), w.killed);
    }
    return out;
}

} // namespace scavenger::sim
