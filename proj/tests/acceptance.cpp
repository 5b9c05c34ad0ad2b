// Acceptance run: one PASS/FAIL line per criterion, with wall time against
// its budget. Exits non-zero if any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "scavenger/coordination.hpp"
#include "scavenger/errors.hpp"
#include "scavenger/objective.hpp"
#include "scavenger/optimizer.hpp"
#include "scavenger/simharness.hpp"
#include "scavenger/worker.hpp"
#include "support.hpp"

using namespace scavenger;

namespace {

constexpr double kHour = 3600.0;

struct Outcome {
    bool ok = false;
    std::string detail;
};

int failures = 0;

void criterion(int number, std::string_view name, double budget_seconds, const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, fmt::format("exception: {}", e.what())};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = secs < budget_seconds;
    bool pass = out.ok && in_time;
    if (!pass) ++failures;
    fmt::print("AC{} {} {} ({:.2f}s / {:.0f}s){}{}\n", number, pass ? "PASS" : "FAIL", name, secs, budget_seconds,
               out.detail.empty() ? "" : ": ", out.detail);
    if (!in_time) fmt::print("AC{}   over the time budget\n", number);
    std::fflush(stdout);
}

sim::SimConfig budget(std::int64_t evals, std::uint64_t seed) {
    sim::SimConfig c;
    c.t_eval = 1.0;
    c.t_io = 0.001;
    c.seed = seed;
    c.stop.max_total_evaluations = evals;
    return c;
}

std::vector<sim::SimWorker> identical(int p) {
    std::vector<sim::SimWorker> fleet;
    for (int i = 0; i < p; ++i) {
        sim::SimWorker w;
        w.id = fmt::format("w{:02d}", i);
        fleet.push_back(w);
    }
    return fleet;
}

BestState record(std::int64_t version, std::string by) {
    BestState s;
    s.version = version;
    s.config = ConfigVector{std::vector<int>(8, static_cast<int>(version % 2))};
    s.performance = static_cast<double>(version) * 0.001;
    s.updated_by = std::move(by);
    s.updated_at = static_cast<double>(version);
    return s;
}

// ---- 1 ------------------------------------------------------------------------

Outcome near_ideal_sweep() {
    auto rows = sim::sweep_fleet_size(10, budget(1000, 1));
    double worst = 1.0;
    for (const auto& r : rows) worst = std::min(worst, r.efficiency);
    bool ok = rows.size() == 10 && rows[0].efficiency == 1.0 && worst >= 0.90;
    for (const auto& r : rows) ok = ok && r.efficiency <= 1.0 + 1e-9;
    return {ok, fmt::format("min efficiency {:.6f} over p=1..10 (p=10: {:.6f})", worst, rows.back().efficiency)};
}

// ---- 2 ------------------------------------------------------------------------

Outcome clock_rate_fleet() {
    std::vector<sim::SimWorker> fleet;
    auto add = [&](std::string id, double speed) {
        sim::SimWorker w;
        w.id = std::move(id);
        w.speed_factor = speed;
        fleet.push_back(w);
    };
    for (int i = 1; i <= 4; ++i) add(fmt::format("pii400-{}", i), 0.4);
    for (int i = 1; i <= 4; ++i) add(fmt::format("piii500-{}", i), 0.5);
    add("piii1000", 1.0);
    add("athlon850", 0.85);
    auto r = sim::run_sim(fleet, {}, budget(1000, 1));
    bool ok = r.efficiency >= 0.90 && r.efficiency <= 1.0 + 1e-9 && !r.incomplete &&
              sim::reference_worker(fleet) == "piii1000";
    return {ok, fmt::format("speedup {:.4f} of ideal {:.4f}, efficiency {:.6f}", r.speedup, r.ideal_speedup,
                            r.efficiency)};
}

// ---- 3 ------------------------------------------------------------------------

Outcome second_read() {
    using A = sim::ScriptStep::Action;
    ObjectiveParams p{"phase_mask", 8, 4, 1, 0.0};
    ConfigVector zero{std::vector<int>(8, 0)};
    // Both read version 0, A commits first, then B merges a disjoint change.
    std::vector<sim::ScriptStep> steps{{"A", A::Read, {}},         {"B", A::Read, {}},  {"A", A::Evaluate, {0, 1}},
                                       {"B", A::Evaluate, {3, 2}}, {"A", A::Merge, {}}, {"B", A::Merge, {}}};
    auto naive = sim::run_script(p, zero, steps, OptimizerMode::ChangeMerge, false);
    auto safe = sim::run_script(p, zero, steps, OptimizerMode::ChangeMerge, true);
    bool ok = naive.lost_updates >= 1 && safe.lost_updates == 0;
    return {ok, fmt::format("lost updates without second read {}, with {}", naive.lost_updates, safe.lost_updates)};
}

// ---- 4 ------------------------------------------------------------------------

Outcome crash_safety() {
    testing::TempDir dir;
    const LockPolicy policy{0.005, 5.0, 0.0005, 0.002};
    auto job = testing::fs_job(dir.path(), policy);
    write_initial_best(job, record(0, "master"), false);

    // How many hook points one uncontended commit passes through.
    int steps_per_commit = 0;
    {
        testing::TempDir probe_dir;
        auto counting = std::make_shared<FsStore>(
            probe_dir.path(), FsStoreOptions{false, [&](std::string_view) { ++steps_per_commit; }});
        JobDirectory probe(counting, "probe", std::make_shared<WallClock>(), policy);
        write_initial_best(probe, record(0, "master"), false);
        steps_per_commit = 0;
        commit_update(probe, 0, record(1, "x"));
    }
    if (steps_per_commit < 2) return {false, "fault hooks not reached"};

    std::mt19937_64 rng(4);
    // One past the last hook means the commit runs to completion.
    std::uniform_int_distribution<int> kill_at(1, steps_per_commit + 1);
    std::set<std::string> committed{serialize_best(record(0, "master"))};
    BestState current = record(0, "master");
    int killed = 0;
    int completed = 0;
    for (int round = 0; round < 1000; ++round) {
        int target = kill_at(rng);
        auto attempt = record(current.version + 1, fmt::format("child{}", round));
        std::fflush(stdout);
        pid_t pid = ::fork();
        if (pid == 0) {
            int seen = 0;
            FsStoreOptions opts{false, [&](std::string_view) {
                                    if (++seen == target) ::raise(SIGKILL);
                                }};
            JobDirectory child(std::make_shared<FsStore>(dir.path(), opts), "job", std::make_shared<WallClock>(),
                               policy);
            try {
                commit_update(child, current.version, attempt);
            } catch (...) {
                ::_exit(3);
            }
            ::_exit(0);
        }
        int status = 0;
        ::waitpid(pid, &status, 0);
        if (WIFSIGNALED(status)) {
            ++killed;
        } else if (WIFEXITED(status) && WEXITSTATUS(status) == 0) {
            ++completed;
        } else {
            return {false, fmt::format("round {}: child exited with status {}", round, status)};
        }

        auto text = job.store().read(files::kBest);
        if (!text) return {false, fmt::format("round {}: best.dat missing", round)};
        BestState now;
        try {
            now = parse_best(*text);
        } catch (const FormatError& e) {
            return {false, fmt::format("round {}: {}", round, e.what())};
        }
        if (now == attempt) committed.insert(*text);
        if (!committed.count(*text)) return {false, fmt::format("round {}: best.dat is not a committed record", round)};
        current = now;
    }
    return {true, fmt::format("{} kills, {} clean commits, final version {}, {} hook points per commit", killed,
                              completed, current.version, steps_per_commit)};
}

// ---- 5 ------------------------------------------------------------------------

Outcome cas_soundness() {
    testing::TempDir dir;
    constexpr int kProcs = 8;
    constexpr int kRounds = 200;
    const LockPolicy policy{30.0, 60.0, 0.0005, 0.01};
    {
        auto job = testing::fs_job(dir.path(), policy);
        write_initial_best(job, record(0, "master"), false);
    }
    std::vector<pid_t> pids;
    std::fflush(stdout);
    for (int p = 0; p < kProcs; ++p) {
        pid_t pid = ::fork();
        if (pid == 0) {
            int rc = 0;
            try {
                auto job = testing::fs_job(dir.path(), policy);
                std::ofstream wins(dir / fmt::format("wins-{}.txt", p));
                std::string me = fmt::format("p{}", p);
                for (int r = 0; r < kRounds; ++r) {
                    while (read_best(job).version < r) std::this_thread::yield();
                    ChangeRecord change{r + 1, 0, 0, 0.001, me, 1};
                    auto res = commit_update(job, r, record(r + 1, me), &change);
                    if (res.committed()) wins << (r + 1) << '\n';
                }
            } catch (...) {
                rc = 1;
            }
            ::_exit(rc);
        }
        pids.push_back(pid);
    }
    for (auto pid : pids) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "a racing process failed"};
    }

    std::map<std::int64_t, std::vector<std::string>> winners;
    for (int p = 0; p < kProcs; ++p) {
        std::ifstream in(dir / fmt::format("wins-{}.txt", p));
        std::int64_t v = 0;
        while (in >> v) winners[v].push_back(fmt::format("p{}", p));
    }
    auto job = testing::fs_job(dir.path(), policy);
    auto log = read_changes(job);
    int violations = 0;
    for (std::int64_t v = 1; v <= kRounds; ++v) {
        if (winners[v].size() != 1) ++violations;
    }
    if (winners.size() != kRounds) ++violations;
    if (log.size() != kRounds) ++violations;
    for (std::size_t i = 0; i < log.size(); ++i) {
        auto v = static_cast<std::int64_t>(i) + 1;
        if (log[i].version != v || winners[v].size() != 1 || winners[v][0] != log[i].proposer) ++violations;
    }
    auto best = read_best(job);
    if (best.version != kRounds || best.updated_by != winners[kRounds].at(0)) ++violations;
    return {violations == 0, fmt::format("{} processes x {} rounds, {} violations", kProcs, kRounds, violations)};
}

// ---- 6 ------------------------------------------------------------------------

Outcome oracle_equivalence() {
    // Brute-force optimum of n=8, L=2, k=1: (2 + sqrt 2) / 8 at 00001111.
    constexpr double kOptimum = 0.42677669529663687;
    PhaseMaskObjective o(8, 2, 1);
    auto brute = brute_force_optimum(o);
    if (std::abs(brute.value - kOptimum) > 1e-15) return {false, fmt::format("brute force gives {}", brute.value)};
    ObjectiveParams params{"phase_mask", 8, 2, 1, 0.0};

    int hits = 0;
    int not_local = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        testing::MemJob m;
        initialize(m.job, initial_config(params, "random", seed), o, "master");
        signal_set(m.job);
        WorkLoopOptions opt{"solo"};
        opt.seed = seed;
        opt.stop.local_optimum = true;
        auto rep = work_loop(m.job, o, opt);
        auto fin = read_best(m.job);
        if (rep.exit != LoopExit::StopCondition || fin.estimated) ++not_local;
        double actual = o.evaluate(fin.config);
        for (auto ch : neighbors(o, fin.config)) {
            if (o.evaluate(apply(fin.config, ch)) > actual) {
                ++not_local;
                break;
            }
        }
        if (std::abs(actual - kOptimum) <= 1e-12) ++hits;
    }
    return {hits >= 1 && not_local == 0,
            fmt::format("{} of 50 restarts reach {:.17g}; {} not at a local optimum", hits, kOptimum, not_local)};
}

// ---- 7 ------------------------------------------------------------------------

Outcome normalization() {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> n_dist(1, 64);
    std::uniform_int_distribution<int> l_dist(2, 8);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto n = n_dist(rng);
        int levels = l_dist(rng);
        PhaseMaskObjective o(n, levels, 0);
        std::uniform_int_distribution<int> level(0, levels - 1);
        ConfigVector c{std::vector<int>(n)};
        for (auto& v : c.levels) v = level(rng);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) sum += o.efficiency(c, k);
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return {worst <= 1e-12, fmt::format("max |sum - 1| = {:.3g}", worst)};
}

// ---- 8 ------------------------------------------------------------------------

// Runs a WorkLoop one proposal per virtual minute; never finishes on its own.
class MinuteLauncher final : public LoopLauncher {
public:
    explicit MinuteLauncher(const Objective& objective) : objective_(objective) {}
    void start(const JobDirectory& job) override {
        WorkLoopOptions opt{"me"};
        opt.seed = starts_++;
        loop_.emplace(job, objective_, opt);
        next_ = job.clock().now() + 60.0;
        done_ = false;
    }
    bool running() override { return !done_; }
    void cancel() override { done_ = true; }
    void wait() override {}
    void advance(double now) override {
        while (!done_ && next_ <= now) {
            if (loop_->step()) done_ = true;
            next_ += 60.0;
        }
    }

private:
    const Objective& objective_;
    std::optional<WorkLoop> loop_;
    std::uint64_t starts_ = 0;
    double next_ = 0.0;
    bool done_ = true;
};

struct TraceCheck {
    std::vector<double> starts;
    std::vector<double> kills;
    int double_starts = 0;
    int late_kills = 0;
};

TraceCheck run_trace(const std::vector<std::pair<double, double>>& busy, double idle_origin, double until) {
    testing::MemJob m;
    PhaseMaskObjective o(32, 4, 1);
    initialize(m.job, ConfigVector{std::vector<int>(32, 0)}, o, "master");
    signal_set(m.job);
    m.clock->set(0.0);
    WorkerConfig cfg;
    cfg.jobs = {m.job};
    cfg.worker_id = "me";
    ScriptedIdleProbe probe(idle_origin);
    for (auto [s, e] : busy) probe.busy(s, e);
    MinuteLauncher launcher(o);
    DaemonOptions opt;
    opt.run_until = until;
    auto report = run_daemon(cfg, probe, *m.clock, launcher, {}, opt);

    TraceCheck out;
    bool live = false;
    std::optional<double> live_since;
    for (const auto& e : report.events) {
        if (e.kind == DaemonEvent::Kind::Start) {
            if (live) ++out.double_starts;
            live = true;
            live_since = e.time;
            out.starts.push_back(e.time);
        } else if (e.kind == DaemonEvent::Kind::Kill) {
            live = false;
            out.kills.push_back(e.time);
        } else if (e.kind == DaemonEvent::Kind::Completed || e.kind == DaemonEvent::Kind::Shutdown) {
            live = false;
        }
    }
    // Every activity onset while a loop was live must be followed by a kill
    // within one second.
    for (auto [s, e] : busy) {
        bool running_at = false;
        for (std::size_t i = 0; i < out.starts.size(); ++i) {
            double end = until;
            for (double k : out.kills) {
                if (k >= out.starts[i]) {
                    end = k;
                    break;
                }
            }
            if (out.starts[i] < s && s < end) running_at = true;
        }
        if (!running_at) continue;
        bool killed = std::any_of(out.kills.begin(), out.kills.end(), [&](double k) { return k >= s && k <= s + 1.0; });
        if (!killed) ++out.late_kills;
    }
    return out;
}

Outcome scheduler_contract() {
    // Idle from 09:00; user back 14:00-14:05 and 23:00-24:00.
    auto day = run_trace({{0, 9 * kHour}, {14 * kHour, 14 * kHour + 300}, {23 * kHour, 24 * kHour}}, 9 * kHour,
                         30 * kHour);
    const std::vector<double> want_starts{10 * kHour, 15 * kHour + 600, 25 * kHour};
    bool ok = day.starts == want_starts && day.kills.size() == 2 && day.kills[0] >= 14 * kHour &&
              day.kills[0] <= 14 * kHour + 1 && day.kills[1] >= 23 * kHour && day.kills[1] <= 23 * kHour + 1 &&
              day.double_starts == 0 && day.late_kills == 0;
    std::string detail = fmt::format("scripted day: starts {}, kills {}", day.starts.size(), day.kills.size());

    // Random traces: no double starts, no late kills.
    std::mt19937_64 rng(8);
    int doubles = 0;
    int late = 0;
    int kills = 0;
    for (int trace = 0; trace < 40; ++trace) {
        std::vector<std::pair<double, double>> busy;
        double t = std::uniform_real_distribution<double>(0, 2 * kHour)(rng);
        while (t < 48 * kHour) {
            double len = std::uniform_real_distribution<double>(1, 3 * kHour)(rng);
            busy.emplace_back(t, t + len);
            t += len + std::uniform_real_distribution<double>(60, 6 * kHour)(rng);
        }
        auto r = run_trace(busy, 0.0, 48 * kHour);
        doubles += r.double_starts;
        late += r.late_kills;
        kills += static_cast<int>(r.kills.size());
    }
    ok = ok && doubles == 0 && late == 0 && kills > 0;
    detail += fmt::format("; 40 random traces: {} kills, {} late, {} double starts", kills, late, doubles);
    return {ok, detail};
}

// ---- 9 ------------------------------------------------------------------------

Outcome stop_latency() {
    auto c = budget(0, 1);
    c.stop = {};
    double worst = 0.0;
    int late_commits = 0;
    int unquiesced = 0;
    const double interval = c.checkpoint_interval * c.t_eval;
    for (double stop_at : {37.25, 100.0, 250.0625}) {
        c.master_stop_at = stop_at;
        auto r = sim::simulate(identical(10), {}, c);
        for (const auto& [id, w] : r.workers) {
            if (!w.quiesced_at) {
                ++unquiesced;
                continue;
            }
            worst = std::max(worst, *w.quiesced_at - stop_at);
        }
        for (const auto& e : r.commit_log) {
            if (e.time > stop_at + interval) ++late_commits;
        }
    }
    bool ok = unquiesced == 0 && worst <= interval + 1e-12 && late_commits == 0;
    return {ok, fmt::format("worst quiesce {:.4f}s vs interval {:.4f}s, {} late commits", worst, interval,
                            late_commits)};
}

// ---- 10 -----------------------------------------------------------------------

Outcome serial_equivalence() {
    PhaseMaskObjective o(16, 4, 3);
    int mismatches = 0;
    for (std::uint64_t seed : {1u, 17u, 99u}) {
        std::vector<std::string> trajectories;
        for (auto mode : {OptimizerMode::ReplaceIfBetter, OptimizerMode::ChangeMerge}) {
            testing::MemJob m;
            initialize(m.job, ConfigVector{std::vector<int>(16, 0)}, o, "master");
            signal_set(m.job);
            WorkLoopOptions opt{"solo"};
            opt.mode = mode;
            opt.seed = seed;
            opt.stop.max_total_evaluations = 300;
            work_loop(m.job, o, opt);
            trajectories.push_back(*m.store->read(files::kChanges) + serialize_best(read_best(m.job)));
        }
        if (trajectories[0] != trajectories[1]) ++mismatches;

        auto a = budget(300, seed);
        auto b = a;
        b.mode = OptimizerMode::ReplaceIfBetter;
        auto ra = sim::simulate(identical(1), {}, a);
        auto rb = sim::simulate(identical(1), {}, b);
        if (ra.commit_log != rb.commit_log) ++mismatches;
    }
    return {mismatches == 0, fmt::format("{} trajectory mismatches over 3 seeds", mismatches)};
}

} // namespace

int main() {
    logger()->set_level(spdlog::level::err);
    criterion(1, "near-ideal speedup, p=1..10", 10, near_ideal_sweep);
    criterion(2, "clock-rate heterogeneous fleet", 5, clock_rate_fleet);
    criterion(3, "second read prevents lost updates", 1, second_read);
    criterion(4, "crash safety under 1000 kill points", 30, crash_safety);
    criterion(5, "compare-and-swap across 8 processes", 60, cas_soundness);
    criterion(6, "hill climbing vs brute-force optimum", 5, oracle_equivalence);
    criterion(7, "diffraction orders sum to one", 2, normalization);
    criterion(8, "scheduler start/skip/kill contract", 1, scheduler_contract);
    criterion(9, "stop latency", 5, stop_latency);
    criterion(10, "serial mode equivalence", 1, serial_equivalence);
    fmt::print("{} of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
