#include <fstream>

#include <doctest.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"
#include "scavenger/worker.hpp"
#include "support.hpp"

using namespace scavenger;

namespace {

constexpr double kHour = 3600.0;

// Runs a WorkLoop one proposal per `step_seconds` of virtual time and
// records when each commit happened.
class VirtualLauncher final : public LoopLauncher {
public:
    VirtualLauncher(const Objective& objective, double step_seconds, StopCondition stop = {})
        : objective_(objective), step_(step_seconds), stop_(stop) {}

    void start(const JobDirectory& job) override {
        WorkLoopOptions opt{"me"};
        opt.seed = starts++;
        opt.stop = stop_;
        loop_.emplace(job, objective_, opt);
        job_.emplace(job);
        next_ = job.clock().now() + step_;
        done_ = false;
    }
    bool running() override { return !done_; }
    void cancel() override {
        done_ = true;
        cancelled_at.push_back(job_->clock().now());
    }
    void wait() override {}
    void advance(double now) override {
        while (!done_ && next_ <= now) {
            auto before = loop_->report().commits;
            if (loop_->step()) done_ = true;
            if (loop_->report().commits > before) commit_times.push_back(next_);
            next_ += step_;
        }
    }

    std::vector<double> commit_times;
    std::vector<double> cancelled_at;
    std::uint64_t starts = 0;

private:
    const Objective& objective_;
    double step_;
    StopCondition stop_;
    std::optional<WorkLoop> loop_;
    std::optional<JobDirectory> job_;
    double next_ = 0;
    bool done_ = true;
};

WorkerConfig config_for(std::vector<JobDirectory> jobs) {
    WorkerConfig c;
    c.jobs = std::move(jobs);
    c.worker_id = "me";
    return c;
}

std::vector<DaemonEvent> starts_of(const DaemonReport& r) {
    std::vector<DaemonEvent> out;
    for (const auto& e : r.events) {
        if (e.kind == DaemonEvent::Kind::Start) out.push_back(e);
    }
    return out;
}

} // namespace

TEST_CASE("scheduler tick decisions") {
    testing::MemJob m;
    signal_set(m.job);
    auto cfg = config_for({m.job});
    VirtualClock clock(0);
    InstanceGuard guard;
    const double t = 15 * kHour;

    ScriptedIdleProbe idle2h(t - 2 * kHour);
    auto d = scheduler_tick(cfg, idle2h, clock, t, guard);
    CHECK(d.start);
    CHECK(d.job_index == 0);

    ScriptedIdleProbe idle10m(t - 600);
    d = scheduler_tick(cfg, idle10m, clock, t, guard);
    CHECK_FALSE(d.start);
    CHECK(d.reason == SkipReason::NotIdle);

    guard.acquire("me", "test");
    d = scheduler_tick(cfg, idle2h, clock, t, guard);
    CHECK(d.reason == SkipReason::AlreadyRunning);
    guard.release("me", "test");

    // 11:55 falls in the ten-minute gap of the 12:00 + 23h50 window.
    d = scheduler_tick(cfg, ScriptedIdleProbe(0), clock, 11 * kHour + 55 * 60, guard);
    CHECK(d.reason == SkipReason::OutsideWindow);
    CHECK(scheduler_tick(cfg, ScriptedIdleProbe(0), clock, 11 * kHour + 50 * 60, guard).reason ==
          SkipReason::OutsideWindow);
    CHECK(scheduler_tick(cfg, ScriptedIdleProbe(0), clock, 11 * kHour + 49 * 60, guard).start);

    signal_clear(m.job);
    d = scheduler_tick(cfg, idle2h, clock, t, guard);
    CHECK(d.reason == SkipReason::NoSignal);

    m.store->set_reachable(false);
    d = scheduler_tick(cfg, idle2h, clock, t, guard);
    CHECK(d.reason == SkipReason::ShareError);
}

TEST_CASE("the first signalled job wins") {
    testing::MemJob a, b, c;
    signal_set(b.job);
    signal_set(c.job);
    auto cfg = config_for({a.job, b.job, c.job});
    VirtualClock clock(0);
    InstanceGuard guard;
    auto d = scheduler_tick(cfg, ScriptedIdleProbe(0), clock, 15 * kHour, guard);
    CHECK(d.start);
    CHECK(d.job_index == 1);
}

TEST_CASE("single instance guard") {
    InstanceGuard g;
    CHECK(g.acquire("w", "j1") == GuardResult::Acquired);
    CHECK(g.acquire("w", "j1") == GuardResult::Busy);
    CHECK(g.acquire("w", "j2") == GuardResult::Acquired);
    g.release("w", "j1");
    CHECK(g.acquire("w", "j1") == GuardResult::Acquired);
    CHECK(g.busy("w", "j2"));
    CHECK_FALSE(g.busy("v", "j2"));
}

TEST_CASE("daily window wraps around midnight") {
    WorkerConfig c;
    CHECK(in_daily_window(c, 12 * kHour));
    CHECK(in_daily_window(c, 23 * kHour));
    CHECK(in_daily_window(c, 0));
    CHECK(in_daily_window(c, 11 * kHour + 49 * 60 + 59));
    CHECK_FALSE(in_daily_window(c, 11 * kHour + 50 * 60));
    CHECK_FALSE(in_daily_window(c, 11 * kHour + 59 * 60));
    c.daily_duration = 86400;
    CHECK(in_daily_window(c, 11 * kHour + 55 * 60));
}

TEST_CASE("scripted idle probe") {
    ScriptedIdleProbe p(9 * kHour);
    p.busy(14 * kHour, 14 * kHour + 60).activity({20 * kHour});
    CHECK(p.idle_duration(8 * kHour) == 0);
    CHECK(p.idle_duration(10 * kHour) == kHour);
    CHECK(p.idle_duration(14 * kHour + 30) == 0);
    CHECK(p.idle_duration(15 * kHour) == kHour - 60);
    CHECK(p.idle_duration(20 * kHour + 10) == 10);
}

TEST_CASE("daemon: idle since 09:00, signal at 10:00, user back at 14:00") {
    testing::MemJob m;
    PhaseMaskObjective o(32, 4, 1);
    initialize(m.job, ConfigVector{std::vector<int>(32, 0)}, o, "master");
    m.clock->set(0);
    auto cfg = config_for({m.job});

    ScriptedIdleProbe probe(9 * kHour);
    probe.busy(0, 9 * kHour).busy(14 * kHour, 14 * kHour + 300).busy(23 * kHour, 24 * kHour);
    VirtualLauncher launcher(o, 60.0);

    // Run up to just before 10:00, raise the signal as the master would,
    // then keep going on the same tick grid.
    DaemonOptions first;
    first.run_until = 10 * kHour - 1;
    auto r1 = run_daemon(cfg, probe, *m.clock, launcher, {}, first);
    CHECK(r1.starts == 0);
    CHECK(r1.skips[SkipReason::NotIdle] == 60); // 00:00 .. 09:50, idle never reaches an hour
    signal_set(m.job);
    DaemonOptions rest;
    rest.first_tick = 10 * kHour;
    rest.run_until = 24 * kHour;
    auto r2 = run_daemon(cfg, probe, *m.clock, launcher, {}, rest);

    auto s = starts_of(r2);
    REQUIRE(s.size() >= 1);
    CHECK(s[0].time == 10 * kHour);
    CHECK(r2.kills >= 1);
    REQUIRE(launcher.cancelled_at.size() >= 1);
    CHECK(launcher.cancelled_at[0] >= 14 * kHour);
    CHECK(launcher.cancelled_at[0] <= 14 * kHour + 1.0);
    for (double t : launcher.commit_times) CHECK_FALSE((t > 14 * kHour && t < 15 * kHour + 300));
    // Back to idle at 14:05 for an hour: restart at the first tick >= 15:05.
    REQUIRE(s.size() >= 2);
    CHECK(s[1].time == 15 * kHour + 600);
    // No two starts without a kill/completion in between.
    int live = 0;
    for (const auto& e : r2.events) {
        if (e.kind == DaemonEvent::Kind::Start) CHECK(++live == 1);
        if (e.kind == DaemonEvent::Kind::Kill || e.kind == DaemonEvent::Kind::Completed ||
            e.kind == DaemonEvent::Kind::Shutdown)
            --live;
    }
}

TEST_CASE("daemon: no signal means ticks only") {
    testing::MemJob m;
    m.clock->set(0);
    auto cfg = config_for({m.job});
    ScriptedIdleProbe probe(0);
    PhaseMaskObjective o(8, 2, 1);
    VirtualLauncher launcher(o, 60.0);
    DaemonOptions opt;
    opt.run_until = 24 * kHour;
    auto r = run_daemon(cfg, probe, *m.clock, launcher, {}, opt);
    CHECK(r.starts == 0);
    CHECK(r.ticks == 24 * 6 + 1); // 00:00, 00:10, ..., 24:00
    CHECK(r.skips[SkipReason::NoSignal] + r.skips[SkipReason::OutsideWindow] + r.skips[SkipReason::NotIdle] == r.ticks);
}

TEST_CASE("daemon: a finished loop frees the slot for the next job") {
    testing::MemJob a, b;
    PhaseMaskObjective o(8, 2, 1);
    for (auto* m : {&a, &b}) {
        initialize(m->job, ConfigVector{std::vector<int>(8, 0)}, o, "master");
        signal_set(m->job);
    }
    // Both jobs share a's clock so the daemon sees one timeline.
    JobDirectory job_b(b.store, "b", a.clock);
    a.clock->set(13 * kHour);
    auto cfg = config_for({a.job, job_b});
    StopCondition budget;
    budget.max_total_evaluations = 3;
    VirtualLauncher launcher(o, 60.0, budget);
    ScriptedIdleProbe probe(0);
    DaemonOptions opt;
    opt.run_until = 14 * kHour;
    auto r = run_daemon(cfg, probe, *a.clock, launcher, {}, opt);
    auto s = starts_of(r);
    REQUIRE(s.size() == 2);
    CHECK(s[0].job_id == "test");
    CHECK(s[1].job_id == "b");
    CHECK(s[1].time == 13 * kHour + 600);
    CHECK(r.completed_loops == 2);
    CHECK_FALSE(signal_exists(a.job));
    CHECK_FALSE(signal_exists(job_b));
}

TEST_CASE("worker config parsing") {
    testing::TempDir dir;
    auto text = fmt::format("poll_interval=300\nidle_threshold=0\ndaily_start=08:30\ndaily_duration=3600\n"
                            "worker_id=lab-pc-3\nmode=replace_if_better\njob={}\njob={}\n",
                            (dir / "a").string(), (dir / "b").string());
    auto c = WorkerConfig::parse(text, "w.cfg");
    CHECK(c.poll_interval == 300);
    CHECK(c.idle_threshold == 0);
    CHECK(c.daily_start == 8.5 * kHour);
    CHECK(c.daily_duration == 3600);
    CHECK(c.retry_window == 300);
    CHECK(c.worker_id == "lab-pc-3");
    CHECK(c.mode == OptimizerMode::ReplaceIfBetter);
    REQUIRE(c.jobs.size() == 2);
    CHECK(c.jobs[1].job_id() == "b");
    CHECK(c.seed == checksum64("lab-pc-3"));

    auto defaults = WorkerConfig::parse("job=/tmp/x\n", "w.cfg");
    CHECK(defaults.poll_interval == 600);
    CHECK(defaults.idle_threshold == 3600);
    CHECK(defaults.daily_start == 12 * kHour);
    CHECK(defaults.daily_duration == 85800);

    CHECK_THROWS_AS(WorkerConfig::parse("poll_interval=10\n", "w.cfg"), FormatError);
    CHECK_THROWS_AS(WorkerConfig::parse("job=/x\npoll_interval=0\n", "w.cfg"), FormatError);
    CHECK_THROWS_AS(WorkerConfig::parse("job=/x\ndaily_duration=90000\n", "w.cfg"), FormatError);
    CHECK_THROWS_AS(WorkerConfig::parse("job=/x\nmode=fast\n", "w.cfg"), FormatError);
    CHECK_THROWS_AS(WorkerConfig::parse("job=/x\ndaily_start=noon\n", "w.cfg"), FormatError);
    CHECK_THROWS_AS(WorkerConfig::parse("job=/x\nthis is not kv\n", "w.cfg"), FormatError);
}

TEST_CASE("thread launcher runs the manifest's job and can be cancelled") {
    testing::TempDir dir;
    auto job = JobDirectory::open(dir.path());
    {
        KeyValues kv;
        kv.add("job_id", "t");
        ObjectiveParams{"phase_mask", 8, 2, 1, 0.02}.write(kv);
        job.store().write_atomic(files::kManifest, kv.to_string());
    }
    PhaseMaskObjective o(8, 2, 1);
    initialize(job, ConfigVector{std::vector<int>(8, 0)}, o, "master");
    signal_set(job);
    ThreadLauncher launcher(WorkLoopOptions{"t1"});
    launcher.start(job);
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    CHECK(launcher.running());
    auto t0 = std::chrono::steady_clock::now();
    launcher.cancel();
    launcher.wait();
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(100));
    CHECK_FALSE(launcher.running());
    REQUIRE(launcher.last_report());
    CHECK(launcher.last_report()->exit == LoopExit::Cancelled);
    CHECK(std::filesystem::exists(dir / run_log_name("t1")));
}

TEST_CASE("system idle probe returns something sane") {
    WallClock clock;
    double idle = SystemIdleProbe{}.idle_duration(clock.now());
    CHECK(idle >= 0);
}
