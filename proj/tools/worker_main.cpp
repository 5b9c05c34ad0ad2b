// worker run|once|tick|probe

#include <atomic>
#include <csignal>
#include <iostream>
#include <limits>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"
#include "scavenger/worker.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

constexpr int kConfigError = 2;

class FixedIdleProbe final : public scavenger::IdleProbe {
public:
    explicit FixedIdleProbe(double idle) : idle_(idle) {}
    double idle_duration(double) const override { return idle_; }

private:
    double idle_;
};

} // namespace

int main(int argc, char** argv) {
    using namespace scavenger;

    CLI::App app{"Idle-scavenging worker daemon for shared-directory optimization jobs"};
    app.require_subcommand(1);

    std::string config_path;
    double now = 0;
    std::optional<double> idle_override;
    bool virtual_time = false;
    bool assume_idle = false;

    auto* run_cmd = app.add_subcommand("run", "poll the configured jobs and work while the machine is idle");
    run_cmd->add_option("--config", config_path, "worker config file")->required();
    run_cmd->add_flag("--assume-idle", assume_idle, "ignore user activity (dedicated machines)");

    std::string job_path;
    std::string worker_id;
    std::string mode = "change_merge";
    std::uint64_t seed = 0;
    auto* once_cmd = app.add_subcommand("once", "if go.dat exists, run the optimization loop until it is deleted");
    once_cmd->add_option("--job", job_path, "job directory")->required();
    once_cmd->add_option("--worker-id", worker_id, "defaults to host:pid");
    once_cmd->add_option("--mode", mode, "replace_if_better | change_merge")
        ->check(CLI::IsMember({"replace_if_better", "change_merge"}));
    once_cmd->add_option("--seed", seed, "proposal stream seed");

    auto* tick_cmd = app.add_subcommand("tick", "print one scheduler decision and exit");
    tick_cmd->add_option("--config", config_path, "worker config file")->required();
    tick_cmd->add_option("--now", now, "timestamp in seconds")->required();
    tick_cmd->add_option("--idle", idle_override, "pretend the user has been idle this many seconds");
    tick_cmd->add_flag("--virtual", virtual_time, "treat --now as seconds since local midnight of day 0");

    app.add_subcommand("probe", "print the current idle estimate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    if (app.got_subcommand("probe")) {
        WallClock clock;
        fmt::print("idle_seconds={}\n", format_double(SystemIdleProbe{}.idle_duration(clock.now())));
        return 0;
    }

    if (once_cmd->parsed()) {
        try {
            auto job = JobDirectory::open(job_path);
            WorkLoopOptions options;
            options.worker_id = worker_id.empty() ? default_worker_id() : worker_id;
            options.mode = parse_mode(mode);
            options.seed = seed;
            ThreadLauncher launcher(options);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            if (!check_stop_during_evaluation(job, 0.0)) {
                fmt::print("ran=0\n");
                return 0;
            }
            launcher.start(job);
            while (launcher.running()) {
                if (g_interrupted) launcher.cancel();
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
            launcher.wait();
            if (auto err = launcher.last_error()) {
                fmt::print(stderr, "error: {}\n", *err);
                return 1;
            }
            auto r = *launcher.last_report();
            fmt::print("ran=1\nexit={}\nevaluations={}\ncommits={}\nrejected_not_better={}\nrejected_conflict={}\n"
                       "rejected_stale={}\nabandoned={}\n",
                       to_string(r.exit), r.evaluations, r.commits, r.rejected_not_better, r.rejected_conflict,
                       r.rejected_stale, r.abandoned);
            return 0;
        } catch (const FormatError& e) {
            fmt::print(stderr, "error: {}\n", e.what());
            return kConfigError;
        } catch (const std::exception& e) {
            fmt::print(stderr, "error: {}\n", e.what());
            return 1;
        }
    }

    std::shared_ptr<Clock> clock;
    if (virtual_time) {
        clock = std::make_shared<VirtualClock>(now);
    } else {
        clock = std::make_shared<WallClock>();
    }

    WorkerConfig config;
    try {
        config = WorkerConfig::load(config_path, clock);
    } catch (const Error& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    }

    if (tick_cmd->parsed()) {
        std::unique_ptr<IdleProbe> probe;
        if (idle_override) {
            probe = std::make_unique<FixedIdleProbe>(*idle_override);
        } else {
            probe = std::make_unique<SystemIdleProbe>();
        }
        InstanceGuard guard;
        auto d = scheduler_tick(config, *probe, *clock, now, guard);
        if (d.start) {
            fmt::print("decision=start\njob={}\n", config.jobs[d.job_index].describe());
        } else {
            fmt::print("decision=skip\nreason={}\n", to_string(d.reason));
        }
        return 0;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::unique_ptr<IdleProbe> probe;
    if (assume_idle) {
        probe = std::make_unique<FixedIdleProbe>(std::numeric_limits<double>::infinity());
    } else {
        probe = std::make_unique<SystemIdleProbe>();
    }
    WorkLoopOptions options;
    options.worker_id = config.worker_id;
    options.mode = config.mode;
    options.seed = config.seed;
    ThreadLauncher launcher(options);
    std::stop_source stop;
    std::jthread watcher([&](std::stop_token st) {
        while (!st.stop_requested() && !g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        stop.request_stop();
    });
    auto report = run_daemon(config, *probe, *clock, launcher, stop.get_token());
    watcher.request_stop();
    fmt::print("ticks={}\nstarts={}\nkills={}\ncompleted_loops={}\n", report.ticks, report.starts, report.kills,
               report.completed_loops);
    return 0;
}
