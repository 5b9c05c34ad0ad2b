#include "scavenger/worker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <sys/stat.h>

#include <fmt/format.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"

namespace scavenger {

namespace {

// "HH:MM", "HH:MM:SS" or plain seconds.
double parse_time_of_day(const KeyValue& kv, std::string_view source) {
    std::string_view v = kv.value;
    try {
        if (v.find(':') == std::string_view::npos) return parse_double(v);
        double total = 0.0;
        double scale = 3600.0;
        while (!v.empty()) {
            auto c = v.find(':');
            total += scale * static_cast<double>(parse_int(v.substr(0, c)));
            scale /= 60.0;
            v = c == std::string_view::npos ? std::string_view{} : v.substr(c + 1);
        }
        return total;
    } catch (const FormatError&) {
        throw FormatError(fmt::format("{} line {}: bad time of day '{}'", source, kv.line, kv.value));
    }
}

} // namespace

void WorkerConfig::validate() const {
    if (!(poll_interval > 0)) throw ContractError("poll_interval must be > 0");
    if (!(idle_threshold >= 0)) throw ContractError("idle_threshold must be >= 0");
    if (!(daily_duration > 0 && daily_duration <= 86400)) throw ContractError("daily_duration must be in (0, 86400]");
    if (!(daily_start >= 0 && daily_start < 86400)) throw ContractError("daily_start must be in [0, 86400)");
    if (!(probe_granule > 0)) throw ContractError("probe_granule must be > 0");
    if (jobs.empty()) throw ContractError("worker needs at least one job directory");
    if (worker_id.empty()) throw ContractError("worker_id must not be empty");
}

WorkerConfig WorkerConfig::parse(std::string_view text, std::string_view source, std::shared_ptr<Clock> clock) {
    auto kv = KeyValues::parse(text, source);
    if (!clock) clock = std::make_shared<WallClock>();
    WorkerConfig c;
    c.poll_interval = kv.get_double("poll_interval").value_or(c.poll_interval);
    c.idle_threshold = kv.get_double("idle_threshold").value_or(c.idle_threshold);
    c.retry_window = kv.get_double("retry_window").value_or(c.retry_window);
    if (const auto* e = kv.find("daily_start")) c.daily_start = parse_time_of_day(*e, source);
    c.daily_duration = kv.get_double("daily_duration").value_or(c.daily_duration);
    c.probe_granule = kv.get_double("probe_granule").value_or(c.probe_granule);
    c.worker_id = kv.get("worker_id").value_or(default_worker_id());
    if (auto m = kv.get("mode")) c.mode = parse_mode(*m);
    if (auto s = kv.get_int("seed")) {
        c.seed = static_cast<std::uint64_t>(*s);
    } else {
        c.seed = checksum64(c.worker_id);
    }
    for (const auto& path : kv.all("job")) c.jobs.push_back(JobDirectory::open(path, clock));
    try {
        c.validate();
    } catch (const ContractError& e) {
        throw FormatError(fmt::format("{}: {}", source, e.what()));
    }
    return c;
}

WorkerConfig WorkerConfig::load(const std::filesystem::path& file, std::shared_ptr<Clock> clock) {
    std::ifstream in(file);
    if (!in) throw IoError(fmt::format("cannot read worker config {}", file.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), file.string(), std::move(clock));
}

ScriptedIdleProbe& ScriptedIdleProbe::busy(double start, double end) {
    if (end < start) throw ContractError("busy interval ends before it starts");
    busy_.emplace_back(start, end);
    return *this;
}

ScriptedIdleProbe& ScriptedIdleProbe::activity(ActivityEvent event) { return busy(event.timestamp, event.timestamp); }

double ScriptedIdleProbe::idle_duration(double now) const {
    double last = origin_;
    for (const auto& [s, e] : busy_) {
        if (s > now) continue;
        if (now < e) return 0.0;
        last = std::max(last, e);
    }
    return std::max(0.0, now - last);
}

double SystemIdleProbe::idle_duration(double now) const {
    double latest = -std::numeric_limits<double>::infinity();
    std::error_code ec;
    for (const char* dir : {"/dev/pts", "/dev"}) {
        for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
            auto name = entry.path().filename().string();
            bool tty = std::string_view(dir) == "/dev/pts" ? std::isdigit(static_cast<unsigned char>(name[0])) != 0
                                                           : name.starts_with("tty") && name.size() > 3;
            if (!tty) continue;
            struct stat st {};
            if (::stat(entry.path().c_str(), &st) != 0) continue;
            double atime = static_cast<double>(st.st_atim.tv_sec) + st.st_atim.tv_nsec * 1e-9;
            latest = std::max(latest, atime);
        }
    }
    if (std::isfinite(latest)) return std::max(0.0, now - latest);
    std::ifstream up("/proc/uptime");
    double uptime = 0.0;
    if (up >> uptime) return uptime;
    return std::numeric_limits<double>::infinity();
}

std::string_view to_string(SkipReason reason) {
    switch (reason) {
    case SkipReason::OutsideWindow: return "outside_window";
    case SkipReason::NotIdle: return "not_idle";
    case SkipReason::AlreadyRunning: return "already_running";
    case SkipReason::NoSignal: return "no_signal";
    case SkipReason::ShareError: return "share_error";
    }
    return "?";
}

GuardResult InstanceGuard::acquire(std::string_view worker_id, std::string_view job_id) {
    std::lock_guard lock(mu_);
    auto [it, inserted] = live_.emplace(std::string(worker_id), std::string(job_id));
    return inserted ? GuardResult::Acquired : GuardResult::Busy;
}

void InstanceGuard::release(std::string_view worker_id, std::string_view job_id) {
    std::lock_guard lock(mu_);
    live_.erase(std::pair<std::string, std::string>(worker_id, job_id));
}

bool InstanceGuard::busy(std::string_view worker_id, std::string_view job_id) const {
    std::lock_guard lock(mu_);
    return live_.count(std::pair<std::string, std::string>(worker_id, job_id)) > 0;
}

bool InstanceGuard::any_busy(std::string_view worker_id) const {
    std::lock_guard lock(mu_);
    return std::any_of(live_.begin(), live_.end(), [&](const auto& p) { return p.first == worker_id; });
}

bool in_daily_window(const WorkerConfig& config, double time_of_day) {
    if (config.daily_duration >= 86400) return true;
    double offset = time_of_day - config.daily_start;
    if (offset < 0) offset += 86400;
    return offset < config.daily_duration;
}

TickDecision scheduler_tick(const WorkerConfig& config, const IdleProbe& probe, const Clock& clock, double now,
                            const InstanceGuard& guard) {
    TickDecision d;
    if (guard.any_busy(config.worker_id)) {
        d.reason = SkipReason::AlreadyRunning;
        return d;
    }
    if (!in_daily_window(config, clock.time_of_day(now))) {
        d.reason = SkipReason::OutsideWindow;
        return d;
    }
    if (probe.idle_duration(now) < config.idle_threshold) {
        d.reason = SkipReason::NotIdle;
        return d;
    }
    bool share_error = false;
    for (std::size_t i = 0; i < config.jobs.size(); ++i) {
        try {
            if (signal_exists(config.jobs[i])) {
                d.start = true;
                d.job_index = i;
                return d;
            }
        } catch (const Error& e) {
            logger()->debug("{}: signal check failed: {}", config.worker_id, e.what());
            share_error = true;
        }
    }
    d.reason = share_error ? SkipReason::ShareError : SkipReason::NoSignal;
    return d;
}

ThreadLauncher::ThreadLauncher(WorkLoopOptions base_options) : base_options_(std::move(base_options)) {}

ThreadLauncher::~ThreadLauncher() {
    cancel();
    wait();
}

void ThreadLauncher::start(const JobDirectory& job) {
    wait();
    {
        std::lock_guard lock(mu_);
        done_ = false;
        report_.reset();
        error_.reset();
    }
    auto options = base_options_;
    options.seed = base_options_.seed + launches_++;
    thread_ = std::jthread([this, job, options = std::move(options)](std::stop_token st) mutable {
        std::optional<LoopReport> report;
        std::optional<std::string> error;
        try {
            auto text = job.store().read(files::kManifest);
            if (!text) throw NotInitializedError(fmt::format("{}: no manifest.dat", job.describe()));
            auto manifest = KeyValues::parse(*text, files::kManifest);
            auto objective = make_objective(ObjectiveParams::read(manifest));
            options.stop = StopCondition::read(manifest);
            if (!options.run_log) options.run_log = job_run_log(job, options.worker_id);
            report = work_loop(job, *objective, options, st);
        } catch (const std::exception& e) {
            logger()->error("{}: work loop on {} failed: {}", options.worker_id, job.describe(), e.what());
            error = e.what();
        }
        std::lock_guard lock(mu_);
        report_ = report;
        error_ = error;
        done_ = true;
    });
}

bool ThreadLauncher::running() {
    std::lock_guard lock(mu_);
    return !done_;
}

void ThreadLauncher::cancel() {
    if (thread_.joinable()) thread_.request_stop();
}

void ThreadLauncher::wait() {
    if (thread_.joinable()) thread_.join();
}

std::optional<LoopReport> ThreadLauncher::last_report() const {
    std::lock_guard lock(mu_);
    return report_;
}

std::optional<std::string> ThreadLauncher::last_error() const {
    std::lock_guard lock(mu_);
    return error_;
}

DaemonReport run_daemon(const WorkerConfig& config, const IdleProbe& probe, Clock& clock, LoopLauncher& launcher,
                        std::stop_token cancel, DaemonOptions options) {
    config.validate();
    DaemonReport report;
    InstanceGuard guard;
    std::optional<std::size_t> active;

    double now = clock.now();
    double next_tick = options.first_tick.value_or(now);
    double last_check = now;
    double last_idle = probe.idle_duration(now);

    auto finish_active = [&](DaemonEvent::Kind kind, double t) {
        launcher.wait();
        const auto& job = config.jobs[*active];
        guard.release(config.worker_id, job.job_id());
        report.events.push_back({kind, t, job.job_id(), std::nullopt});
        if (kind == DaemonEvent::Kind::Kill) ++report.kills;
        if (kind == DaemonEvent::Kind::Completed) ++report.completed_loops;
        active.reset();
    };

    while (!cancel.stop_requested()) {
        now = clock.now();
        if (options.run_until && now > *options.run_until) break;

        double idle = probe.idle_duration(now);
        bool activity = idle + 1e-9 < last_idle + (now - last_check);
        last_idle = idle;
        last_check = now;

        if (active) {
            if (activity) {
                launcher.cancel();
                finish_active(DaemonEvent::Kind::Kill, now);
            } else {
                launcher.advance(now);
                if (!launcher.running()) finish_active(DaemonEvent::Kind::Completed, now);
            }
        }

        if (now >= next_tick) {
            ++report.ticks;
            auto d = scheduler_tick(config, probe, clock, now, guard);
            if (d.start) {
                const auto& job = config.jobs[d.job_index];
                guard.acquire(config.worker_id, job.job_id());
                active = d.job_index;
                ++report.starts;
                report.events.push_back({DaemonEvent::Kind::Start, now, job.job_id(), std::nullopt});
                launcher.start(job);
            } else {
                ++report.skips[d.reason];
                report.events.push_back({DaemonEvent::Kind::Tick, now, "", d.reason});
                if (d.reason == SkipReason::ShareError) {
                    logger()->warn("{}: job share unreachable at tick {}", config.worker_id, now);
                }
            }
            while (next_tick <= now) next_tick += config.poll_interval;
        }

        double wake = std::min(now + config.probe_granule, next_tick);
        if (options.run_until && wake > *options.run_until) {
            if (now >= *options.run_until) break;
            wake = *options.run_until;
        }
        clock.sleep_until(wake);
    }

    if (active) {
        launcher.cancel();
        finish_active(DaemonEvent::Kind::Shutdown, clock.now());
    }
    return report;
}

} // namespace scavenger
