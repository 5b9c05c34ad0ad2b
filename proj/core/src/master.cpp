#include "scavenger/master.hpp"

#include <map>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "scavenger/coordination.hpp"
#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"

namespace scavenger::master {

namespace {

void print(std::ostream& out, std::string_view key, const auto& value) { fmt::print(out, "{}={}\n", key, value); }

KeyValues read_manifest(const JobDirectory& job) {
    auto text = job.store().read(files::kManifest);
    if (!text) throw NotInitializedError(fmt::format("{}: no {}", job.describe(), files::kManifest));
    return KeyValues::parse(*text, fmt::format("{}/{}", job.describe(), files::kManifest));
}

// Maps library exceptions onto the documented exit codes.
template <class F>
int guarded(std::ostream& err, F&& f) {
    try {
        return f();
    } catch (const NotInitializedError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kWrongState;
    } catch (const AlreadyInitializedError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kWrongState;
    } catch (const ContractError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kInvalidArguments;
    } catch (const IoError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kIoFailure;
    } catch (const ContentionError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kIoFailure;
    } catch (const FormatError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kIoFailure;
    }
}

} // namespace

int cmd_init(const std::filesystem::path& dir, const InitOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        // Validate everything before touching the directory.
        KeyValues manifest;
        manifest.add("job_id", options.job_id.empty()
                                   ? std::filesystem::absolute(dir).lexically_normal().filename().string()
                                   : options.job_id);
        options.objective.write(manifest);
        try {
            ObjectiveParams::read(KeyValues::parse(manifest.to_string(), "arguments"));
        } catch (const FormatError& e) {
            throw ContractError(e.what());
        }
        options.stop.write(manifest);
        manifest.add("init_config", options.init_config);
        manifest.add("seed", std::to_string(options.seed));
        auto config = initial_config(options.objective, options.init_config, options.seed);
        auto objective = make_objective(options.objective);
        if (manifest.find("job_id")->value.empty()) throw ContractError("job_id must not be empty");

        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

        auto job = JobDirectory::open(dir);
        if (!options.force && job.store().exists(files::kBest)) {
            throw AlreadyInitializedError(fmt::format("{} already holds {}; use --force to reinitialize",
                                                      dir.string(), files::kBest));
        }
        if (options.force) {
            for (const auto& name : job.store().list()) {
                if (name.starts_with("run-") && name.ends_with(".log")) job.store().remove(name);
            }
        }
        job.store().write_atomic(files::kManifest, manifest.to_string());
        job = JobDirectory::open(dir);
        // Evaluate without any artificial delay.
        auto params = options.objective;
        params.eval_cost = 0;
        auto state = initialize(job, config, *make_objective(params),
                                options.worker_id.empty() ? default_worker_id() : options.worker_id, options.force);
        print(out, "job_id", job.job_id());
        print(out, "version", state.version);
        print(out, "performance", format_double(state.performance));
        print(out, "config", to_string(state.config));
        return static_cast<int>(kOk);
    });
}

int cmd_start(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto job = JobDirectory::open(dir);
        read_best(job);
        signal_set(job);
        print(out, "signal", 1);
        return static_cast<int>(kOk);
    });
}

int cmd_stop(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto job = JobDirectory::open(dir);
        signal_clear(job);
        print(out, "signal", 0);
        return static_cast<int>(kOk);
    });
}

int cmd_status(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto job = JobDirectory::open(dir);
        bool signal = signal_exists(job);
        auto best = read_best(job);
        auto changes = read_changes(job);
        std::int64_t evaluations = 0;
        for (const auto& c : changes) evaluations += c.evaluations;
        print(out, "job_id", job.job_id());
        print(out, "signal", signal ? 1 : 0);
        print(out, "version", best.version);
        print(out, "performance", format_double(best.performance));
        print(out, "estimated", best.estimated ? 1 : 0);
        print(out, "updated_by", best.updated_by);
        print(out, "updated_at", format_double(best.updated_at));
        print(out, "config", to_string(best.config));
        print(out, "commits", changes.size());
        print(out, "evaluations_recorded", evaluations);
        return static_cast<int>(kOk);
    });
}

int cmd_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto job = JobDirectory::open(dir);
        if (signal_exists(job)) {
            fmt::print(err, "error: {} is still running ({} present); stop it first\n", dir.string(), files::kSignal);
            return static_cast<int>(kWrongState);
        }
        auto best = read_best(job);
        auto params = ObjectiveParams::read(read_manifest(job));
        params.eval_cost = 0;
        auto objective = make_objective(params);
        auto audit = audit_estimate(best, *objective);

        auto changes = read_changes(job);
        std::int64_t evaluations = 0;
        for (const auto& c : changes) evaluations += c.evaluations;

        std::map<std::string, std::int64_t> outcomes;
        for (const auto& name : job.store().list()) {
            if (!name.starts_with("run-") || !name.ends_with(".log")) continue;
            auto text = job.store().read(name);
            if (!text) continue;
            std::string_view rest = *text;
            while (!rest.empty()) {
                auto nl = rest.find('\n');
                if (nl == std::string_view::npos) break;
                auto line = rest.substr(0, nl);
                rest.remove_prefix(nl + 1);
                auto sp = line.rfind(' ');
                if (sp != std::string_view::npos) ++outcomes[std::string(line.substr(sp + 1))];
            }
        }

        print(out, "job_id", job.job_id());
        print(out, "version", best.version);
        print(out, "config", to_string(best.config));
        print(out, "recorded_performance", format_double(audit.recorded));
        print(out, "performance", format_double(audit.actual));
        print(out, "estimated", audit.estimated ? 1 : 0);
        print(out, "drift", format_double(audit.drift));
        print(out, "commits", changes.size());
        print(out, "evaluations_recorded", evaluations);
        for (auto kind : {MergeKind::Committed, MergeKind::RejectedNotBetter, MergeKind::RejectedConflict,
                          MergeKind::RejectedStale}) {
            auto key = std::string(to_string(kind));
            print(out, fmt::format("proposals_{}", key), outcomes[key]);
        }
        return static_cast<int>(kOk);
    });
}

} // namespace scavenger::master
