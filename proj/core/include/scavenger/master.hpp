#pragma once

// Operator commands for the machine that owns the job directory. Each command
// is stateless; everything lives in the directory.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "scavenger/objective.hpp"
#include "scavenger/optimizer.hpp"

namespace scavenger::master {

enum ExitCode : int {
    kOk = 0,
    kInvalidArguments = 2,
    kWrongState = 3, // already initialized, not initialized, or still running
    kIoFailure = 4,
};

struct InitOptions {
    ObjectiveParams objective;
    std::string init_config = "zero"; // zero | random
    std::uint64_t seed = 0;
    StopCondition stop;
    bool force = false;
    std::string job_id; // defaults to the directory name
    std::string worker_id; // defaults to host:pid
};

int cmd_init(const std::filesystem::path& dir, const InitOptions& options, std::ostream& out, std::ostream& err);
int cmd_start(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);
int cmd_stop(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);
int cmd_status(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

} // namespace scavenger::master
