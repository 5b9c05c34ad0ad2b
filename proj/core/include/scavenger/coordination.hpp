#pragma once

// The shared-directory protocol. Everything workers and the master know about
// each other passes through the files named below.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/logger.h>

#include "scavenger/clock.hpp"
#include "scavenger/objective.hpp"
#include "scavenger/store.hpp"

namespace scavenger {

namespace files {
inline constexpr std::string_view kSignal = "go.dat";
inline constexpr std::string_view kBest = "best.dat";
inline constexpr std::string_view kLock = "lock";
inline constexpr std::string_view kManifest = "manifest.dat";
inline constexpr std::string_view kChanges = "changes.log";
} // namespace files

// Library-wide logger ("scavenger"); tests swap in a capturing sink.
std::shared_ptr<spdlog::logger> logger();
void set_logger(std::shared_ptr<spdlog::logger> logger);

struct LockPolicy {
    double stale_after = 30.0;  // seconds
    double deadline = 10.0;     // give up acquiring after this many wall seconds
    double backoff_min = 0.001; // seconds
    double backoff_max = 0.05;  // seconds
};

// Immutable handle on one job's directory. Cheap to copy and share across
// threads; all mutable state lives in the store.
class JobDirectory {
public:
    JobDirectory(std::shared_ptr<Store> store, std::string job_id, std::shared_ptr<Clock> clock,
                 LockPolicy lock_policy = {});

    // Opens a directory on disk. job_id comes from manifest.dat when present,
    // otherwise the directory name.
    static JobDirectory open(const std::filesystem::path& dir, std::shared_ptr<Clock> clock = nullptr,
                             LockPolicy lock_policy = {});

    Store& store() const { return *store_; }
    Clock& clock() const { return *clock_; }
    const std::shared_ptr<Store>& store_ptr() const { return store_; }
    const std::shared_ptr<Clock>& clock_ptr() const { return clock_; }
    const std::string& job_id() const { return job_id_; }
    const LockPolicy& lock_policy() const { return lock_policy_; }
    std::string describe() const { return store_->describe(); }

    JobDirectory with_lock_policy(LockPolicy policy) const;

private:
    std::shared_ptr<Store> store_;
    std::string job_id_;
    std::shared_ptr<Clock> clock_;
    LockPolicy lock_policy_;
};

struct BestState {
    std::int64_t version = 0;
    ConfigVector config;
    double performance = 0.0;
    bool estimated = false;
    std::string updated_by;
    double updated_at = 0.0;

    friend bool operator==(const BestState&, const BestState&) = default;
};

// best.dat text, including the trailing checksum line.
std::string serialize_best(const BestState& state);
// Throws FormatError (naming the line) on malformed text or checksum mismatch.
BestState parse_best(std::string_view text, std::string_view source = files::kBest);

// 64-bit FNV-1a.
std::uint64_t checksum64(std::string_view bytes);

// ---- signal file ----------------------------------------------------------

void signal_set(const JobDirectory& job);
void signal_clear(const JobDirectory& job);
// IoError when the directory is unreachable; that is not the same as `false`.
bool signal_exists(const JobDirectory& job);

// ---- lock -----------------------------------------------------------------

struct LockHandle {
    std::string owner;
    double acquired_at = 0.0;
    double stale_after = 0.0;
    std::string content; // exact lock file body, used to recognise our own lock
    bool released = false;
};

std::string serialize_lock(const LockHandle& handle);

// Create-exclusive on `lock`. A lock older than its own stale_after is broken
// (and the break logged). Retries with bounded backoff until the job's
// deadline, then throws ContentionError.
LockHandle acquire_lock(const JobDirectory& job, std::string_view owner, double stale_after);
// Removes the lock file if it is still ours; otherwise a logged no-op.
void release_lock(const JobDirectory& job, LockHandle& handle);

class LockGuard {
public:
    LockGuard(const JobDirectory& job, std::string_view owner);
    LockGuard(const LockGuard&) = delete;
    LockGuard& operator=(const LockGuard&) = delete;
    ~LockGuard();

    const LockHandle& handle() const { return handle_; }

private:
    const JobDirectory& job_;
    LockHandle handle_;
};

// ---- best state -----------------------------------------------------------

// NotInitializedError when best.dat is missing.
BestState read_best(const JobDirectory& job);

// One line of changes.log.
struct ChangeRecord {
    std::int64_t version = 0;
    std::size_t index = 0;
    int new_value = 0;
    double delta = 0.0;
    std::string proposer;
    std::int64_t evaluations = 0; // evaluations this proposer ran since its last commit

    friend bool operator==(const ChangeRecord&, const ChangeRecord&) = default;
};

std::string format_change(const ChangeRecord& change);
std::optional<ChangeRecord> parse_change(std::string_view line);
// Advisory: malformed lines (e.g. a torn append) are skipped.
std::vector<ChangeRecord> read_changes(const JobDirectory& job);

struct CommitResult {
    enum class Kind { Committed, VersionConflict };
    Kind kind = Kind::Committed;
    // The stored record after the call: new_state on success, the record that
    // beat us on conflict.
    BestState current;

    bool committed() const { return kind == Kind::Committed; }
};

// Compare-and-swap on best.dat under the job lock. `change`, when given, is
// appended to changes.log after a successful replace.
CommitResult commit_update(const JobDirectory& job, std::int64_t expected_version, const BestState& new_state,
                           const ChangeRecord* change = nullptr);

// Writes the version-0 record. Throws AlreadyInitializedError if best.dat
// exists and `force` is false; with `force` the old record and changes.log go.
void write_initial_best(const JobDirectory& job, const BestState& state, bool force);

// "host:pid"
std::string default_worker_id();

} // namespace scavenger
