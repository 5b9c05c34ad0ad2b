#include "scavenger/coordination.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <unistd.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"

namespace scavenger {

namespace {

std::mutex g_logger_mu;
std::shared_ptr<spdlog::logger> g_logger;

void check_token(std::string_view what, std::string_view value) {
    if (value.empty()) throw ContractError(fmt::format("{} must not be empty", what));
    for (char c : value) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            throw ContractError(fmt::format("{} '{}' contains whitespace", what, value));
        }
    }
}

std::string unique_suffix() {
    static std::atomic<unsigned long> counter{0};
    return fmt::format("{}.{}", ::getpid(), counter++);
}

} // namespace

std::shared_ptr<spdlog::logger> logger() {
    std::lock_guard lock(g_logger_mu);
    if (!g_logger) {
        g_logger = std::make_shared<spdlog::logger>("scavenger", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    }
    return g_logger;
}

void set_logger(std::shared_ptr<spdlog::logger> l) {
    std::lock_guard lock(g_logger_mu);
    g_logger = std::move(l);
}

JobDirectory::JobDirectory(std::shared_ptr<Store> store, std::string job_id, std::shared_ptr<Clock> clock,
                           LockPolicy lock_policy)
    : store_(std::move(store)), job_id_(std::move(job_id)), clock_(std::move(clock)), lock_policy_(lock_policy) {
    if (!store_) throw ContractError("JobDirectory needs a store");
    if (!clock_) clock_ = std::make_shared<WallClock>();
}

JobDirectory JobDirectory::open(const std::filesystem::path& dir, std::shared_ptr<Clock> clock, LockPolicy lock_policy) {
    auto store = std::make_shared<FsStore>(dir);
    std::string job_id = std::filesystem::absolute(dir).lexically_normal().filename().string();
    if (job_id.empty()) job_id = std::filesystem::absolute(dir).lexically_normal().parent_path().filename().string();
    // An unreachable directory is not an error here; the first protocol
    // operation reports it with context.
    try {
        if (auto text = store->read(files::kManifest)) {
            auto kv = KeyValues::parse(*text, (dir / files::kManifest).string());
            if (auto id = kv.get("job_id")) job_id = *id;
        }
    } catch (const IoError&) {
    }
    return JobDirectory(std::move(store), std::move(job_id), std::move(clock), lock_policy);
}

JobDirectory JobDirectory::with_lock_policy(LockPolicy policy) const {
    return JobDirectory(store_, job_id_, clock_, policy);
}

// ---- best.dat ---------------------------------------------------------------

std::uint64_t checksum64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string serialize_best(const BestState& s) {
    std::string body;
    body += fmt::format("version={}\n", s.version);
    body += fmt::format("performance={}\n", format_double(s.performance));
    body += fmt::format("estimated={}\n", s.estimated ? 1 : 0);
    body += fmt::format("updated_by={}\n", s.updated_by);
    body += fmt::format("updated_at={}\n", format_double(s.updated_at));
    body += fmt::format("n={}\n", s.config.size());
    body += fmt::format("config={}\n", to_string(s.config));
    body += fmt::format("checksum={:016x}\n", checksum64(body));
    return body;
}

BestState parse_best(std::string_view text, std::string_view source) {
    if (text.empty() || text.back() != '\n') {
        throw FormatError(fmt::format("{}: truncated (no final newline)", source));
    }
    auto without_nl = text.substr(0, text.size() - 1);
    auto last_nl = without_nl.rfind('\n');
    std::size_t cs_start = last_nl == std::string_view::npos ? 0 : last_nl + 1;
    auto body = text.substr(0, cs_start);
    auto cs_line = without_nl.substr(cs_start);
    int cs_line_no = 1;
    for (char c : body) cs_line_no += c == '\n';

    constexpr std::string_view kPrefix = "checksum=";
    if (!cs_line.starts_with(kPrefix) || cs_line.size() != kPrefix.size() + 16) {
        throw FormatError(fmt::format("{} line {}: expected checksum=<16 hex digits>, got '{}'", source, cs_line_no, cs_line));
    }
    std::uint64_t stored = 0;
    auto hex = cs_line.substr(kPrefix.size());
    auto res = std::from_chars(hex.data(), hex.data() + hex.size(), stored, 16);
    if (res.ec != std::errc{} || res.ptr != hex.data() + hex.size()) {
        throw FormatError(fmt::format("{} line {}: bad checksum digits '{}'", source, cs_line_no, hex));
    }
    if (stored != checksum64(body)) {
        throw FormatError(fmt::format("{} line {}: checksum mismatch (stored {:016x}, computed {:016x})", source,
                                      cs_line_no, stored, checksum64(body)));
    }

    auto kv = KeyValues::parse(body, source);
    BestState s;
    s.version = kv.require_int("version");
    s.performance = kv.require_double("performance");
    auto est = kv.require_int("estimated");
    if (est != 0 && est != 1) throw FormatError(fmt::format("{} line {}: estimated must be 0 or 1", source, kv.find("estimated")->line));
    s.estimated = est == 1;
    s.updated_by = kv.require("updated_by");
    s.updated_at = kv.require_double("updated_at");
    auto n = kv.require_int("n");
    const auto* cfg = kv.find("config");
    if (cfg == nullptr) throw FormatError(fmt::format("{}: missing key 'config'", source));
    std::string_view rest = cfg->value;
    while (!rest.empty()) {
        auto sp = rest.find(' ');
        auto tok = rest.substr(0, sp);
        rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
        if (tok.empty()) continue;
        try {
            s.config.levels.push_back(static_cast<int>(parse_int(tok)));
        } catch (const FormatError&) {
            throw FormatError(fmt::format("{} line {}: bad config element '{}'", source, cfg->line, tok));
        }
    }
    if (n < 0 || static_cast<std::size_t>(n) != s.config.size()) {
        throw FormatError(fmt::format("{} line {}: config has {} elements but n={}", source, cfg->line, s.config.size(), n));
    }
    if (!std::isfinite(s.performance)) {
        throw FormatError(fmt::format("{} line {}: performance is not finite", source, kv.find("performance")->line));
    }
    return s;
}

// ---- signal -------------------------------------------------------------------

void signal_set(const JobDirectory& job) { job.store().touch(files::kSignal); }

void signal_clear(const JobDirectory& job) { job.store().remove(files::kSignal); }

bool signal_exists(const JobDirectory& job) { return job.store().exists(files::kSignal); }

// ---- lock ---------------------------------------------------------------------

std::string serialize_lock(const LockHandle& h) {
    return fmt::format("owner={}\nacquired_at={}\nstale_after={}\n", h.owner, format_double(h.acquired_at),
                       format_double(h.stale_after));
}

namespace {

// Moves a lock we judged stale out of the way. The rename-then-compare step
// makes sure we only delete the exact lock we inspected.
void break_stale_lock(const JobDirectory& job, const std::string& observed, std::string_view why) {
    auto& store = job.store();
    std::string aside = fmt::format("{}.broken.{}", files::kLock, unique_suffix());
    if (!store.rename(files::kLock, aside)) return;
    auto moved = store.read(aside);
    if (moved && *moved == observed) {
        store.remove(aside);
        logger()->warn("broke stale lock in {} ({}): {}", job.describe(), why, observed.substr(0, observed.find('\n')));
        return;
    }
    // The holder changed under us; put its lock back.
    if (!store.link(aside, files::kLock)) {
        logger()->error("lost a live lock while breaking a stale one in {}", job.describe());
    }
    store.remove(aside);
}

} // namespace

LockHandle acquire_lock(const JobDirectory& job, std::string_view owner, double stale_after) {
    check_token("lock owner", owner);
    const auto& policy = job.lock_policy();
    auto& store = job.store();
    auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(policy.deadline);
    double backoff = policy.backoff_min;

    for (;;) {
        LockHandle h;
        h.owner = std::string(owner);
        h.acquired_at = job.clock().now();
        h.stale_after = stale_after;
        h.content = serialize_lock(h);
        if (store.create_exclusive(files::kLock, h.content)) return h;

        if (auto existing = store.read(files::kLock)) {
            std::optional<double> age_limit;
            std::optional<double> acquired;
            try {
                auto kv = KeyValues::parse(*existing, files::kLock);
                acquired = kv.require_double("acquired_at");
                age_limit = kv.require_double("stale_after");
            } catch (const FormatError&) {
            }
            if (!acquired || !age_limit) {
                break_stale_lock(job, *existing, "unreadable lock file");
                continue;
            }
            double age = job.clock().now() - *acquired;
            if (age > *age_limit) {
                break_stale_lock(job, *existing, fmt::format("age {:.3f}s > stale_after {:.3f}s", age, *age_limit));
                continue;
            }
        } else {
            continue; // released between our create and read
        }

        if (std::chrono::steady_clock::now() >= deadline) {
            throw ContentionError(fmt::format("lock in {} still held after {:.3f}s", job.describe(), policy.deadline));
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff = std::min(backoff * 2, policy.backoff_max);
    }
}

void release_lock(const JobDirectory& job, LockHandle& handle) {
    if (handle.released) return;
    handle.released = true;
    auto current = job.store().read(files::kLock);
    if (!current) {
        logger()->warn("lock of {} in {} was already broken", handle.owner, job.describe());
        return;
    }
    if (*current != handle.content) {
        logger()->warn("lock in {} now belongs to someone else; not releasing", job.describe());
        return;
    }
    job.store().remove(files::kLock);
}

LockGuard::LockGuard(const JobDirectory& job, std::string_view owner)
    : job_(job), handle_(acquire_lock(job, owner, job.lock_policy().stale_after)) {}

LockGuard::~LockGuard() {
    try {
        release_lock(job_, handle_);
    } catch (const std::exception& e) {
        logger()->error("releasing lock in {}: {}", job_.describe(), e.what());
    }
}

// ---- best state ---------------------------------------------------------------

BestState read_best(const JobDirectory& job) {
    auto text = job.store().read(files::kBest);
    if (!text) {
        throw NotInitializedError(fmt::format("job {} not initialized: {} missing in {}", job.job_id(), files::kBest,
                                              job.describe()));
    }
    return parse_best(*text, fmt::format("{}/{}", job.describe(), files::kBest));
}

std::string format_change(const ChangeRecord& c) {
    return fmt::format("{} {} {} {} {} evals={}\n", c.version, c.index, c.new_value, format_double(c.delta), c.proposer,
                       c.evaluations);
}

std::optional<ChangeRecord> parse_change(std::string_view line) {
    std::vector<std::string_view> tok;
    while (!line.empty()) {
        auto sp = line.find(' ');
        auto t = line.substr(0, sp);
        if (!t.empty()) tok.push_back(t);
        line = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
    }
    if (tok.size() != 5 && tok.size() != 6) return std::nullopt;
    try {
        ChangeRecord c;
        c.version = parse_int(tok[0]);
        auto idx = parse_int(tok[1]);
        if (idx < 0) return std::nullopt;
        c.index = static_cast<std::size_t>(idx);
        c.new_value = static_cast<int>(parse_int(tok[2]));
        c.delta = parse_double(tok[3]);
        c.proposer = std::string(tok[4]);
        if (tok.size() == 6) {
            if (!tok[5].starts_with("evals=")) return std::nullopt;
            c.evaluations = parse_int(tok[5].substr(6));
        }
        return c;
    } catch (const FormatError&) {
        return std::nullopt;
    }
}

std::vector<ChangeRecord> read_changes(const JobDirectory& job) {
    std::vector<ChangeRecord> out;
    auto text = job.store().read(files::kChanges);
    if (!text) return out;
    std::string_view rest = *text;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        if (nl == std::string_view::npos) break; // unterminated tail: torn append
        if (auto c = parse_change(rest.substr(0, nl))) out.push_back(std::move(*c));
        rest.remove_prefix(nl + 1);
    }
    return out;
}

CommitResult commit_update(const JobDirectory& job, std::int64_t expected_version, const BestState& new_state,
                           const ChangeRecord* change) {
    if (new_state.version != expected_version + 1) {
        throw ContractError(fmt::format("new version {} must be expected version {} + 1", new_state.version,
                                        expected_version));
    }
    if (!std::isfinite(new_state.performance)) throw ContractError("performance must be finite");
    check_token("updated_by", new_state.updated_by);

    LockGuard guard(job, new_state.updated_by);
    BestState current = read_best(job);
    if (current.version != expected_version) {
        return {CommitResult::Kind::VersionConflict, std::move(current)};
    }
    job.store().write_atomic(files::kBest, serialize_best(new_state));
    if (change != nullptr) {
        try {
            job.store().append(files::kChanges, format_change(*change));
        } catch (const IoError& e) {
            logger()->warn("committed version {} but could not append to {}: {}", new_state.version, files::kChanges,
                           e.what());
        }
    }
    return {CommitResult::Kind::Committed, new_state};
}

void write_initial_best(const JobDirectory& job, const BestState& state, bool force) {
    if (state.version != 0) throw ContractError("initial record must have version 0");
    if (state.estimated) throw ContractError("initial record cannot be estimated");
    if (!std::isfinite(state.performance)) throw ContractError("performance must be finite");
    check_token("updated_by", state.updated_by);

    LockGuard guard(job, state.updated_by);
    if (job.store().exists(files::kBest)) {
        if (!force) {
            throw AlreadyInitializedError(fmt::format("job {} already initialized ({} exists in {})", job.job_id(),
                                                      files::kBest, job.describe()));
        }
        job.store().remove(files::kChanges);
    }
    job.store().write_atomic(files::kBest, serialize_best(state));
}

std::string default_worker_id() {
    char host[256] = {};
    if (::gethostname(host, sizeof host - 1) != 0 || host[0] == '\0') std::snprintf(host, sizeof host, "localhost");
    return fmt::format("{}:{}", host, ::getpid());
}

} // namespace scavenger
