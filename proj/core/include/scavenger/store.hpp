#pragma once

// Flat directory of named files. The protocol only needs a handful of
// primitives, and keeping them behind this interface lets the simulator run
// the exact same coordination code against an in-memory directory.

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scavenger {

class Store {
public:
    virtual ~Store() = default;

    // Human-readable location, used in error messages.
    virtual std::string describe() const = 0;

    // Throws IoError when the directory itself is unreachable; a missing file
    // inside a reachable directory is `false`, never an error.
    virtual bool exists(std::string_view name) const = 0;
    virtual std::optional<std::string> read(std::string_view name) const = 0;
    virtual std::vector<std::string> list() const = 0;

    // Creates an empty file if absent; leaves an existing one alone.
    virtual void touch(std::string_view name) = 0;
    // Readers see either the old content or the new, never a mix.
    virtual void write_atomic(std::string_view name, std::string_view content) = 0;
    // Atomically creates `name` holding `content`; false if it already exists.
    virtual bool create_exclusive(std::string_view name, std::string_view content) = 0;
    // False if `name` was already absent.
    virtual bool remove(std::string_view name) = 0;
    virtual void append(std::string_view name, std::string_view content) = 0;
    // Replaces `to`; false if `from` was absent.
    virtual bool rename(std::string_view from, std::string_view to) = 0;
    // Hard-link style: false if `to` already exists or `from` is absent.
    virtual bool link(std::string_view from, std::string_view to) = 0;
};

struct FsStoreOptions {
    // fsync file data and the directory entry on every atomic write.
    bool durable = true;
    // Called at named points inside multi-step writes. Tests use it to kill
    // the process at a chosen step.
    std::function<void(std::string_view step)> fault_hook;
};

class FsStore final : public Store {
public:
    explicit FsStore(std::filesystem::path dir, FsStoreOptions options = {});

    const std::filesystem::path& path() const { return dir_; }
    FsStoreOptions& options() { return options_; }

    std::string describe() const override;
    bool exists(std::string_view name) const override;
    std::optional<std::string> read(std::string_view name) const override;
    std::vector<std::string> list() const override;
    void touch(std::string_view name) override;
    void write_atomic(std::string_view name, std::string_view content) override;
    bool create_exclusive(std::string_view name, std::string_view content) override;
    bool remove(std::string_view name) override;
    void append(std::string_view name, std::string_view content) override;
    bool rename(std::string_view from, std::string_view to) override;
    bool link(std::string_view from, std::string_view to) override;

private:
    std::filesystem::path file(std::string_view name) const { return dir_ / std::string(name); }
    void check_dir() const;
    void fault(std::string_view step) const;
    std::string temp_name(std::string_view name);

    std::filesystem::path dir_;
    FsStoreOptions options_;
    unsigned long temp_counter_ = 0;
};

// Thread-safe in-memory directory. `set_reachable(false)` makes every call
// throw IoError, emulating a share that dropped off the network.
class MemoryStore final : public Store {
public:
    explicit MemoryStore(std::string label = "mem:");

    void set_reachable(bool reachable);

    std::string describe() const override;
    bool exists(std::string_view name) const override;
    std::optional<std::string> read(std::string_view name) const override;
    std::vector<std::string> list() const override;
    void touch(std::string_view name) override;
    void write_atomic(std::string_view name, std::string_view content) override;
    bool create_exclusive(std::string_view name, std::string_view content) override;
    bool remove(std::string_view name) override;
    void append(std::string_view name, std::string_view content) override;
    bool rename(std::string_view from, std::string_view to) override;
    bool link(std::string_view from, std::string_view to) override;

private:
    void check() const;

    std::string label_;
    mutable std::mutex mu_;
    bool reachable_ = true;
    std::map<std::string, std::string, std::less<>> files_;
};

} // namespace scavenger
