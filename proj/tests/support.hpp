#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "scavenger/clock.hpp"
#include "scavenger/coordination.hpp"
#include "scavenger/store.hpp"

namespace testing {

class TempDir {
public:
    TempDir() {
        std::string pattern = (std::filesystem::temp_directory_path() / "scavenger-test-XXXXXX").string();
        if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct MemJob {
    std::shared_ptr<scavenger::MemoryStore> store = std::make_shared<scavenger::MemoryStore>("mem:test");
    std::shared_ptr<scavenger::VirtualClock> clock = std::make_shared<scavenger::VirtualClock>(1000.0);
    scavenger::JobDirectory job{store, "test", clock};
};

inline scavenger::JobDirectory fs_job(const std::filesystem::path& dir, scavenger::LockPolicy policy = {}) {
    return scavenger::JobDirectory(std::make_shared<scavenger::FsStore>(dir, scavenger::FsStoreOptions{false, {}}),
                                   dir.filename().string(), std::make_shared<scavenger::WallClock>(), policy);
}

// Routes the library logger into a string for the lifetime of the object.
class LogCapture {
public:
    LogCapture() {
        previous_ = scavenger::logger();
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(out_);
        auto lg = std::make_shared<spdlog::logger>("scavenger-test", sink);
        lg->set_level(spdlog::level::trace);
        lg->set_pattern("%l %v");
        scavenger::set_logger(lg);
    }
    ~LogCapture() { scavenger::set_logger(previous_); }
    std::string text() const { return out_.str(); }

private:
    std::ostringstream out_;
    std::shared_ptr<spdlog::logger> previous_;
};

} // namespace testing
