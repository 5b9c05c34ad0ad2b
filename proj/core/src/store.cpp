#include "scavenger/store.hpp"

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fmt/format.h>

#include "scavenger/errors.hpp"

namespace scavenger {

namespace {

[[noreturn]] void throw_errno(std::string_view what, const std::filesystem::path& p, int err) {
    throw IoError(fmt::format("{} {}: {}", what, p.string(), std::strerror(err)));
}

class Fd {
public:
    explicit Fd(int fd) : fd_(fd) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    int get() const { return fd_; }
    int release() {
        int fd = fd_;
        fd_ = -1;
        return fd;
    }

private:
    int fd_;
};

void write_all(int fd, std::string_view data, const std::filesystem::path& p) {
    while (!data.empty()) {
        ssize_t n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("write", p, errno);
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

void close_checked(Fd& fd, const std::filesystem::path& p) {
    if (::close(fd.release()) != 0) throw_errno("close", p, errno);
}

} // namespace

FsStore::FsStore(std::filesystem::path dir, FsStoreOptions options)
    : dir_(std::move(dir)), options_(std::move(options)) {}

std::string FsStore::describe() const { return dir_.string(); }

void FsStore::check_dir() const {
    struct stat st {};
    if (::stat(dir_.c_str(), &st) != 0) throw_errno("cannot access job directory", dir_, errno);
    if (!S_ISDIR(st.st_mode)) throw IoError(fmt::format("not a directory: {}", dir_.string()));
}

void FsStore::fault(std::string_view step) const {
    if (options_.fault_hook) options_.fault_hook(step);
}

std::string FsStore::temp_name(std::string_view name) {
    return fmt::format(".{}.tmp.{}.{}", name, ::getpid(), temp_counter_++);
}

bool FsStore::exists(std::string_view name) const {
    struct stat st {};
    auto p = file(name);
    if (::stat(p.c_str(), &st) == 0) return true;
    int err = errno;
    if (err != ENOENT) throw_errno("stat", p, err);
    check_dir();
    return false;
}

std::optional<std::string> FsStore::read(std::string_view name) const {
    auto p = file(name);
    Fd fd(::open(p.c_str(), O_RDONLY | O_CLOEXEC));
    if (fd.get() < 0) {
        int err = errno;
        if (err != ENOENT) throw_errno("open", p, err);
        check_dir();
        return std::nullopt;
    }
    std::string out;
    char buf[4096];
    for (;;) {
        ssize_t n = ::read(fd.get(), buf, sizeof buf);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("read", p, errno);
        }
        if (n == 0) break;
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

std::vector<std::string> FsStore::list() const {
    check_dir();
    std::vector<std::string> out;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
        out.push_back(entry.path().filename().string());
    }
    if (ec) throw IoError(fmt::format("list {}: {}", dir_.string(), ec.message()));
    return out;
}

void FsStore::touch(std::string_view name) {
    auto p = file(name);
    Fd fd(::open(p.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644));
    if (fd.get() < 0) throw_errno("create", p, errno);
    close_checked(fd, p);
}

void FsStore::write_atomic(std::string_view name, std::string_view content) {
    auto tmp = file(temp_name(name));
    auto dst = file(name);
    {
        Fd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644));
        if (fd.get() < 0) throw_errno("create", tmp, errno);
        fault("tmp_created");
        try {
            auto half = content.size() / 2;
            write_all(fd.get(), content.substr(0, half), tmp);
            fault("tmp_partial");
            write_all(fd.get(), content.substr(half), tmp);
            fault("tmp_written");
            if (options_.durable && ::fsync(fd.get()) != 0) throw_errno("fsync", tmp, errno);
            close_checked(fd, tmp);
        } catch (...) {
            ::unlink(tmp.c_str());
            throw;
        }
    }
    fault("tmp_closed");
    if (::rename(tmp.c_str(), dst.c_str()) != 0) {
        int err = errno;
        ::unlink(tmp.c_str());
        throw_errno("rename", dst, err);
    }
    fault("renamed");
    if (options_.durable) {
        Fd dfd(::open(dir_.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC));
        if (dfd.get() >= 0) ::fsync(dfd.get());
    }
}

bool FsStore::create_exclusive(std::string_view name, std::string_view content) {
    // Write the body under a private name first and hard-link it into place,
    // so anyone who sees `name` also sees its complete content.
    auto tmp = file(temp_name(name));
    auto dst = file(name);
    {
        Fd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644));
        if (fd.get() < 0) throw_errno("create", tmp, errno);
        try {
            write_all(fd.get(), content, tmp);
            close_checked(fd, tmp);
        } catch (...) {
            ::unlink(tmp.c_str());
            throw;
        }
    }
    int rc = ::link(tmp.c_str(), dst.c_str());
    int err = errno;
    ::unlink(tmp.c_str());
    if (rc == 0) {
        fault("exclusive_created");
        return true;
    }
    if (err == EEXIST) return false;
    throw_errno("link", dst, err);
}

bool FsStore::remove(std::string_view name) {
    auto p = file(name);
    if (::unlink(p.c_str()) == 0) return true;
    int err = errno;
    if (err != ENOENT) throw_errno("unlink", p, err);
    check_dir();
    return false;
}

void FsStore::append(std::string_view name, std::string_view content) {
    auto p = file(name);
    Fd fd(::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644));
    if (fd.get() < 0) throw_errno("open", p, errno);
    write_all(fd.get(), content, p);
    close_checked(fd, p);
}

bool FsStore::rename(std::string_view from, std::string_view to) {
    auto src = file(from);
    auto dst = file(to);
    if (::rename(src.c_str(), dst.c_str()) == 0) return true;
    int err = errno;
    if (err != ENOENT) throw_errno("rename", src, err);
    check_dir();
    return false;
}

bool FsStore::link(std::string_view from, std::string_view to) {
    auto src = file(from);
    auto dst = file(to);
    if (::link(src.c_str(), dst.c_str()) == 0) return true;
    int err = errno;
    if (err == EEXIST || err == ENOENT) {
        check_dir();
        return false;
    }
    throw_errno("link", dst, err);
}

// ---------------------------------------------------------------------------

MemoryStore::MemoryStore(std::string label) : label_(std::move(label)) {}

void MemoryStore::set_reachable(bool reachable) {
    std::lock_guard lock(mu_);
    reachable_ = reachable;
}

void MemoryStore::check() const {
    if (!reachable_) throw IoError(fmt::format("cannot access job directory {}: unreachable", label_));
}

std::string MemoryStore::describe() const { return label_; }

bool MemoryStore::exists(std::string_view name) const {
    std::lock_guard lock(mu_);
    check();
    return files_.find(name) != files_.end();
}

std::optional<std::string> MemoryStore::read(std::string_view name) const {
    std::lock_guard lock(mu_);
    check();
    auto it = files_.find(name);
    if (it == files_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> MemoryStore::list() const {
    std::lock_guard lock(mu_);
    check();
    std::vector<std::string> out;
    for (const auto& [k, v] : files_) out.push_back(k);
    return out;
}

void MemoryStore::touch(std::string_view name) {
    std::lock_guard lock(mu_);
    check();
    files_.try_emplace(std::string(name));
}

void MemoryStore::write_atomic(std::string_view name, std::string_view content) {
    std::lock_guard lock(mu_);
    check();
    files_.insert_or_assign(std::string(name), std::string(content));
}

bool MemoryStore::create_exclusive(std::string_view name, std::string_view content) {
    std::lock_guard lock(mu_);
    check();
    return files_.try_emplace(std::string(name), std::string(content)).second;
}

bool MemoryStore::remove(std::string_view name) {
    std::lock_guard lock(mu_);
    check();
    auto it = files_.find(name);
    if (it == files_.end()) return false;
    files_.erase(it);
    return true;
}

void MemoryStore::append(std::string_view name, std::string_view content) {
    std::lock_guard lock(mu_);
    check();
    files_[std::string(name)] += content;
}

bool MemoryStore::rename(std::string_view from, std::string_view to) {
    std::lock_guard lock(mu_);
    check();
    auto it = files_.find(from);
    if (it == files_.end()) return false;
    std::string content = std::move(it->second);
    files_.erase(it);
    files_.insert_or_assign(std::string(to), std::move(content));
    return true;
}

bool MemoryStore::link(std::string_view from, std::string_view to) {
    std::lock_guard lock(mu_);
    check();
    auto it = files_.find(from);
    if (it == files_.end() || files_.find(to) != files_.end()) return false;
    std::string copy = it->second;
    files_.emplace(std::string(to), std::move(copy));
    return true;
}

} // namespace scavenger
