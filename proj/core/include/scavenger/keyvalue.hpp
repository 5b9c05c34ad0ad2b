#pragma once

// Line-oriented `key=value` text shared by every file the tools read or write.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scavenger {

// Shortest text that parses back to exactly `value` is not required; we always
// emit 17 significant digits so every machine reads back the same bits.
std::string format_double(double value);
double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);

struct KeyValue {
    std::string key;
    std::string value;
    int line = 0; // 1-based
};

class KeyValues {
public:
    KeyValues() = default;

    // Blank lines and lines starting with '#' are skipped. `source` is used in
    // error messages ("manifest.dat line 3: ...").
    static KeyValues parse(std::string_view text, std::string_view source);

    const std::vector<KeyValue>& entries() const { return entries_; }
    const std::string& source() const { return source_; }

    // Last occurrence wins for single-valued keys.
    const KeyValue* find(std::string_view key) const;
    std::vector<std::string> all(std::string_view key) const;

    std::string require(std::string_view key) const;
    std::int64_t require_int(std::string_view key) const;
    double require_double(std::string_view key) const;

    std::optional<std::int64_t> get_int(std::string_view key) const;
    std::optional<double> get_double(std::string_view key) const;
    std::optional<std::string> get(std::string_view key) const;

    void add(std::string key, std::string value);
    std::string to_string() const;

private:
    [[noreturn]] void fail(const KeyValue& kv, std::string_view what) const;

    std::string source_;
    std::vector<KeyValue> entries_;
};

} // namespace scavenger
