#include "scavenger/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

#include <fmt/format.h>

#include "scavenger/errors.hpp"

namespace scavenger {

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double out = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw FormatError(fmt::format("not a number: '{}'", text));
    }
    return out;
}

std::int64_t parse_int(std::string_view text) {
    std::int64_t out = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw FormatError(fmt::format("not an integer: '{}'", text));
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace

KeyValues KeyValues::parse(std::string_view text, std::string_view source) {
    KeyValues kv;
    kv.source_ = std::string(source);
    int line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;

        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw FormatError(fmt::format("{} line {}: expected key=value, got '{}'", source, line_no, line));
        }
        kv.entries_.push_back({std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no});
    }
    return kv;
}

const KeyValue* KeyValues::find(std::string_view key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->key == key) return &*it;
    }
    return nullptr;
}

std::vector<std::string> KeyValues::all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
        if (e.key == key) out.push_back(e.value);
    }
    return out;
}

void KeyValues::fail(const KeyValue& kv, std::string_view what) const {
    throw FormatError(fmt::format("{} line {}: {} ({}={})", source_, kv.line, what, kv.key, kv.value));
}

std::string KeyValues::require(std::string_view key) const {
    const auto* e = find(key);
    if (e == nullptr) throw FormatError(fmt::format("{}: missing key '{}'", source_, key));
    return e->value;
}

std::int64_t KeyValues::require_int(std::string_view key) const {
    require(key);
    return *get_int(key);
}

double KeyValues::require_double(std::string_view key) const {
    require(key);
    return *get_double(key);
}

std::optional<std::int64_t> KeyValues::get_int(std::string_view key) const {
    const auto* e = find(key);
    if (e == nullptr) return std::nullopt;
    try {
        return parse_int(e->value);
    } catch (const FormatError&) {
        fail(*e, "not an integer");
    }
}

std::optional<double> KeyValues::get_double(std::string_view key) const {
    const auto* e = find(key);
    if (e == nullptr) return std::nullopt;
    try {
        return parse_double(e->value);
    } catch (const FormatError&) {
        fail(*e, "not a number");
    }
}

std::optional<std::string> KeyValues::get(std::string_view key) const {
    const auto* e = find(key);
    if (e == nullptr) return std::nullopt;
    return e->value;
}

void KeyValues::add(std::string key, std::string value) {
    int line = entries_.empty() ? 1 : entries_.back().line + 1;
    entries_.push_back({std::move(key), std::move(value), line});
}

std::string KeyValues::to_string() const {
    std::string out;
    for (const auto& e : entries_) {
        out += e.key;
        out += '=';
        out += e.value;
        out += '\n';
    }
    return out;
}

} // namespace scavenger
