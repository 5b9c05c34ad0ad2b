#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "scavenger/coordination.hpp"

namespace {
// Keep test output readable; tests that inspect logs install their own sink.
const bool quiet = [] {
    scavenger::logger()->set_level(spdlog::level::warn);
    return true;
}();
} // namespace
