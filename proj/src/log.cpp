#include "gtee/log.hpp"

#include <atomic>
#include <iostream>

namespace gtee {

namespace {
std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_quiet{false};
}  // namespace

void log_info(std::string_view msg) {
    if (!g_quiet.load()) std::cerr << "[gtee] " << msg << '\n';
}

void log_warn(std::string_view msg) {
    ++g_warnings;
    std::cerr << "[gtee] warning: " << msg << '\n';
}

std::size_t warning_count() { return g_warnings.load(); }

void set_quiet(bool quiet) { g_quiet.store(quiet); }

}  // namespace gtee
