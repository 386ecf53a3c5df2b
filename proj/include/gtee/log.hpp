#pragma once

#include <cstddef>
#include <string_view>

namespace gtee {

// Diagnostics go to stderr; data never does.
void log_info(std::string_view msg);
void log_warn(std::string_view msg);

// Number of warnings emitted so far in this process.
std::size_t warning_count();

// Silences log_info (warnings still print).
void set_quiet(bool quiet);

}  // namespace gtee
