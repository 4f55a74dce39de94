#pragma once

#include <string>

namespace meshsdf {

/// Verbosity from the MESHSDF_LOG environment variable, read once.
/// 0: errors only. 1 (default): run-level progress. 2: per-iteration detail.
int log_level();

/// Writes msg plus newline to stderr when log_level() >= level.
void log_line(int level, const std::string& msg);

}  // namespace meshsdf
