#include "meshsdf/log.hpp"

#include <cstdio>
#include <cstdlib>

namespace meshsdf {

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("MESHSDF_LOG");
    if (env == nullptr || *env == '\0') return 1;
    return std::atoi(env);
  }();
  return level;
}

void log_line(int level, const std::string& msg) {
  if (log_level() >= level) {
    std::fprintf(stderr, "%s\n", msg.c_str());
    std::fflush(stderr);
  }
}

}  // namespace meshsdf
