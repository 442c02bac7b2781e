#include "ata/log.hpp"

#include <atomic>
#include <iostream>

namespace ata::log {

namespace {
std::atomic<int> g_level{1};

void emit(const char* tag, std::string_view message) {
  std::cerr << "[ata " << tag << "] " << message << '\n';
}
}  // namespace

void set_verbosity(int level) { g_level = level; }
int verbosity() { return g_level; }

void warn(std::string_view message) {
  if (g_level >= 1) emit("warn", message);
}
void info(std::string_view message) {
  if (g_level >= 2) emit("info", message);
}
void debug(std::string_view message) {
  if (g_level >= 3) emit("debug", message);
}

}  // namespace ata::log
