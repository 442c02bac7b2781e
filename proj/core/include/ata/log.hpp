#pragma once

#include <string_view>

namespace ata::log {

// 0 = silent, 1 = warnings, 2 = info, 3 = debug.
void set_verbosity(int level);
int verbosity();

void warn(std::string_view message);
void info(std::string_view message);
void debug(std::string_view message);

}  // namespace ata::log
