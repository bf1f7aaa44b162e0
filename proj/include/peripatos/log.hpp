#pragma once

#include <string_view>

namespace peripatos::log {

enum class Level { debug = 0, info = 1, warning = 2, error = 3, silent = 4 };

/// Messages below this level are discarded. Defaults to warning, or to the
/// value of PERIPATOS_LOG_LEVEL when set.
void set_level(Level level);
Level level();

void debug(std::string_view message);
void info(std::string_view message);
void warning(std::string_view message);
void error(std::string_view message);

}  // namespace peripatos::log
