#pragma once

#include <string>

namespace rod::log {

// Reads ROD_LOG (trace|debug|info|warn|error|off); defaults to warn.
void init_from_env();

void debug(const std::string& msg);
void info(const std::string& msg);
void warn(const std::string& msg);
void error(const std::string& msg);

}  // namespace rod::log
