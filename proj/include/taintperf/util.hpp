#pragma once

#include <string>
#include <vector>

namespace taintperf {

/// Shortest text that parses back to the same double; integral values print without a decimal point.
std::string format_number(double v);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::vector<std::string> split(const std::string& text, char sep);
std::string trim(const std::string& s);

}  // namespace taintperf
