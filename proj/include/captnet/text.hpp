#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace captnet {

/// Shortest decimal that parses back to exactly `value`.
std::string format_double(double value);

std::string_view trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

} // namespace captnet
