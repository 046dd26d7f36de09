#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pepco::text {

// Fixed-point with '.' separator regardless of locale; -0.000000 prints as 0.000000.
std::string fixed(double value, int decimals = 6);

// Shortest representation that round-trips to the same double.
std::string exact(double value);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Lines without their terminator; accepts LF and CRLF.
std::vector<std::string_view> lines(std::string_view s);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);
bool parse_bool(std::string_view s);

}  // namespace pepco::text
