#pragma once

// Text helpers shared by the CSV readers and writers.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace affect {

/// Feature files store reals with 9 significant digits.
std::string format_feature(double value);
/// Snaps a value to what format_feature would write and read back.
double round_feature(double value);
/// Shortest representation that parses back to the same double.
std::string format_real(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

/// Splits on ',' with no quoting; views point into `line`.
void split_csv(std::string_view line, std::vector<std::string_view>& fields);
void strip_cr(std::string& line);

}  // namespace affect
