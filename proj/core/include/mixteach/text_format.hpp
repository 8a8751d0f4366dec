#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mixteach::text {

// Fixed-point rendering with `decimals` digits, rounding half away from zero
// on the value's shortest round-trip decimal form, so 1.585 renders as "1.59"
// even though the nearest double is slightly below 1.585.
std::string FormatFixed(double value, int decimals);

// Shortest decimal form that parses back to exactly `value`.
std::string FormatExact(double value);

std::optional<double> ParseDouble(std::string_view token);
std::optional<long long> ParseInt(std::string_view token);
std::optional<unsigned long long> ParseUint64(std::string_view token);

// Splits on runs of spaces/tabs; no empty tokens.
std::vector<std::string_view> SplitWhitespace(std::string_view line);

std::string_view Trim(std::string_view s);

}  // namespace mixteach::text
