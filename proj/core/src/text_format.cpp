#include "mixteach/text_format.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace mixteach::text {

std::string FormatExact(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("FormatExact: to_chars failed");
  return std::string(buf, end);
}

std::string FormatFixed(double value, int decimals) {
  if (!std::isfinite(value)) throw std::invalid_argument("FormatFixed: non-finite value");
  char buf[512];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed);
  if (ec != std::errc()) throw std::runtime_error("FormatFixed: to_chars failed");
  std::string_view s(buf, static_cast<std::size_t>(end - buf));

  const bool negative = !s.empty() && s.front() == '-';
  if (negative) s.remove_prefix(1);
  const auto dot = s.find('.');
  std::string int_part(s.substr(0, dot));
  std::string frac_part = dot == std::string_view::npos ? std::string() : std::string(s.substr(dot + 1));

  const auto keep = static_cast<std::size_t>(decimals);
  bool round_up = false;
  if (frac_part.size() > keep) {
    round_up = frac_part[keep] >= '5';
    frac_part.resize(keep);
  } else {
    frac_part.append(keep - frac_part.size(), '0');
  }

  if (round_up) {
    std::string digits = int_part + frac_part;
    int i = static_cast<int>(digits.size()) - 1;
    for (; i >= 0; --i) {
      if (digits[static_cast<std::size_t>(i)] == '9') {
        digits[static_cast<std::size_t>(i)] = '0';
      } else {
        ++digits[static_cast<std::size_t>(i)];
        break;
      }
    }
    if (i < 0) digits.insert(digits.begin(), '1');
    int_part = digits.substr(0, digits.size() - keep);
    frac_part = digits.substr(digits.size() - keep);
  }

  std::string out;
  if (negative) out += '-';
  out += int_part;
  if (keep > 0) {
    out += '.';
    out += frac_part;
  }
  return out;
}

std::optional<double> ParseDouble(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) return std::nullopt;
  return v;
}

std::optional<long long> ParseInt(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) return std::nullopt;
  return v;
}

std::optional<unsigned long long> ParseUint64(std::string_view token) {
  unsigned long long v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) return std::nullopt;
  return v;
}

std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace mixteach::text
