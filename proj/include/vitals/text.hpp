#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vitals::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Whole-string parses; nullopt on any leftover characters.
template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

// Shortest representation that parses back to the same double.
std::string format_number(double v);

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// `key = value` lines. Blank lines and `#` comments are skipped. Throws
// ConfigError naming `source` and the line on malformed input.
std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source);

}  // namespace vitals::text
