#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

/// Value conversions shared by the `key = value` configuration readers. All
/// throw std::invalid_argument naming the offending text.
namespace htan::cfg {

std::string trim(std::string_view s);

std::size_t to_size(std::string_view s);
std::uint64_t to_u64(std::string_view s);
double to_double(std::string_view s);
bool to_bool(std::string_view s);
/// Comma separated reals.
std::vector<double> to_doubles(std::string_view s);
/// Rows separated by ';', entries by ','.
std::vector<std::vector<double>> to_matrix(std::string_view s);

/// Shortest text that parses back to the same double.
std::string format(double v);
std::string format(const std::vector<double>& v);
std::string format(const std::vector<std::vector<double>>& m);

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Splits `[section]` / `key = value` text; `#` starts a comment. Throws
/// std::invalid_argument with the line number on malformed lines.
std::vector<Entry> parse_entries(std::string_view text);

}  // namespace htan::cfg
