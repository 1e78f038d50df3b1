#include "htan/config.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <system_error>

namespace htan::cfg {

namespace {

[[noreturn]] void bad(std::string_view what, std::string_view s) {
  throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(s) + "'");
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(std::string_view raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) bad("unsigned integer", raw);
  return v;
}

std::size_t to_size(std::string_view s) { return static_cast<std::size_t>(to_u64(s)); }

double to_double(std::string_view raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) bad("number", raw);
  return v;
}

bool to_bool(std::string_view raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad("boolean", raw);
}

std::vector<double> to_doubles(std::string_view s) {
  std::vector<double> out;
  for (auto part : split(s, ',')) out.push_back(to_double(part));
  return out;
}

std::vector<std::vector<double>> to_matrix(std::string_view s) {
  std::vector<std::vector<double>> out;
  if (trim(s).empty()) return out;
  for (auto row : split(s, ';')) out.push_back(to_doubles(row));
  return out;
}

std::string format(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string format(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format(v[i]);
  return out;
}

std::string format(const std::vector<std::vector<double>>& m) {
  std::string out;
  for (std::size_t i = 0; i < m.size(); ++i) out += (i ? ";" : "") + format(m[i]);
  return out;
}

std::vector<Entry> parse_entries(std::string_view text) {
  std::vector<Entry> entries;
  std::string section;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": malformed section header '" + line + "'");
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    Entry e{section, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)), line_no};
    if (e.key.empty()) throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace htan::cfg
