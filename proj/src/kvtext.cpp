// SPDX-License-Identifier: Apache-2.0
#include "advreg/kvtext.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "advreg/errors.hpp"

namespace advreg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view token, bool& ok) {
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  ok = ec == std::errc() && ptr == end;
  return value;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

KeyValueText KeyValueText::parse(std::string_view text, std::string_view source) {
  KeyValueText out;
  out.source_ = source;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(out.source_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(out.source_ + ":" + std::to_string(line_no) + ": empty key");
    if (out.entries_.count(key))
      throw ParseError(out.source_ + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    out.entries_.emplace(key, Entry{std::string(trim(line.substr(eq + 1))), line_no});
    out.order_.push_back(key);
  }
  return out;
}

bool KeyValueText::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string& KeyValueText::raw(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw ParseError(source_ + ": missing key '" + std::string(key) + "'");
  return it->second.value;
}

std::size_t KeyValueText::line_of(std::string_view key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

double KeyValueText::get_double(std::string_view key) const {
  const auto& v = raw(key);
  bool ok = false;
  const double out = parse_double(v, ok);
  if (!ok)
    throw ParseError(source_ + ":" + std::to_string(line_of(key)) + ": field '" +
                     std::string(key) + "' is not a number: '" + v + "'");
  return out;
}

std::uint64_t KeyValueText::get_uint(std::string_view key) const {
  const auto& v = raw(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(source_ + ":" + std::to_string(line_of(key)) + ": field '" +
                     std::string(key) + "' is not a non-negative integer: '" + v + "'");
  return out;
}

std::vector<double> KeyValueText::get_doubles(std::string_view key) const {
  std::istringstream in(raw(key));
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    bool ok = false;
    out.push_back(parse_double(token, ok));
    if (!ok)
      throw ParseError(source_ + ":" + std::to_string(line_of(key)) + ": field '" +
                       std::string(key) + "' has a malformed number '" + token + "'");
  }
  return out;
}

void KeyValueText::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& key : order_) {
    bool found = false;
    for (const auto& k : known) {
      if (!k.empty() && k.back() == '[' ? key.rfind(k, 0) == 0 : key == k) {
        found = true;
        break;
      }
    }
    if (!found)
      throw ParseError(source_ + ":" + std::to_string(line_of(key)) + ": unknown field '" + key + "'");
  }
}

}  // namespace advreg
