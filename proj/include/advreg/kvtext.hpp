// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace advreg {

/// "key = value" text with '#' comments and blank lines. Every lookup
/// error names the key and, where known, the line.
class KeyValueText {
 public:
  static KeyValueText parse(std::string_view text, std::string_view source = "<text>");

  bool has(std::string_view key) const;
  const std::string& raw(std::string_view key) const;
  std::size_t line_of(std::string_view key) const;

  std::string get_string(std::string_view key) const { return raw(key); }
  double get_double(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;

  /// Fails on any key not in `known` (prefix match when an entry ends in '[').
  void reject_unknown(const std::vector<std::string>& known) const;
  const std::vector<std::string>& keys() const { return order_; }

 private:
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::string source_;
  std::map<std::string, Entry, std::less<>> entries_;
  std::vector<std::string> order_;
};

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace advreg
