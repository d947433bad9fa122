#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace genvideo {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; duplicate keys and lines without '=' are validation errors.
std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view origin);

std::string trim(std::string_view s);
std::vector<std::string> split_words(std::string_view s);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

double parse_double(const std::string& s, const std::string& key);
long long parse_int(const std::string& s, const std::string& key);
bool parse_bool(const std::string& s, const std::string& key);
std::vector<double> parse_doubles(const std::string& s, const std::string& key, std::size_t count);
std::vector<long long> parse_ints(const std::string& s, const std::string& key, std::size_t count);

/// 64-bit FNV-1a, used for stable content hashes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace genvideo
