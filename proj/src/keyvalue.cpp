#include "genvideo/keyvalue.hpp"

#include "genvideo/error.hpp"

#include <charconv>
#include <cstdint>
#include <set>
#include <sstream>

namespace genvideo {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view origin) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw validation_error(std::string(origin) + ":" + std::to_string(line_no) +
                             ": expected 'key = value'");
    }
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (kv.key.empty()) {
      throw validation_error(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    }
    if (!seen.insert(kv.key).second) {
      throw validation_error(std::string(origin) + ":" + std::to_string(line_no) +
                             ": duplicate key '" + kv.key + "'");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  const std::string t = trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw validation_error("'" + key + "': expected a number, got '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s, const std::string& key) {
  long long v = 0;
  const std::string t = trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw validation_error("'" + key + "': expected an integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "on" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "off" || t == "no") return false;
  throw validation_error("'" + key + "': expected true/false, got '" + s + "'");
}

std::vector<double> parse_doubles(const std::string& s, const std::string& key,
                                  std::size_t count) {
  const auto words = split_words(s);
  if (words.size() != count) {
    throw validation_error("'" + key + "': expected " + std::to_string(count) + " numbers");
  }
  std::vector<double> out;
  for (const auto& w : words) out.push_back(parse_double(w, key));
  return out;
}

std::vector<long long> parse_ints(const std::string& s, const std::string& key,
                                  std::size_t count) {
  const auto words = split_words(s);
  if (words.size() != count) {
    throw validation_error("'" + key + "': expected " + std::to_string(count) + " integers");
  }
  std::vector<long long> out;
  for (const auto& w : words) out.push_back(parse_int(w, key));
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace genvideo
