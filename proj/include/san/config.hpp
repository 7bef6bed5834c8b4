#ifndef SAN_CONFIG_HPP
#define SAN_CONFIG_HPP

// Plain-text key=value configuration with a closed key set.

#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "san/error.hpp"

namespace san {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

/// Parses "key=value" lines; blank lines and '#' comments are skipped.
inline std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                           const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

/// Ordered set of known keys with defaults; rejects anything else.
class Config {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::string help;
  };

  Config& declare(const std::string& key, const std::string& default_value,
                  const std::string& help = "") {
    index_[key] = entries_.size();
    entries_.push_back({key, default_value, help});
    return *this;
  }

  bool has(const std::string& key) const { return index_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("unknown config key '" + key + "'");
    entries_[it->second].value = value;
  }

  /// Applies "key=value".
  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  void merge_text(const std::string& text, const std::string& origin) {
    for (const auto& [k, v] : parse_key_values(text, origin)) set(k, v);
  }

  const std::string& str(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ConfigError("unknown config key '" + key + "'");
    return entries_[it->second].value;
  }

  double real_value(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
  }

  std::size_t size_value(const std::string& key) const {
    const std::string& v = str(key);
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(str(key), ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad list item '" + item + "'");
      }
    }
    return out;
  }

  std::vector<std::size_t> size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split(str(key), ',')) {
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        throw ConfigError("config key '" + key + "': bad list item '" + item + "'");
      }
      out.push_back(v);
    }
    return out;
  }

  /// Every key with its current value, one "key = value" per line.
  std::string dump() const {
    std::ostringstream os;
    for (const auto& e : entries_) {
      if (!e.help.empty()) os << "# " << e.help << '\n';
      os << e.key << " = " << e.value << '\n';
    }
    return os.str();
  }

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace san

#endif  // SAN_CONFIG_HPP
