#pragma once

// Flat key-value configuration text:
//   # comment
//   csr.d_z = 64    # full scale: 256
// Keys are dotted names; values run to the first '#' and are trimmed.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace gencad {

class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::string& path);
  std::string to_text() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value, const std::string& comment = "");
  void set(const std::string& key, double value, const std::string& comment = "");
  void set(const std::string& key, std::int64_t value, const std::string& comment = "");
  void set(const std::string& key, int value, const std::string& comment = "") {
    set(key, static_cast<std::int64_t>(value), comment);
  }
  void set(const std::string& key, std::uint64_t value, const std::string& comment = "") {
    set(key, std::to_string(value), comment);
  }
  void set(const std::string& key, bool value, const std::string& comment = "") {
    set(key, std::string(value ? "true" : "false"), comment);
  }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  std::int64_t get(const std::string& key, std::int64_t fallback) const;
  int get(const std::string& key, int fallback) const {
    return static_cast<int>(get(key, static_cast<std::int64_t>(fallback)));
  }
  std::uint64_t get(const std::string& key, std::uint64_t fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::string get(const std::string& key, const char* fallback) const { return get(key, std::string(fallback)); }

  /// Copies every key of `other` over this config.
  void merge(const Config& other);
  /// Keys starting with prefix, prefix stripped.
  Config subset(const std::string& prefix) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> comments_;
};

}  // namespace gencad
