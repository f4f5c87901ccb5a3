#include "gencad/models/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gencad/error.hpp"

namespace gencad {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config cfg;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = value;
    if (hash != std::string_view::npos) cfg.comments_[key] = trim(line.substr(hash + 1));
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) {
    os << k << " = " << v;
    const auto c = comments_.find(k);
    if (c != comments_.end() && !c->second.empty()) os << "  # " << c->second;
    os << "\n";
  }
  return os.str();
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config " + path);
  out << to_text();
}

void Config::set(const std::string& key, const std::string& value, const std::string& comment) {
  values_[key] = value;
  if (!comment.empty()) comments_[key] = comment;
}

void Config::set(const std::string& key, double value, const std::string& comment) {
  set(key, format_double(value), comment);
}

void Config::set(const std::string& key, std::int64_t value, const std::string& comment) {
  set(key, std::to_string(value), comment);
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

std::int64_t Config::get(const std::string& key, std::int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::int64_t v = 0;
  const auto& s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("config key '" + key + "': expected an integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t Config::get(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("config key '" + key + "': expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

bool Config::get(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ParseError("config key '" + key + "': expected true/false, got '" + it->second + "'");
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
  for (const auto& [k, c] : other.comments_) comments_[k] = c;
}

Config Config::subset(const std::string& prefix) const {
  Config out;
  for (const auto& [k, v] : values_) {
    if (k.rfind(prefix, 0) == 0) out.values_[k.substr(prefix.size())] = v;
  }
  return out;
}

}  // namespace gencad
