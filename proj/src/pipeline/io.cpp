#include "gencad/pipeline/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gencad/error.hpp"
#include "gencad/nn/checkpoint.hpp"

namespace fs = std::filesystem;

namespace gencad::pipeline {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("write failed: " + path);
  }
  fs::rename(tmp, p);
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t text_hash(const std::string& text) { return nn::fnv1a(text.data(), text.size()); }

std::uint64_t resolve_seed(const Config& cfg) {
  if (const char* env = std::getenv("GENCAD_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError(std::string("GENCAD_SEED is not an integer: ") + env);
    return v;
  }
  return cfg.get("seed", std::uint64_t{0});
}

Config load_config(const std::string& path) {
  Config cfg = path.empty() ? Config{} : Config::load(path);
  cfg.set("seed", resolve_seed(cfg));
  return cfg;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t x = base ^ (salt * 0x9e3779b97f4a7c15ull);
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

nlohmann::ordered_json provenance_json(const Provenance& p) {
  nlohmann::ordered_json j;
  j["tool"] = "gencad";
  j["version"] = kToolVersion;
  j["command"] = p.command;
  j["seed"] = p.seed;
  if (!p.config_hash.empty()) j["config_hash"] = p.config_hash;
  if (!p.manifest_hash.empty()) j["manifest_hash"] = p.manifest_hash;
  if (!p.inputs.empty()) {
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& [k, v] : p.inputs) in[k] = v;
    j["inputs"] = std::move(in);
  }
  return j;
}

void write_report(const std::string& stem, const Provenance& p, const nlohmann::ordered_json& body,
                  const Table& table) {
  nlohmann::ordered_json root;
  root["provenance"] = provenance_json(p);
  for (const auto& [k, v] : body.items()) root[k] = v;
  write_text(stem + ".json", root.dump(2) + "\n");
  std::ostringstream csv;
  csv << "# provenance: " << provenance_json(p).dump() << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) csv << (i ? "," : "") << csv_quote(cells[i]);
    csv << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  write_text(stem + ".csv", csv.str());
}

std::string fmt(double v, int precision) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

}  // namespace gencad::pipeline
