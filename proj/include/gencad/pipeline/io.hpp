#pragma once

// Text files, seeds, provenance headers and JSON + CSV reports.

#include <cstdint>
#include <string>
#include <vector>

#include "gencad/models/config.hpp"
#include "json.hpp"

namespace gencad::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

std::string read_text(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_text(const std::string& path, const std::string& text);
std::string csv_quote(const std::string& field);
std::string hex64(std::uint64_t v);
std::uint64_t text_hash(const std::string& text);

/// The config seed, replaced by GENCAD_SEED when that variable is set.
std::uint64_t resolve_seed(const Config& cfg);
/// Loads a config file (empty path: defaults) and applies the GENCAD_SEED override.
Config load_config(const std::string& path);

/// Stable per-purpose seed derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

struct Provenance {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string manifest_hash;
  std::vector<std::pair<std::string, std::string>> inputs;  // name, hash or path
};

nlohmann::ordered_json provenance_json(const Provenance& p);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// <stem>.json holds {"provenance", ...body}; <stem>.csv starts with a
/// "# provenance: {...}" line followed by the table.
void write_report(const std::string& stem, const Provenance& p, const nlohmann::ordered_json& body,
                  const Table& table);

std::string fmt(double v, int precision = 6);

}  // namespace gencad::pipeline
