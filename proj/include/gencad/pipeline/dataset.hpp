#pragma once

// Desk-scale corpus: procedural sketch-and-extrude programs, split manifest,
// and the render/sketch image sets built from scale variants.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gencad/cad_lang.hpp"
#include "gencad/imaging.hpp"
#include "gencad/rng.hpp"

namespace gencad::pipeline {

struct SynthOptions {
  std::size_t count = 100;
  std::uint64_t seed = 0;
  int difficulty = 2;  // 0: one extrude, 1: up to two, 2: up to four
  int padded_len = kDefaultPaddedLength;
};

/// One snapped program that passes validation and builds a non-empty solid.
CadSequence synth_program(Rng& rng, int difficulty, int padded_len = kDefaultPaddedLength);
/// Deterministic in the options; program i draws from its own stream.
std::vector<CadSequence> synth_programs(const SynthOptions& options);

/// Relative split sizes (full scale counts by default).
struct SplitRatios {
  double train = 152530;
  double val = 8515;
  double test = 7629;
};

struct ManifestEntry {
  std::string model_id;
  std::string sequence;  // canonical JSON of the source program
  std::vector<int> variants;  // surviving scale variants, filled by render_dataset
  std::vector<std::string> variant_sequences;
  std::vector<std::string> renders;
  std::vector<std::string> sketches;
};

inline const std::vector<std::string> kSplitNames = {"train", "val", "test"};

/// Paths are relative to `root`, the directory holding manifest.json.
struct DatasetManifest {
  std::string root;
  std::uint64_t seed = 0;
  int difficulty = 0;
  int padded_len = kDefaultPaddedLength;
  int image_size = 0;  // 0 until rendered
  std::map<std::string, std::vector<ManifestEntry>> splits;

  const std::vector<ManifestEntry>& split(const std::string& name) const;
  std::string path(const std::string& relative) const;
  std::size_t size() const;

  std::string to_json() const;
  /// Parses and checks split names and disjointness.
  static DatasetManifest from_json(const std::string& text, const std::string& root);
  /// from_json plus an existence check of every referenced file.
  static DatasetManifest load(const std::string& manifest_path);
  void save() const;
  std::string file() const { return path("manifest.json"); }
  /// FNV-1a of the serialized manifest.
  std::uint64_t hash() const;
};

/// Writes sequences/<id>.json, corpus.gcsq and manifest.json under out_dir.
DatasetManifest synth_dataset(const std::string& out_dir, const SynthOptions& options,
                              const SplitRatios& ratios = {});

/// Loads the source program of an entry (or one of its variants).
CadSequence load_program(const DatasetManifest& m, const std::string& relative);

struct RenderDatasetOptions {
  int image_size = kRenderSize;
  std::vector<ScaleFactor> factors = default_scale_factors();
  SketchParams sketch;
};

struct RenderSummary {
  std::size_t models = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::string drop_log;  // relative path of the CSV drop log
};

/// Per model: scale variants -> execute -> isometric render -> sketch. Writes
/// renders/<id>_<v>.pgm, sketches/<id>_<v>_sketch.pgm, sequences/<id>_<v>.json,
/// drop_log.csv and the updated manifest. Re-running reproduces identical files.
RenderSummary render_dataset(DatasetManifest& manifest, const RenderDatasetOptions& options = {});

}  // namespace gencad::pipeline
