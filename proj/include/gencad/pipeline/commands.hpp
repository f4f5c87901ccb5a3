#pragma once

// Generation, evaluation and retrieval commands over a trained run directory.
// Each writes a JSON + CSV report carrying a provenance header.

#include <cstdint>
#include <string>
#include <vector>

#include "gencad/geometry.hpp"
#include "gencad/metrics.hpp"
#include "gencad/pipeline/dataset.hpp"
#include "gencad/retrieval.hpp"

namespace gencad::pipeline {

struct GenerateOptions {
  std::vector<std::string> images;  // PGM paths
  std::string run_dir;
  int n_per_image = 1;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string prior = "diffusion";  // or "deterministic"
  int mesh_resolution = 64;
  int render_size = 128;
};

struct GeneratedItem {
  std::string image;
  int sample = 0;
  std::uint64_t seed = 0;
  std::string program;  // relative to out_dir
  std::string mesh;     // empty unless valid
  std::string render;   // empty unless valid
  ProgramStatus status;
  bool json_roundtrip = false;
  int length = 0;
};

struct GenerateReport {
  std::vector<GeneratedItem> items;
  double invalid_ratio = 0.0;
};

/// Writes programs/<stem>_s<j>.json for every output, plus meshes/<stem>_s<j>.stl
/// and renders/<stem>_s<j>.pgm for valid ones, and generate_report.{json,csv}.
GenerateReport generate_cmd(const GenerateOptions& options);

struct ReconOptions {
  std::string run_dir;  // ignored when self_check is set
  std::string split = "test";
  int eta = 3;
  std::size_t points = kDefaultPointCount;
  std::uint64_t seed = 0;
  std::size_t limit = 0;  // 0: whole split
  bool self_check = false;  // score the ground truth against itself
  std::string out_stem;     // empty: no files
};

struct ReconReport {
  ReconAccuracy accuracy;
  double mean_cd = 0.0;    // over pairs where both solids are valid
  double median_cd = 0.0;
  std::size_t cd_pairs = 0;
  double invalid_ratio = 0.0;  // of the reconstructions
  double corpus_invalid_ratio = 0.0;
  std::size_t count = 0;
};

ReconReport evaluate_recon(const DatasetManifest& manifest, const ReconOptions& options);

struct GenEvalOptions {
  std::string run_dir;
  std::string split = "test";
  /// conditional | unconditional | deterministic | reference (S = G)
  std::string mode = "conditional";
  int repeats = 3;
  std::size_t points = kDefaultPointCount;
  int jsd_grid = 28;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  std::string out_stem;
};

struct GenEvalReport {
  MetricReport cov{"COV", {}, {}};
  MetricReport mmd{"MMD", {}, {}};
  MetricReport jsd{"JSD", {}, {}};
  MetricReport fid{"FID", {}, {}};
  MetricReport ir{"IR", {}, {}};
  std::size_t reference_size = 0;
};

GenEvalReport evaluate_gen(const DatasetManifest& manifest, const GenEvalOptions& options);

struct RetrieveOptions {
  std::string run_dir;
  std::string split = "test";
  std::vector<int> n_b = {10, 128, 1024, 2048};
  std::vector<int> repeats = {1000, 10, 3, 3};
  std::uint64_t seed = 0;
  bool random_baseline = true;
  std::vector<std::string> queries;  // optional PGM paths for top-k lookup
  std::size_t top_k = 5;
  std::string out_stem;
};

struct RetrievalRow {
  std::string method;
  ProtocolResult result;
};

struct QueryResult {
  std::string image;
  std::vector<RetrievalHit> hits;
};

struct RetrieveReport {
  std::vector<RetrievalRow> rows;
  std::vector<int> skipped_n_b;  // larger than the split
  std::vector<QueryResult> queries;
  std::string index_path;
};

/// Builds <run_dir>/index_<split>.gcix and scores the batched top-1 protocol.
RetrieveReport retrieve_cmd(const DatasetManifest& manifest, const RetrieveOptions& options);

}  // namespace gencad::pipeline
