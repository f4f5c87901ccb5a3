#pragma once

// Stage-wise training drivers. A run directory holds csr.gckp, ccip.gckp,
// cdp.gckp, prior.gckp and logs/<stage>.jsonl. Later stages load earlier ones
// frozen and verify their parameter hashes before and after training.

#include <cstdint>
#include <string>
#include <vector>

#include "gencad/models/ccip.hpp"
#include "gencad/models/cdp.hpp"
#include "gencad/models/config.hpp"
#include "gencad/models/csr.hpp"
#include "gencad/nn/checkpoint.hpp"
#include "gencad/pipeline/dataset.hpp"

namespace gencad::pipeline {

using nn::Mat;

struct RunLayout {
  std::string dir;
  std::string csr() const { return dir + "/csr.gckp"; }
  std::string ccip() const { return dir + "/ccip.gckp"; }
  std::string cdp() const { return dir + "/cdp.gckp"; }
  std::string prior() const { return dir + "/prior.gckp"; }
  std::string log(const std::string& stage) const { return dir + "/logs/" + stage + ".jsonl"; }
};

/// Every training key with its desk default and full-scale value as a comment.
Config default_config();
/// default_config() overlaid with the user config.
Config with_defaults(const Config& user);

struct TrainResult {
  std::string stage;
  std::int64_t start_step = 0;
  std::int64_t end_step = 0;
  std::vector<double> losses;  // one per logged step (epoch for CCIP)
  std::string checkpoint;
};

TrainResult train_csr(const Config& cfg, const DatasetManifest& manifest, const std::string& run_dir);
/// Requires csr.gckp; throws DependencyError otherwise.
TrainResult train_ccip(const Config& cfg, const DatasetManifest& manifest, const std::string& run_dir);
/// Requires csr.gckp and ccip.gckp; also trains the deterministic prior when
/// train.prior.steps > 0.
TrainResult train_cdp(const Config& cfg, const DatasetManifest& manifest, const std::string& run_dir);

struct LoadedCsr {
  models::CsrModel<float> model;
  std::uint64_t hash = 0;
  Config config;
};
struct LoadedCcip {
  models::CcipModel<float> model;
  std::uint64_t hash = 0;
  Config config;
};
struct LoadedCdp {
  models::CdpModel<float> model;
  std::uint64_t hash = 0;
  Config config;
};
struct LoadedPrior {
  models::DeterministicPrior<float> model;
  std::uint64_t hash = 0;
  Config config;
};

LoadedCsr load_csr(const std::string& path);
LoadedCcip load_ccip(const std::string& path);
LoadedCdp load_cdp(const std::string& path);
LoadedPrior load_prior(const std::string& path);

/// Eval-mode CSR latents (rows follow programs).
Mat<float> encode_programs(models::CsrModel<float>& csr, const std::vector<CadSequence>& programs,
                           int batch = 64);
/// Eval-mode, L2-normalized CCIP latents of raw images.
Mat<float> embed_images(models::CcipModel<float>& ccip, const std::vector<GrayImage>& raw, int batch = 32);

/// One (program, image) pair per surviving variant of a split.
struct PairSet {
  std::vector<std::string> ids;  // <model_id>_<variant>
  std::vector<CadSequence> programs;
  std::vector<std::string> images;  // absolute paths
};
/// modality: "render" or "sketch".
PairSet collect_pairs(const DatasetManifest& m, const std::string& split, const std::string& modality);

}  // namespace gencad::pipeline
