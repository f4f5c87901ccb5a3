#pragma once

// Image -> program: preprocess, image latent, conditional diffusion sample,
// greedy sequence decode.

#include <cstdint>

#include "gencad/geometry.hpp"
#include "gencad/models/ccip.hpp"
#include "gencad/models/cdp.hpp"
#include "gencad/models/csr.hpp"

namespace gencad::models {

struct Generation {
  CadSequence program;
  EncodedSequence encoded;
  Mat<float> latent;  // sampled CAD latent (1 x d_z)
  ProgramStatus status;
};

/// Deterministic in (image, seed). Models are switched to eval mode.
Generation generate(CcipModel<float>& ccip, CdpModel<float>& cdp, CsrModel<float>& csr, const GrayImage& image,
                    std::uint64_t seed);

/// Decodes latents (n x d_z) into checked programs.
std::vector<Generation> decode_latents(CsrModel<float>& csr, const Mat<float>& latents);

}  // namespace gencad::models
