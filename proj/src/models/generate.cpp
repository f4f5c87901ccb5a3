#include "gencad/models/generate.hpp"

namespace gencad::models {

std::vector<Generation> decode_latents(CsrModel<float>& csr, const Mat<float>& latents) {
  csr.set_training(false);
  const auto rows = csr.greedy_decode(latents);
  std::vector<Generation> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& g = out[i];
    g.encoded = rows[i];
    g.latent = latents.row(static_cast<Eigen::Index>(i));
    g.program = decode_sequence(g.encoded);
    g.program.padded_len = static_cast<int>(g.encoded.size());
    g.status = check_program(g.program);
  }
  return out;
}

Generation generate(CcipModel<float>& ccip, CdpModel<float>& cdp, CsrModel<float>& csr, const GrayImage& image,
                    std::uint64_t seed) {
  if (ccip.config().d_z != cdp.config().cond_dim) {
    throw ShapeError("image latent width " + std::to_string(ccip.config().d_z) + " != diffusion condition width " +
                     std::to_string(cdp.config().cond_dim));
  }
  if (cdp.config().d_z != csr.config().d_z) {
    throw ShapeError("diffusion latent width " + std::to_string(cdp.config().d_z) + " != decoder latent width " +
                     std::to_string(csr.config().d_z));
  }
  ccip.set_training(false);
  const Mat<float> cond = ccip.embed_image(image);
  const Mat<float> z = cdp.sample(1, cond, seed);
  return std::move(decode_latents(csr, z).front());
}

}  // namespace gencad::models
