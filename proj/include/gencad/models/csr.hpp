#pragma once

// Sequence autoencoder: causal transformer encoder pooled into a tanh latent,
// and a single-pass decoder from learned constant queries.

#include <cstdint>
#include <vector>

#include "gencad/cad_lang.hpp"
#include "gencad/models/config.hpp"
#include "gencad/nn/attention.hpp"

namespace gencad::models {

using nn::Mat;

struct CsrConfig {
  int d_z = 64;          // full scale: 256
  int d_model = 64;      // transformer width, tied to d_z by default
  int enc_layers = 2;    // full scale: 4
  int dec_layers = 2;    // full scale: 4
  int heads = 8;
  int ffn_dim = 512;
  double dropout = 0.1;
  int seq_len = kDefaultPaddedLength;
  int level_embed = 32;  // per-slot level embedding width
  double beta = 2.0;     // parameter-term weight of the reconstruction loss
  std::uint64_t seed = 0;

  static CsrConfig from(const Config& cfg, const std::string& prefix = "csr.");
  void write(Config& cfg, const std::string& prefix = "csr.") const;
};

struct CsrLossParts {
  double total = 0.0;
  double type = 0.0;
  double param = 0.0;
};

template <class T>
class CsrModel : public nn::Module<T> {
 public:
  CsrModel() = default;
  explicit CsrModel(const CsrConfig& config);

  const CsrConfig& config() const { return config_; }

  /// Latents for a batch of N-row encoded sequences (B x d_z), values in (-1, 1).
  Mat<T> encode(const std::vector<EncodedSequence>& batch);
  /// Backpropagates dL/dz through the encoder (after encode()).
  void encode_backward(const Mat<T>& dz);
  /// Encoder hidden states before pooling (B*N x d_model), for inspection.
  Mat<T> encoder_states(const std::vector<EncodedSequence>& batch);

  /// Decoder hidden states for latents (B x d_z) -> (B*N x d_model).
  Mat<T> decode_states(const Mat<T>& z);
  void decode_states_backward(const Mat<T>& dh, Mat<T>& dz);
  /// Full logits per position: 6 type logits then 16 x 256 level logits.
  Mat<T> logits(const Mat<T>& z);
  /// Greedy reconstruction with SOL prepended; one N-row sequence per latent.
  std::vector<EncodedSequence> greedy_decode(const Mat<T>& z);

  /// Mean over the batch of the per-sequence loss
  /// sum_i CE(type_i) + beta * sum_i sum_{active j} CE(level_ij); caches for loss_backward.
  CsrLossParts loss_forward(const std::vector<EncodedSequence>& batch);
  /// Accumulates scale * d(loss)/d(params).
  void loss_backward(double scale = 1.0);

  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

  /// Decoder targets: row i holds encoded row i + 1, the last row is EOS.
  static EncodedSequence shift_targets(const EncodedSequence& seq);

 private:
  Mat<T> embed(const std::vector<EncodedSequence>& batch);
  void embed_backward(const Mat<T>& dx);

  CsrConfig config_;
  nn::Embedding<T> type_emb_;
  nn::Embedding<T> level_emb_;
  nn::Linear<T> param_proj_;
  std::vector<nn::TransformerBlock<T>> encoder_;
  nn::LayerNorm<T> enc_norm_;
  nn::Linear<T> to_latent_;
  nn::Tanh<T> squash_;

  nn::Parameter<T> queries_;
  nn::Linear<T> from_latent_;
  std::vector<nn::TransformerBlock<T>> decoder_;
  nn::LayerNorm<T> dec_norm_;
  nn::Linear<T> type_head_;
  nn::Parameter<T> level_w_;  // d_model x (16 * 256)
  nn::Parameter<T> level_b_;  // 1 x (16 * 256)

  Mat<T> pe_;
  std::vector<int> lengths_;
  int batch_ = 0;

  // loss cache
  Mat<T> dec_h_;
  Mat<T> type_logits_;
  std::vector<int> type_targets_;
  struct SlotRows {
    std::vector<int> rows;
    std::vector<int> targets;
    Mat<T> logits;
  };
  std::vector<SlotRows> slot_rows_;
};

}  // namespace gencad::models
