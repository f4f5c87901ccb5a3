#pragma once

#include "gencad/nn/layers.hpp"

namespace gencad::nn {

/// Multi-head self-attention over a stack of equal-length sequences: rows
/// [b*len, (b+1)*len) of the input belong to sequence b.
template <class T>
class MultiHeadAttention : public Module<T> {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int heads, bool causal, Rng& rng);

  Mat<T> forward(const Mat<T>& x, int seq_len);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  /// Attention weights of sequence b, head h from the last forward pass (len x len).
  const Mat<T>& weights(int b, int h) const { return probs_[static_cast<std::size_t>(b * heads_ + h)]; }
  int heads() const { return heads_; }

  Linear<T> wq, wk, wv, wo;

 private:
  int dim_ = 0;
  int heads_ = 1;
  bool causal_ = false;
  int seq_len_ = 0;
  int batch_ = 0;
  Mat<T> q_, k_, v_;
  std::vector<Mat<T>> probs_;
};

/// Pre-norm transformer block: x + drop(attn(ln(x))), then x + drop(ffn(ln(x))).
template <class T>
class TransformerBlock : public Module<T> {
 public:
  TransformerBlock() = default;
  TransformerBlock(int dim, int heads, int ffn_dim, double dropout, bool causal, Rng& rng);

  Mat<T> forward(const Mat<T>& x, int seq_len);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string& prefix, const typename Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  Linear<T> ff1, ff2;
  ReLU<T> act;
  Dropout<T> drop_attn, drop_ff, drop_out;
};

}  // namespace gencad::nn
