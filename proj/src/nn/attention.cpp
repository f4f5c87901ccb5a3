#include "gencad/nn/attention.hpp"

#include <cmath>
#include <limits>

namespace gencad::nn {

template <class T>
MultiHeadAttention<T>::MultiHeadAttention(int dim, int heads, bool causal, Rng& rng)
    : wq(dim, dim, rng), wk(dim, dim, rng), wv(dim, dim, rng), wo(dim, dim, rng), dim_(dim), heads_(heads),
      causal_(causal) {
  if (heads <= 0 || dim % heads != 0) {
    throw ShapeError("MultiHeadAttention: dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
}

template <class T>
Mat<T> MultiHeadAttention<T>::forward(const Mat<T>& x, int seq_len) {
  expect_cols(x, dim_, "MultiHeadAttention");
  if (seq_len <= 0 || x.rows() % seq_len != 0) {
    throw ShapeError("MultiHeadAttention: " + std::to_string(x.rows()) + " rows is not a multiple of sequence length " +
                     std::to_string(seq_len));
  }
  seq_len_ = seq_len;
  batch_ = static_cast<int>(x.rows() / seq_len);
  q_ = wq.forward(x);
  k_ = wk.forward(x);
  v_ = wv.forward(x);
  const int dh = dim_ / heads_;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  probs_.resize(static_cast<std::size_t>(batch_ * heads_));
  Mat<T> out(x.rows(), dim_);
  for (int b = 0; b < batch_; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const auto q = q_.block(b * seq_len, h * dh, seq_len, dh);
      const auto k = k_.block(b * seq_len, h * dh, seq_len, dh);
      const auto v = v_.block(b * seq_len, h * dh, seq_len, dh);
      Mat<T> s = (q * k.transpose()) * scale;
      if (causal_) {
        for (int i = 0; i < seq_len; ++i) {
          for (int j = i + 1; j < seq_len; ++j) s(i, j) = -std::numeric_limits<T>::infinity();
        }
      }
      Mat<T>& p = probs_[static_cast<std::size_t>(b * heads_ + h)];
      p = softmax_rows<T>(s);
      out.block(b * seq_len, h * dh, seq_len, dh).noalias() = p * v;
    }
  }
  return wo.forward(out);
}

template <class T>
Mat<T> MultiHeadAttention<T>::backward(const Mat<T>& dy) {
  const Mat<T> d_out = wo.backward(dy);
  const int dh = dim_ / heads_;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Mat<T> dq = Mat<T>::Zero(q_.rows(), dim_);
  Mat<T> dk = Mat<T>::Zero(k_.rows(), dim_);
  Mat<T> dv = Mat<T>::Zero(v_.rows(), dim_);
  const int n = seq_len_;
  for (int b = 0; b < batch_; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const Mat<T>& p = probs_[static_cast<std::size_t>(b * heads_ + h)];
      const auto q = q_.block(b * n, h * dh, n, dh);
      const auto k = k_.block(b * n, h * dh, n, dh);
      const auto v = v_.block(b * n, h * dh, n, dh);
      const auto g = d_out.block(b * n, h * dh, n, dh);
      const Mat<T> dp = g * v.transpose();
      dv.block(b * n, h * dh, n, dh).noalias() = p.transpose() * g;
      Mat<T> ds = p.cwiseProduct(dp);
      const Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = ds.rowwise().sum();
      ds -= p.cwiseProduct(row_dot.replicate(1, n));
      ds *= scale;
      dq.block(b * n, h * dh, n, dh).noalias() = ds * k;
      dk.block(b * n, h * dh, n, dh).noalias() = ds.transpose() * q;
    }
  }
  Mat<T> dx = wq.backward(dq);
  dx += wk.backward(dk);
  dx += wv.backward(dv);
  return dx;
}

template <class T>
void MultiHeadAttention<T>::visit(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  wq.visit(this->join(prefix, "wq"), fn);
  wk.visit(this->join(prefix, "wk"), fn);
  wv.visit(this->join(prefix, "wv"), fn);
  wo.visit(this->join(prefix, "wo"), fn);
}

template <class T>
TransformerBlock<T>::TransformerBlock(int dim, int heads, int ffn_dim, double dropout, bool causal, Rng& rng)
    : ln1(dim), ln2(dim), attn(dim, heads, causal, rng), ff1(dim, ffn_dim, rng), ff2(ffn_dim, dim, rng),
      drop_attn(dropout, rng.next_u64()), drop_ff(dropout, rng.next_u64()), drop_out(dropout, rng.next_u64()) {}

template <class T>
Mat<T> TransformerBlock<T>::forward(const Mat<T>& x, int seq_len) {
  Mat<T> h = x + drop_attn.forward(attn.forward(ln1.forward(x), seq_len));
  Mat<T> f = ff2.forward(drop_ff.forward(act.forward(ff1.forward(ln2.forward(h)))));
  return h + drop_out.forward(f);
}

template <class T>
Mat<T> TransformerBlock<T>::backward(const Mat<T>& dy) {
  Mat<T> dh = dy;
  dh += ln2.backward(ff1.backward(act.backward(drop_ff.backward(ff2.backward(drop_out.backward(dy))))));
  Mat<T> dx = dh;
  dx += ln1.backward(attn.backward(drop_attn.backward(dh)));
  return dx;
}

template <class T>
void TransformerBlock<T>::visit(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  ln1.visit(this->join(prefix, "ln1"), fn);
  attn.visit(this->join(prefix, "attn"), fn);
  ln2.visit(this->join(prefix, "ln2"), fn);
  ff1.visit(this->join(prefix, "ff1"), fn);
  ff2.visit(this->join(prefix, "ff2"), fn);
}

template <class T>
void TransformerBlock<T>::set_training(bool t) {
  Module<T>::set_training(t);
  drop_attn.set_training(t);
  drop_ff.set_training(t);
  drop_out.set_training(t);
}

template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;

}  // namespace gencad::nn
