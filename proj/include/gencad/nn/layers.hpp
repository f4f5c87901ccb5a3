#pragma once

#include <cstdint>
#include <vector>

#include "gencad/nn/tensor.hpp"
#include "gencad/rng.hpp"

namespace gencad::nn {

/// y = x W + b, W stored in x out.
template <class T>
class Linear : public Module<T> {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng, bool bias = true);

  Mat<T> forward(const Mat<T>& x);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  int in_features() const { return static_cast<int>(weight.value.rows()); }
  int out_features() const { return static_cast<int>(weight.value.cols()); }

  Parameter<T> weight;
  Parameter<T> bias;
  bool has_bias = true;

 private:
  Mat<T> x_;
};

/// Row lookup; backward scatters into the table.
template <class T>
class Embedding : public Module<T> {
 public:
  Embedding() = default;
  Embedding(int count, int dim, Rng& rng);

  Mat<T> forward(const std::vector<int>& ids);
  void backward(const Mat<T>& dy);
  void visit(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  Parameter<T> table;

 private:
  std::vector<int> ids_;
};

template <class T>
class LayerNorm : public Module<T> {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int dim, double eps = 1e-5);

  Mat<T> forward(const Mat<T>& x);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  Parameter<T> gamma;
  Parameter<T> beta;

 private:
  double eps_ = 1e-5;
  Mat<T> xhat_;
  std::vector<T> inv_std_;
};

/// Inverted dropout with its own seeded stream; identity in eval mode.
template <class T>
class Dropout : public Module<T> {
 public:
  Dropout() = default;
  Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {}

  Mat<T> forward(const Mat<T>& x);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string&, const typename Module<T>::Visitor&) override {}
  double p() const { return p_; }

 private:
  double p_ = 0.0;
  Rng rng_;
  Mat<T> mask_;
  bool active_ = false;
};

template <class T>
class Tanh : public Module<T> {
 public:
  Mat<T> forward(const Mat<T>& x);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string&, const typename Module<T>::Visitor&) override {}

 private:
  Mat<T> y_;
};

template <class T>
class ReLU : public Module<T> {
 public:
  Mat<T> forward(const Mat<T>& x);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string&, const typename Module<T>::Visitor&) override {}

 private:
  Mat<T> x_;
};

/// Row-wise softmax.
template <class T>
Mat<T> softmax_rows(const Mat<T>& logits);

/// Sinusoidal position table, rows = positions: pe[2i] = sin(pos / 10000^(2i/d)), pe[2i+1] = cos(.).
template <class T>
Mat<T> sinusoidal_pe(int positions, int dim);
/// Single position encoding (same formula) for real-valued positions such as diffusion timesteps.
template <class T>
Vec<T> sinusoidal_embedding(double position, int dim);

template <class T>
class Conv2d : public Module<T> {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int padding, Rng& rng, bool bias = false);

  FeatureMap<T> forward(const FeatureMap<T>& x);
  FeatureMap<T> backward(const FeatureMap<T>& dy);
  void visit(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  Parameter<T> weight;  // out x (in * k * k)
  Parameter<T> bias;    // 1 x out
  bool has_bias = false;

 private:
  void im2col(const T* img, int h, int w, Mat<T>& cols) const;
  void col2im(const Mat<T>& cols, int h, int w, T* img) const;
  int out_size(int s) const { return (s + 2 * padding_ - kernel_) / stride_ + 1; }

  int in_ch_ = 0;
  int out_ch_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  int padding_ = 0;
  FeatureMap<T> x_;
};

/// Per-channel batch normalization; running statistics are non-trainable parameters.
template <class T>
class BatchNorm2d : public Module<T> {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  FeatureMap<T> forward(const FeatureMap<T>& x);
  FeatureMap<T> backward(const FeatureMap<T>& dy);
  void visit(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  Parameter<T> gamma;
  Parameter<T> beta;
  Parameter<T> running_mean;
  Parameter<T> running_var;

 private:
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  FeatureMap<T> xhat_;
  std::vector<T> inv_std_;
  bool batch_stats_ = true;
};

/// Non-overlapping k x k average pooling.
template <class T>
class AvgPool2d : public Module<T> {
 public:
  AvgPool2d() = default;
  explicit AvgPool2d(int kernel) : kernel_(kernel) {}

  FeatureMap<T> forward(const FeatureMap<T>& x);
  FeatureMap<T> backward(const FeatureMap<T>& dy);
  void visit(const std::string&, const typename Module<T>::Visitor&) override {}

 private:
  int kernel_ = 2;
  int in_h_ = 0;
  int in_w_ = 0;
};

/// Elementwise ReLU on feature maps and the residual sum helper.
template <class T>
class ReLU2d : public Module<T> {
 public:
  FeatureMap<T> forward(const FeatureMap<T>& x);
  FeatureMap<T> backward(const FeatureMap<T>& dy);
  void visit(const std::string&, const typename Module<T>::Visitor&) override {}

 private:
  Mat<T> x_;
};

template <class T>
class Dropout2d : public Module<T> {
 public:
  Dropout2d() = default;
  Dropout2d(double p, std::uint64_t seed) : inner_(p, seed) {}

  FeatureMap<T> forward(const FeatureMap<T>& x);
  FeatureMap<T> backward(const FeatureMap<T>& dy);
  void visit(const std::string&, const typename Module<T>::Visitor&) override {}
  void set_training(bool t) override {
    Module<T>::set_training(t);
    inner_.set_training(t);
  }

 private:
  Dropout<T> inner_;
};

template <class T>
FeatureMap<T> residual_add(const FeatureMap<T>& a, const FeatureMap<T>& b);

}  // namespace gencad::nn
