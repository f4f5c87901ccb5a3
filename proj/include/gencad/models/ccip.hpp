#pragma once

// Contrastive CAD-image pretraining: a small residual conv net maps a
// preprocessed image to the CAD latent space; NT-Xent aligns the two views.

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "gencad/imaging.hpp"
#include "gencad/models/config.hpp"
#include "gencad/nn/layers.hpp"

namespace gencad::models {

using nn::FeatureMap;
using nn::Mat;

struct CcipConfig {
  int d_z = 64;
  std::array<int, 4> widths{8, 16, 32, 64};  // full scale: 64/128/256/512
  int blocks_per_stage = 2;
  double dropout = 0.1;
  int image_size = 256;  // encoder input; the head sees widths[3] x (image_size/32)^2
  double tau = 0.07;
  bool learn_tau = false;
  std::uint64_t seed = 0;

  static CcipConfig from(const Config& cfg, const std::string& prefix = "ccip.");
  void write(Config& cfg, const std::string& prefix = "ccip.") const;
};

/// conv3x3-BN-Dropout-ReLU-conv3x3-BN plus (projected) shortcut, then ReLU.
template <class T>
class BasicBlock : public nn::Module<T> {
 public:
  BasicBlock() = default;
  BasicBlock(int in_ch, int out_ch, int stride, double dropout, Rng& rng);

  FeatureMap<T> forward(const FeatureMap<T>& x);
  FeatureMap<T> backward(const FeatureMap<T>& dy);
  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

 private:
  nn::Conv2d<T> conv1_, conv2_, proj_;
  nn::BatchNorm2d<T> bn1_, bn2_, proj_bn_;
  nn::Dropout2d<T> drop_;
  nn::ReLU2d<T> relu1_, relu_out_;
  bool has_proj_ = false;
};

template <class T>
class ImageEncoder : public nn::Module<T> {
 public:
  ImageEncoder() = default;
  explicit ImageEncoder(const CcipConfig& config);

  /// x: n x 1 x S x S preprocessed images -> n x d_z latents (not normalized).
  Mat<T> forward(const FeatureMap<T>& x);
  void backward(const Mat<T>& dz);
  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

 private:
  CcipConfig config_;
  nn::Conv2d<T> stem_;
  nn::BatchNorm2d<T> stem_bn_;
  nn::ReLU2d<T> stem_relu_;
  nn::AvgPool2d<T> pool_;
  std::vector<BasicBlock<T>> blocks_;
  nn::Linear<T> head_;
  int fh_ = 0;
  int fw_ = 0;
  int fc_ = 0;
};

struct CcipLoss {
  double loss = 0.0;
  Mat<double> d_cad;       // dL/d(raw cad latents)
  Mat<double> d_image;     // dL/d(raw image latents)
  double d_inv_tau = 0.0;  // dL/d(1/tau)
};

/// NT-Xent over the 2B views (cad_1, img_1, cad_2, img_2, ...), cosine
/// similarity scaled by 1/tau, self-pairs excluded from the denominator,
/// averaged over all 2B anchors. Rows are L2-normalized internally.
CcipLoss ccip_loss(const Mat<double>& cad, const Mat<double>& image, double tau, bool want_grad = true);

Mat<double> l2_normalize_rows(const Mat<double>& x);
/// Backprop of u = x / |x| given dL/du.
Mat<double> l2_normalize_backward(const Mat<double>& x, const Mat<double>& du);

/// Stacks preprocessed images (each S x S) into an n x 1 x S x S feature map.
template <class T>
FeatureMap<T> image_batch(const std::vector<GrayImage>& images);

template <class T>
class CcipModel : public nn::Module<T> {
 public:
  CcipModel() = default;
  explicit CcipModel(const CcipConfig& config);

  const CcipConfig& config() const { return config_; }
  double tau() const;

  /// Raw image latents for preprocessed images.
  Mat<T> image_latents(const std::vector<GrayImage>& preprocessed);
  /// L2-normalized image latent for one raw image (resize + normalize applied here).
  Mat<T> embed_image(const GrayImage& raw);

  /// One contrastive step on a batch against frozen CAD latents; accumulates
  /// gradients into the image encoder only. Returns the loss.
  double loss_and_backward(const std::vector<GrayImage>& preprocessed, const Mat<T>& cad_latents,
                           double scale = 1.0);
  /// Loss without touching gradients (eval mode forward).
  double evaluate(const std::vector<GrayImage>& preprocessed, const Mat<T>& cad_latents);

  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

  ImageEncoder<T>& encoder() { return encoder_; }

 private:
  CcipConfig config_;
  ImageEncoder<T> encoder_;
  nn::Parameter<T> log_inv_tau_;
};

}  // namespace gencad::models
