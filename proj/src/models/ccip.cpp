#include "gencad/models/ccip.hpp"

#include <cmath>

namespace gencad::models {

CcipConfig CcipConfig::from(const Config& cfg, const std::string& p) {
  CcipConfig c;
  c.d_z = cfg.get(p + "d_z", c.d_z);
  for (int i = 0; i < 4; ++i) {
    c.widths[static_cast<std::size_t>(i)] = cfg.get(p + "width" + std::to_string(i), c.widths[static_cast<std::size_t>(i)]);
  }
  c.blocks_per_stage = cfg.get(p + "blocks_per_stage", c.blocks_per_stage);
  c.dropout = cfg.get(p + "dropout", c.dropout);
  c.image_size = cfg.get(p + "image_size", c.image_size);
  c.tau = cfg.get(p + "tau", c.tau);
  c.learn_tau = cfg.get(p + "learn_tau", c.learn_tau);
  c.seed = cfg.get(p + "seed", c.seed);
  return c;
}

void CcipConfig::write(Config& cfg, const std::string& p) const {
  static const char* full[] = {"full scale: 64", "full scale: 128", "full scale: 256", "full scale: 512"};
  cfg.set(p + "d_z", d_z, "full scale: 256");
  for (int i = 0; i < 4; ++i) cfg.set(p + "width" + std::to_string(i), widths[static_cast<std::size_t>(i)], full[i]);
  cfg.set(p + "blocks_per_stage", blocks_per_stage, "full scale: 2");
  cfg.set(p + "dropout", dropout);
  cfg.set(p + "image_size", image_size, "full scale: 256");
  cfg.set(p + "tau", tau);
  cfg.set(p + "learn_tau", learn_tau);
  cfg.set(p + "seed", seed);
}

// ---------------------------------------------------------------------------

template <class T>
BasicBlock<T>::BasicBlock(int in_ch, int out_ch, int stride, double dropout, Rng& rng)
    : conv1_(in_ch, out_ch, 3, stride, 1, rng),
      conv2_(out_ch, out_ch, 3, 1, 1, rng),
      bn1_(out_ch),
      bn2_(out_ch),
      drop_(dropout, rng.next_u64()),
      has_proj_(stride != 1 || in_ch != out_ch) {
  if (has_proj_) {
    proj_ = nn::Conv2d<T>(in_ch, out_ch, 1, stride, 0, rng);
    proj_bn_ = nn::BatchNorm2d<T>(out_ch);
  }
}

template <class T>
FeatureMap<T> BasicBlock<T>::forward(const FeatureMap<T>& x) {
  FeatureMap<T> h = relu1_.forward(drop_.forward(bn1_.forward(conv1_.forward(x))));
  h = bn2_.forward(conv2_.forward(h));
  const FeatureMap<T> s = has_proj_ ? proj_bn_.forward(proj_.forward(x)) : x;
  return relu_out_.forward(nn::residual_add(h, s));
}

template <class T>
FeatureMap<T> BasicBlock<T>::backward(const FeatureMap<T>& dy) {
  const FeatureMap<T> dsum = relu_out_.backward(dy);
  FeatureMap<T> dx = conv1_.backward(bn1_.backward(drop_.backward(relu1_.backward(conv2_.backward(bn2_.backward(dsum))))));
  if (has_proj_) {
    dx.data += proj_.backward(proj_bn_.backward(dsum)).data;
  } else {
    dx.data += dsum.data;
  }
  return dx;
}

template <class T>
void BasicBlock<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  conv1_.visit(this->join(prefix, "conv1"), fn);
  bn1_.visit(this->join(prefix, "bn1"), fn);
  conv2_.visit(this->join(prefix, "conv2"), fn);
  bn2_.visit(this->join(prefix, "bn2"), fn);
  if (has_proj_) {
    proj_.visit(this->join(prefix, "proj"), fn);
    proj_bn_.visit(this->join(prefix, "proj_bn"), fn);
  }
}

template <class T>
void BasicBlock<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  for (auto* m : {&bn1_, &bn2_, &proj_bn_}) m->set_training(t);
  drop_.set_training(t);
}

// ---------------------------------------------------------------------------

template <class T>
ImageEncoder<T>::ImageEncoder(const CcipConfig& config) : config_(config), pool_(2) {
  if (config.image_size % 32 != 0 || config.image_size < 32) {
    throw ConfigError("ccip.image_size must be a positive multiple of 32, got " + std::to_string(config.image_size));
  }
  Rng rng(config.seed);
  stem_ = nn::Conv2d<T>(1, config.widths[0], 7, 2, 3, rng);
  stem_bn_ = nn::BatchNorm2d<T>(config.widths[0]);
  int in = config.widths[0];
  for (int s = 0; s < 4; ++s) {
    const int out = config.widths[static_cast<std::size_t>(s)];
    for (int b = 0; b < config.blocks_per_stage; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      blocks_.emplace_back(in, out, stride, config.dropout, rng);
      in = out;
    }
  }
  const int side = config.image_size / 32;
  head_ = nn::Linear<T>(in * side * side, config.d_z, rng);
}

template <class T>
Mat<T> ImageEncoder<T>::forward(const FeatureMap<T>& x) {
  if (x.c != 1 || x.h != config_.image_size || x.w != config_.image_size) {
    throw ShapeError("image encoder expects n x 1 x " + std::to_string(config_.image_size) + " x " +
                     std::to_string(config_.image_size) + ", got " + std::to_string(x.c) + " x " + std::to_string(x.h) +
                     " x " + std::to_string(x.w));
  }
  FeatureMap<T> h = pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_.forward(x))));
  for (auto& b : blocks_) h = b.forward(h);
  fc_ = h.c;
  fh_ = h.h;
  fw_ = h.w;
  return head_.forward(h.data);
}

template <class T>
void ImageEncoder<T>::backward(const Mat<T>& dz) {
  FeatureMap<T> dh(static_cast<int>(dz.rows()), fc_, fh_, fw_);
  dh.data = head_.backward(dz);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dh = it->backward(dh);
  stem_.backward(stem_bn_.backward(stem_relu_.backward(pool_.backward(dh))));
}

template <class T>
void ImageEncoder<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  stem_.visit(this->join(prefix, "stem"), fn);
  stem_bn_.visit(this->join(prefix, "stem_bn"), fn);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].visit(this->join(prefix, "block" + std::to_string(i)), fn);
  head_.visit(this->join(prefix, "head"), fn);
}

template <class T>
void ImageEncoder<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  stem_bn_.set_training(t);
  for (auto& b : blocks_) b.set_training(t);
}

// ---------------------------------------------------------------------------

Mat<double> l2_normalize_rows(const Mat<double>& x) {
  Mat<double> u = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n == 0.0) throw NumericError("cannot normalize a zero latent");
    u.row(i) /= n;
  }
  return u;
}

Mat<double> l2_normalize_backward(const Mat<double>& x, const Mat<double>& du) {
  Mat<double> dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    const auto u = x.row(i) / n;
    dx.row(i) = (du.row(i) - u * u.dot(du.row(i))) / n;
  }
  return dx;
}

CcipLoss ccip_loss(const Mat<double>& cad, const Mat<double>& image, double tau, bool want_grad) {
  if (cad.rows() != image.rows() || cad.cols() != image.cols()) {
    throw ShapeError("ccip_loss: cad " + nn::shape_str(cad.rows(), cad.cols()) + " vs image " +
                     nn::shape_str(image.rows(), image.cols()));
  }
  const Eigen::Index b = cad.rows();
  if (b < 2) throw ShapeError("ccip_loss needs at least 2 pairs, got " + std::to_string(b));
  if (!(tau > 0.0)) throw ConfigError("ccip_loss: temperature must be positive");
  const double kappa = 1.0 / tau;

  Mat<double> views(2 * b, cad.cols());
  for (Eigen::Index k = 0; k < b; ++k) {
    views.row(2 * k) = cad.row(k);
    views.row(2 * k + 1) = image.row(k);
  }
  const Mat<double> v = l2_normalize_rows(views);
  const Mat<double> sim = v * v.transpose();
  const Eigen::Index n = 2 * b;

  CcipLoss out;
  Mat<double> g = Mat<double>::Zero(n, n);  // dL/dlogits
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index pos = (i % 2 == 0) ? i + 1 : i - 1;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != i) mx = std::max(mx, kappa * sim(i, k));
    }
    double z = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != i) z += std::exp(kappa * sim(i, k) - mx);
    }
    out.loss += -(kappa * sim(i, pos) - mx) + std::log(z);
    if (want_grad) {
      for (Eigen::Index k = 0; k < n; ++k) {
        if (k != i) g(i, k) = std::exp(kappa * sim(i, k) - mx) / z;
      }
      g(i, pos) -= 1.0;
    }
  }
  out.loss /= static_cast<double>(n);
  if (!want_grad) return out;
  g /= static_cast<double>(n);
  out.d_inv_tau = g.cwiseProduct(sim).sum();
  const Mat<double> dv = kappa * (g + g.transpose()) * v;
  const Mat<double> dviews = l2_normalize_backward(views, dv);
  out.d_cad.resize(b, cad.cols());
  out.d_image.resize(b, cad.cols());
  for (Eigen::Index k = 0; k < b; ++k) {
    out.d_cad.row(k) = dviews.row(2 * k);
    out.d_image.row(k) = dviews.row(2 * k + 1);
  }
  return out;
}

template <class T>
FeatureMap<T> image_batch(const std::vector<GrayImage>& images) {
  if (images.empty()) throw ShapeError("image_batch: no images");
  const int w = images.front().width;
  const int h = images.front().height;
  FeatureMap<T> x(static_cast<int>(images.size()), 1, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width != w || images[i].height != h) throw ShapeError("image_batch: mixed image sizes");
    for (int p = 0; p < w * h; ++p) {
      x.data(static_cast<Eigen::Index>(i), p) = static_cast<T>(images[i].data[static_cast<std::size_t>(p)]);
    }
  }
  return x;
}

// ---------------------------------------------------------------------------

template <class T>
CcipModel<T>::CcipModel(const CcipConfig& config) : config_(config), encoder_(config) {
  log_inv_tau_.resize(1, 1);
  log_inv_tau_.value(0, 0) = static_cast<T>(std::log(1.0 / config.tau));
  log_inv_tau_.trainable = config.learn_tau;
}

template <class T>
double CcipModel<T>::tau() const {
  return std::exp(-static_cast<double>(log_inv_tau_.value(0, 0)));
}

template <class T>
Mat<T> CcipModel<T>::image_latents(const std::vector<GrayImage>& preprocessed) {
  return encoder_.forward(image_batch<T>(preprocessed));
}

template <class T>
Mat<T> CcipModel<T>::embed_image(const GrayImage& raw) {
  const Mat<T> z = image_latents({preprocess_for_encoder(raw, config_.image_size)});
  return l2_normalize_rows(z.template cast<double>()).template cast<T>();
}

template <class T>
double CcipModel<T>::loss_and_backward(const std::vector<GrayImage>& preprocessed, const Mat<T>& cad_latents,
                                       double scale) {
  const Mat<T> zi = image_latents(preprocessed);
  const auto l = ccip_loss(cad_latents.template cast<double>(), zi.template cast<double>(), tau(), true);
  encoder_.backward((scale * l.d_image).template cast<T>());
  if (log_inv_tau_.trainable) {
    log_inv_tau_.grad(0, 0) += static_cast<T>(scale * l.d_inv_tau / tau());
  }
  return l.loss;
}

template <class T>
double CcipModel<T>::evaluate(const std::vector<GrayImage>& preprocessed, const Mat<T>& cad_latents) {
  const bool was = this->training();
  set_training(false);
  const Mat<T> zi = image_latents(preprocessed);
  set_training(was);
  return ccip_loss(cad_latents.template cast<double>(), zi.template cast<double>(), tau(), false).loss;
}

template <class T>
void CcipModel<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  encoder_.visit(this->join(prefix, "image_encoder"), fn);
  fn(this->join(prefix, "log_inv_tau"), log_inv_tau_);
}

template <class T>
void CcipModel<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  encoder_.set_training(t);
}

template class BasicBlock<float>;
template class BasicBlock<double>;
template class ImageEncoder<float>;
template class ImageEncoder<double>;
template class CcipModel<float>;
template class CcipModel<double>;
template FeatureMap<float> image_batch<float>(const std::vector<GrayImage>&);
template FeatureMap<double> image_batch<double>(const std::vector<GrayImage>&);

}  // namespace gencad::models
