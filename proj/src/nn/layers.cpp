#include "gencad/nn/layers.hpp"

#include <cmath>

namespace gencad::nn {

namespace {

template <class T>
void fill_uniform(Mat<T>& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
using MapMat = Eigen::Map<Mat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const Mat<T>>;

}  // namespace

// ---- Linear -------------------------------------------------------------------

template <class T>
Linear<T>::Linear(int in, int out, Rng& rng, bool bias) : has_bias(bias) {
  weight.resize(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill_uniform(weight.value, rng, bound);
  if (has_bias) {
    this->bias.resize(1, out);
    fill_uniform(this->bias.value, rng, bound);
  }
}

template <class T>
Mat<T> Linear<T>::forward(const Mat<T>& x) {
  expect_cols(x, weight.value.rows(), "Linear");
  x_ = x;
  Mat<T> y = x * weight.value;
  if (has_bias) y.rowwise() += bias.value.row(0);
  return y;
}

template <class T>
Mat<T> Linear<T>::backward(const Mat<T>& dy) {
  weight.grad.noalias() += x_.transpose() * dy;
  if (has_bias) bias.grad.row(0) += dy.colwise().sum();
  return dy * weight.value.transpose();
}

template <class T>
void Linear<T>::visit(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  fn(this->join(prefix, "weight"), weight);
  if (has_bias) fn(this->join(prefix, "bias"), bias);
}

// ---- Embedding ----------------------------------------------------------------

template <class T>
Embedding<T>::Embedding(int count, int dim, Rng& rng) {
  table.resize(count, dim);
  for (Eigen::Index i = 0; i < table.value.size(); ++i) table.value.data()[i] = static_cast<T>(rng.normal());
}

template <class T>
Mat<T> Embedding<T>::forward(const std::vector<int>& ids) {
  ids_ = ids;
  Mat<T> out(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows()) {
      throw ShapeError("Embedding: index " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(table.value.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]);
  }
  return out;
}

template <class T>
void Embedding<T>::backward(const Mat<T>& dy) {
  for (std::size_t i = 0; i < ids_.size(); ++i) table.grad.row(ids_[i]) += dy.row(static_cast<Eigen::Index>(i));
}

template <class T>
void Embedding<T>::visit(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  fn(this->join(prefix, "table"), table);
}

// ---- LayerNorm ----------------------------------------------------------------

template <class T>
LayerNorm<T>::LayerNorm(int dim, double eps) : eps_(eps) {
  gamma.resize(1, dim);
  gamma.value.setOnes();
  beta.resize(1, dim);
}

template <class T>
Mat<T> LayerNorm<T>::forward(const Mat<T>& x) {
  expect_cols(x, gamma.value.cols(), "LayerNorm");
  const Eigen::Index d = x.cols();
  xhat_.resize(x.rows(), d);
  inv_std_.resize(static_cast<std::size_t>(x.rows()));
  Mat<T> y(x.rows(), d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps_));
    inv_std_[static_cast<std::size_t>(r)] = inv;
    xhat_.row(r) = (x.row(r).array() - mean) * inv;
    y.row(r) = xhat_.row(r).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
  }
  return y;
}

template <class T>
Mat<T> LayerNorm<T>::backward(const Mat<T>& dy) {
  const auto d = static_cast<T>(dy.cols());
  gamma.grad.row(0) += dy.cwiseProduct(xhat_).colwise().sum();
  beta.grad.row(0) += dy.colwise().sum();
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const Vec<T> g = dy.row(r).cwiseProduct(gamma.value.row(0));
    const T sum_g = g.sum();
    const T sum_gx = g.dot(xhat_.row(r));
    dx.row(r) = (inv_std_[static_cast<std::size_t>(r)] / d) *
                (d * g.array() - sum_g - xhat_.row(r).array() * sum_gx).matrix();
  }
  return dx;
}

template <class T>
void LayerNorm<T>::visit(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  fn(this->join(prefix, "gamma"), gamma);
  fn(this->join(prefix, "beta"), beta);
}

// ---- Dropout / activations ----------------------------------------------------

template <class T>
Mat<T> Dropout<T>::forward(const Mat<T>& x) {
  active_ = this->training() && p_ > 0.0;
  if (!active_) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
  mask_.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = rng_.bernoulli(p_) ? T(0) : keep_scale;
  return x.cwiseProduct(mask_);
}

template <class T>
Mat<T> Dropout<T>::backward(const Mat<T>& dy) {
  if (!active_) return dy;
  return dy.cwiseProduct(mask_);
}

template <class T>
Mat<T> Tanh<T>::forward(const Mat<T>& x) {
  y_ = x.array().tanh();
  return y_;
}

template <class T>
Mat<T> Tanh<T>::backward(const Mat<T>& dy) {
  return dy.array() * (T(1) - y_.array().square());
}

template <class T>
Mat<T> ReLU<T>::forward(const Mat<T>& x) {
  x_ = x;
  return x.cwiseMax(T(0));
}

template <class T>
Mat<T> ReLU<T>::backward(const Mat<T>& dy) {
  return (x_.array() > T(0)).select(dy, T(0));
}

template <class T>
Mat<T> softmax_rows(const Mat<T>& logits) {
  Mat<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <class T>
Mat<T> sinusoidal_pe(int positions, int dim) {
  Mat<T> pe(positions, dim);
  for (int p = 0; p < positions; ++p) pe.row(p) = sinusoidal_embedding<T>(p, dim);
  return pe;
}

template <class T>
Vec<T> sinusoidal_embedding(double position, int dim) {
  Vec<T> v(dim);
  for (int i = 0; i < dim; ++i) {
    const int pair = i / 2;
    const double freq = std::pow(10000.0, -2.0 * pair / static_cast<double>(dim));
    v(i) = static_cast<T>(i % 2 == 0 ? std::sin(position * freq) : std::cos(position * freq));
  }
  return v;
}

// ---- Conv2d -------------------------------------------------------------------

template <class T>
Conv2d<T>::Conv2d(int in_ch, int out_ch, int kernel, int stride, int padding, Rng& rng, bool bias)
    : has_bias(bias), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), padding_(padding) {
  weight.resize(out_ch, in_ch * kernel * kernel);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel * kernel));
  fill_uniform(weight.value, rng, bound);
  if (has_bias) {
    this->bias.resize(1, out_ch);
    fill_uniform(this->bias.value, rng, bound);
  }
}

template <class T>
void Conv2d<T>::im2col(const T* img, int h, int w, Mat<T>& cols) const {
  const int ho = out_size(h);
  const int wo = out_size(w);
  cols.resize(static_cast<Eigen::Index>(in_ch_) * kernel_ * kernel_, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < in_ch_; ++c) {
    const T* chan = img + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        T* row = cols.data() + ((static_cast<std::ptrdiff_t>(c) * kernel_ + ky) * kernel_ + kx) * cols.cols();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          T* dst = row + static_cast<std::ptrdiff_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = chan + static_cast<std::ptrdiff_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void Conv2d<T>::col2im(const Mat<T>& cols, int h, int w, T* img) const {
  const int ho = out_size(h);
  const int wo = out_size(w);
  for (int c = 0; c < in_ch_; ++c) {
    T* chan = img + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const T* row = cols.data() + ((static_cast<std::ptrdiff_t>(c) * kernel_ + ky) * kernel_ + kx) * cols.cols();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::ptrdiff_t>(oy) * wo;
          T* dst = chan + static_cast<std::ptrdiff_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
FeatureMap<T> Conv2d<T>::forward(const FeatureMap<T>& x) {
  if (x.c != in_ch_) {
    throw ShapeError("Conv2d: expected " + std::to_string(in_ch_) + " input channels, got " + std::to_string(x.c));
  }
  x_ = x;
  const int ho = out_size(x.h);
  const int wo = out_size(x.w);
  if (ho <= 0 || wo <= 0) throw ShapeError("Conv2d: input " + shape_str(x.h, x.w) + " smaller than kernel");
  FeatureMap<T> y(x.n, out_ch_, ho, wo);
  Mat<T> cols;
  for (int b = 0; b < x.n; ++b) {
    im2col(x.image(b), x.h, x.w, cols);
    MapMat<T> out(y.image(b), out_ch_, static_cast<Eigen::Index>(ho) * wo);
    out.noalias() = weight.value * cols;
    if (has_bias) out.colwise() += bias.value.row(0).transpose();
  }
  return y;
}

template <class T>
FeatureMap<T> Conv2d<T>::backward(const FeatureMap<T>& dy) {
  FeatureMap<T> dx(x_.n, x_.c, x_.h, x_.w);
  Mat<T> cols;
  Mat<T> dcols;
  for (int b = 0; b < x_.n; ++b) {
    im2col(x_.image(b), x_.h, x_.w, cols);
    ConstMapMat<T> g(dy.image(b), out_ch_, static_cast<Eigen::Index>(dy.h) * dy.w);
    weight.grad.noalias() += g * cols.transpose();
    if (has_bias) bias.grad.row(0) += g.rowwise().sum().transpose();
    dcols.noalias() = weight.value.transpose() * g;
    col2im(dcols, x_.h, x_.w, dx.image(b));
  }
  return dx;
}

template <class T>
void Conv2d<T>::visit(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  fn(this->join(prefix, "weight"), weight);
  if (has_bias) fn(this->join(prefix, "bias"), bias);
}

// ---- BatchNorm2d --------------------------------------------------------------

template <class T>
BatchNorm2d<T>::BatchNorm2d(int channels, double momentum, double eps) : momentum_(momentum), eps_(eps) {
  gamma.resize(1, channels);
  gamma.value.setOnes();
  beta.resize(1, channels);
  running_mean.resize(1, channels);
  running_var.resize(1, channels);
  running_var.value.setOnes();
  running_mean.trainable = false;
  running_var.trainable = false;
}

template <class T>
FeatureMap<T> BatchNorm2d<T>::forward(const FeatureMap<T>& x) {
  const int channels = static_cast<int>(gamma.value.cols());
  if (x.c != channels) {
    throw ShapeError("BatchNorm2d: expected " + std::to_string(channels) + " channels, got " + std::to_string(x.c));
  }
  batch_stats_ = this->training();
  const int plane = x.plane();
  const double count = static_cast<double>(x.n) * plane;
  xhat_ = FeatureMap<T>(x.n, x.c, x.h, x.w);
  inv_std_.assign(static_cast<std::size_t>(channels), T(0));
  FeatureMap<T> y(x.n, x.c, x.h, x.w);
  for (int c = 0; c < channels; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (batch_stats_) {
      for (int b = 0; b < x.n; ++b) {
        const T* p = x.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
        for (int i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= count;
      for (int b = 0; b < x.n; ++b) {
        const T* p = x.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
        for (int i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      const double unbiased = count > 1 ? var / (count - 1) : var;
      var /= count;
      running_mean.value(0, c) = static_cast<T>((1 - momentum_) * running_mean.value(0, c) + momentum_ * mean);
      running_var.value(0, c) = static_cast<T>((1 - momentum_) * running_var.value(0, c) + momentum_ * unbiased);
    } else {
      mean = running_mean.value(0, c);
      var = running_var.value(0, c);
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
    inv_std_[static_cast<std::size_t>(c)] = inv;
    const T g = gamma.value(0, c);
    const T bt = beta.value(0, c);
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      T* xh = xhat_.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      T* out = y.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      for (int i = 0; i < plane; ++i) {
        xh[i] = static_cast<T>((p[i] - mean) * inv);
        out[i] = g * xh[i] + bt;
      }
    }
  }
  return y;
}

template <class T>
FeatureMap<T> BatchNorm2d<T>::backward(const FeatureMap<T>& dy) {
  const int channels = static_cast<int>(gamma.value.cols());
  const int plane = dy.plane();
  const double count = static_cast<double>(dy.n) * plane;
  FeatureMap<T> dx(dy.n, dy.c, dy.h, dy.w);
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (int b = 0; b < dy.n; ++b) {
      const T* g = dy.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      const T* xh = xhat_.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      for (int i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xh += g[i] * xh[i];
      }
    }
    gamma.grad(0, c) += static_cast<T>(sum_dy_xh);
    beta.grad(0, c) += static_cast<T>(sum_dy);
    const double scale = gamma.value(0, c) * inv_std_[static_cast<std::size_t>(c)];
    for (int b = 0; b < dy.n; ++b) {
      const T* g = dy.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      const T* xh = xhat_.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      T* out = dx.image(b) + static_cast<std::ptrdiff_t>(c) * plane;
      for (int i = 0; i < plane; ++i) {
        out[i] = batch_stats_
                     ? static_cast<T>(scale * (g[i] - sum_dy / count - xh[i] * sum_dy_xh / count))
                     : static_cast<T>(scale * g[i]);
      }
    }
  }
  return dx;
}

template <class T>
void BatchNorm2d<T>::visit(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  fn(this->join(prefix, "gamma"), gamma);
  fn(this->join(prefix, "beta"), beta);
  fn(this->join(prefix, "running_mean"), running_mean);
  fn(this->join(prefix, "running_var"), running_var);
}

// ---- pooling / elementwise ----------------------------------------------------

template <class T>
FeatureMap<T> AvgPool2d<T>::forward(const FeatureMap<T>& x) {
  if (x.h % kernel_ != 0 || x.w % kernel_ != 0) {
    throw ShapeError("AvgPool2d: input " + shape_str(x.h, x.w) + " not divisible by kernel " + std::to_string(kernel_));
  }
  in_h_ = x.h;
  in_w_ = x.w;
  const int ho = x.h / kernel_;
  const int wo = x.w / kernel_;
  FeatureMap<T> y(x.n, x.c, ho, wo);
  const T inv = static_cast<T>(1.0 / (kernel_ * kernel_));
  for (int b = 0; b < x.n; ++b) {
    for (int c = 0; c < x.c; ++c) {
      const T* src = x.image(b) + static_cast<std::ptrdiff_t>(c) * x.plane();
      T* dst = y.image(b) + static_cast<std::ptrdiff_t>(c) * y.plane();
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx) acc += src[(oy * kernel_ + ky) * x.w + ox * kernel_ + kx];
          }
          dst[oy * wo + ox] = acc * inv;
        }
      }
    }
  }
  return y;
}

template <class T>
FeatureMap<T> AvgPool2d<T>::backward(const FeatureMap<T>& dy) {
  FeatureMap<T> dx(dy.n, dy.c, in_h_, in_w_);
  const T inv = static_cast<T>(1.0 / (kernel_ * kernel_));
  for (int b = 0; b < dy.n; ++b) {
    for (int c = 0; c < dy.c; ++c) {
      const T* src = dy.image(b) + static_cast<std::ptrdiff_t>(c) * dy.plane();
      T* dst = dx.image(b) + static_cast<std::ptrdiff_t>(c) * dx.plane();
      for (int iy = 0; iy < in_h_; ++iy) {
        for (int ix = 0; ix < in_w_; ++ix) dst[iy * in_w_ + ix] = src[(iy / kernel_) * dy.w + ix / kernel_] * inv;
      }
    }
  }
  return dx;
}

template <class T>
FeatureMap<T> ReLU2d<T>::forward(const FeatureMap<T>& x) {
  x_ = x.data;
  FeatureMap<T> y = x;
  y.data = x.data.cwiseMax(T(0));
  return y;
}

template <class T>
FeatureMap<T> ReLU2d<T>::backward(const FeatureMap<T>& dy) {
  FeatureMap<T> dx = dy;
  dx.data = (x_.array() > T(0)).select(dy.data, T(0));
  return dx;
}

template <class T>
FeatureMap<T> Dropout2d<T>::forward(const FeatureMap<T>& x) {
  FeatureMap<T> y = x;
  y.data = inner_.forward(x.data);
  return y;
}

template <class T>
FeatureMap<T> Dropout2d<T>::backward(const FeatureMap<T>& dy) {
  FeatureMap<T> dx = dy;
  dx.data = inner_.backward(dy.data);
  return dx;
}

template <class T>
FeatureMap<T> residual_add(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  if (a.n != b.n || a.c != b.c || a.h != b.h || a.w != b.w) {
    throw ShapeError("residual_add: shape mismatch " + std::to_string(a.c) + "x" + shape_str(a.h, a.w) + " vs " +
                     std::to_string(b.c) + "x" + shape_str(b.h, b.w));
  }
  FeatureMap<T> out = a;
  out.data += b.data;
  return out;
}

#define GENCAD_INSTANTIATE(T)                                        \
  template class Linear<T>;                                          \
  template class Embedding<T>;                                       \
  template class LayerNorm<T>;                                       \
  template class Dropout<T>;                                         \
  template class Tanh<T>;                                            \
  template class ReLU<T>;                                            \
  template class Conv2d<T>;                                          \
  template class BatchNorm2d<T>;                                     \
  template class AvgPool2d<T>;                                       \
  template class ReLU2d<T>;                                          \
  template class Dropout2d<T>;                                       \
  template Mat<T> softmax_rows<T>(const Mat<T>&);                    \
  template Mat<T> sinusoidal_pe<T>(int, int);                        \
  template Vec<T> sinusoidal_embedding<T>(double, int);              \
  template FeatureMap<T> residual_add<T>(const FeatureMap<T>&, const FeatureMap<T>&);

GENCAD_INSTANTIATE(float)
GENCAD_INSTANTIATE(double)
#undef GENCAD_INSTANTIATE

}  // namespace gencad::nn
