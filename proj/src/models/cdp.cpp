#include "gencad/models/cdp.hpp"

#include <algorithm>
#include <cmath>

#include "gencad/nn/loss.hpp"

namespace gencad::models {

CdpConfig CdpConfig::from(const Config& cfg, const std::string& p) {
  CdpConfig c;
  c.d_z = cfg.get(p + "d_z", c.d_z);
  c.cond_dim = cfg.get(p + "cond_dim", c.cond_dim);
  c.steps = cfg.get(p + "steps", c.steps);
  c.beta_start = cfg.get(p + "beta_start", c.beta_start);
  c.beta_end = cfg.get(p + "beta_end", c.beta_end);
  c.blocks = cfg.get(p + "blocks", c.blocks);
  c.width = cfg.get(p + "width", c.width);
  c.dropout = cfg.get(p + "dropout", c.dropout);
  c.predict_x0 = cfg.get(p + "predict_x0", c.predict_x0);
  c.clip_x0 = cfg.get(p + "clip_x0", c.clip_x0);
  c.clip_value = cfg.get(p + "clip_value", c.clip_value);
  c.seed = cfg.get(p + "seed", c.seed);
  return c;
}

void CdpConfig::write(Config& cfg, const std::string& p) const {
  cfg.set(p + "d_z", d_z, "full scale: 256");
  cfg.set(p + "cond_dim", cond_dim, "0 = unconditional");
  cfg.set(p + "steps", steps, "full scale: 500");
  cfg.set(p + "beta_start", beta_start);
  cfg.set(p + "beta_end", beta_end);
  cfg.set(p + "blocks", blocks, "full scale: 10");
  cfg.set(p + "width", width, "full scale: 2048");
  cfg.set(p + "dropout", dropout, "full scale: 0.1");
  cfg.set(p + "predict_x0", predict_x0, "false = epsilon prediction");
  cfg.set(p + "clip_x0", clip_x0);
  cfg.set(p + "clip_value", clip_value);
  cfg.set(p + "seed", seed);
}

// ---------------------------------------------------------------------------

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end) : steps_(steps) {
  if (steps < 1) throw ConfigError("diffusion needs at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw ConfigError("beta schedule must satisfy 0 < beta_start <= beta_end < 1");
  }
  beta_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    beta_[static_cast<std::size_t>(t)] = beta_start + frac * (beta_end - beta_start);
    alpha_bar_[static_cast<std::size_t>(t)] = alpha_bar_[static_cast<std::size_t>(t - 1)] * (1.0 - beta_[static_cast<std::size_t>(t)]);
  }
}

std::size_t NoiseSchedule::check(int t) const {
  if (t < 1 || t > steps_) throw RangeError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps_));
  return static_cast<std::size_t>(t);
}

double NoiseSchedule::posterior_variance(int t) const {
  const double prev = t > 1 ? alpha_bar(t - 1) : 1.0;
  return beta(t) * (1.0 - prev) / (1.0 - alpha_bar(t));
}

template <class T>
Mat<T> q_sample(const NoiseSchedule& schedule, const Mat<T>& z0, int t, const Mat<T>& eps) {
  const double ab = schedule.alpha_bar(t);
  return (static_cast<T>(std::sqrt(ab)) * z0 + static_cast<T>(std::sqrt(1.0 - ab)) * eps).eval();
}

// ---------------------------------------------------------------------------

template <class T>
ResMlpBlock<T>::ResMlpBlock(int width, double dropout, Rng& rng)
    : norm_(width),
      fc1_(width, width, rng),
      fc2_(width, width, rng),
      drop1_(dropout, rng.next_u64()),
      drop2_(dropout, rng.next_u64()) {}

template <class T>
Mat<T> ResMlpBlock<T>::forward(const Mat<T>& x) {
  return x + drop2_.forward(fc2_.forward(drop1_.forward(relu_.forward(fc1_.forward(norm_.forward(x))))));
}

template <class T>
Mat<T> ResMlpBlock<T>::backward(const Mat<T>& dy) {
  return dy + norm_.backward(fc1_.backward(relu_.backward(drop1_.backward(fc2_.backward(drop2_.backward(dy))))));
}

template <class T>
void ResMlpBlock<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  norm_.visit(this->join(prefix, "norm"), fn);
  fc1_.visit(this->join(prefix, "fc1"), fn);
  fc2_.visit(this->join(prefix, "fc2"), fn);
}

template <class T>
void ResMlpBlock<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  drop1_.set_training(t);
  drop2_.set_training(t);
}

template <class T>
ResMlp<T>::ResMlp(int in, int out, int width, int blocks, double dropout, Rng& rng)
    : in_(in, width, rng), norm_(width) {
  for (int i = 0; i < blocks; ++i) blocks_.emplace_back(width, dropout, rng);
  out_ = nn::Linear<T>(width, out, rng);
}

template <class T>
Mat<T> ResMlp<T>::forward(const Mat<T>& x) {
  Mat<T> h = in_.forward(x);
  for (auto& b : blocks_) h = b.forward(h);
  return out_.forward(norm_.forward(h));
}

template <class T>
Mat<T> ResMlp<T>::backward(const Mat<T>& dy) {
  Mat<T> dh = norm_.backward(out_.backward(dy));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dh = it->backward(dh);
  return in_.backward(dh);
}

template <class T>
void ResMlp<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  in_.visit(this->join(prefix, "in"), fn);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].visit(this->join(prefix, "block" + std::to_string(i)), fn);
  norm_.visit(this->join(prefix, "norm"), fn);
  out_.visit(this->join(prefix, "out"), fn);
}

template <class T>
void ResMlp<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  for (auto& b : blocks_) b.set_training(t);
}

// ---------------------------------------------------------------------------

template <class T>
CdpModel<T>::CdpModel(const CdpConfig& config)
    : config_(config), schedule_(config.steps, config.beta_start, config.beta_end) {
  if (config.cond_dim < 0) throw ConfigError("cdp.cond_dim must be >= 0");
  Rng rng(config.seed);
  net_ = ResMlp<T>(2 * config.d_z + config.cond_dim, config.d_z, config.width, config.blocks, config.dropout, rng);
  null_cond_.resize(1, std::max(config.cond_dim, 0));
  null_cond_.trainable = config.cond_dim > 0;
}

template <class T>
Mat<T> CdpModel<T>::time_features(const std::vector<int>& t) const {
  Mat<T> out(static_cast<Eigen::Index>(t.size()), config_.d_z);
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = nn::sinusoidal_embedding<T>(t[i], config_.d_z);
  }
  return out;
}

template <class T>
Mat<T> CdpModel<T>::denoise(const Mat<T>& z_t, const std::vector<int>& t, const Mat<T>& cond) {
  nn::expect_cols(z_t, config_.d_z, "diffusion latent");
  const Eigen::Index n = z_t.rows();
  if (static_cast<Eigen::Index>(t.size()) != n) throw ShapeError("one timestep per latent row required");
  for (int ti : t) (void)schedule_.beta(ti);
  const int c = config_.cond_dim;
  Mat<T> x(n, 2 * config_.d_z + c);
  x.leftCols(config_.d_z) = z_t;
  used_null_.assign(static_cast<std::size_t>(n), false);
  if (c > 0) {
    if (cond.size() == 0) {
      x.middleCols(config_.d_z, c) = null_cond_.value.replicate(n, 1);
      used_null_.assign(static_cast<std::size_t>(n), true);
    } else {
      if (cond.rows() != n) throw ShapeError("condition rows " + std::to_string(cond.rows()) + " != latent rows " + std::to_string(n));
      nn::expect_cols(cond, c, "diffusion condition");
      x.middleCols(config_.d_z, c) = cond;
    }
  } else if (cond.size() != 0) {
    throw ShapeError("unconditional prior given a condition");
  }
  x.rightCols(config_.d_z) = time_features(t);
  return net_.forward(x);
}

template <class T>
void CdpModel<T>::denoise_backward(const Mat<T>& dout) {
  const Mat<T> dx = net_.backward(dout);
  const int c = config_.cond_dim;
  if (c == 0) return;
  for (std::size_t i = 0; i < used_null_.size(); ++i) {
    if (used_null_[i]) null_cond_.grad.row(0) += dx.row(static_cast<Eigen::Index>(i)).segment(config_.d_z, c);
  }
}

template <class T>
double CdpModel<T>::train_step(const Mat<T>& z0, const Mat<T>& cond, Rng& rng, double scale) {
  const Eigen::Index n = z0.rows();
  std::vector<int> t(static_cast<std::size_t>(n));
  Mat<T> eps(n, z0.cols());
  Mat<T> zt(n, z0.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    t[static_cast<std::size_t>(i)] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(config_.steps)));
    for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = static_cast<T>(rng.normal());
    const double ab = schedule_.alpha_bar(t[static_cast<std::size_t>(i)]);
    zt.row(i) = static_cast<T>(std::sqrt(ab)) * z0.row(i) + static_cast<T>(std::sqrt(1.0 - ab)) * eps.row(i);
  }
  const Mat<T> pred = denoise(zt, t, cond);
  Mat<T> grad;
  const double loss = nn::mse<T>(pred, config_.predict_x0 ? z0 : eps, &grad, scale);
  denoise_backward(grad);
  return loss;
}

template <class T>
Mat<T> CdpModel<T>::sample(int n, const Mat<T>& cond, std::uint64_t seed) {
  Rng rng(seed);
  const int d = config_.d_z;
  Mat<T> z(n, d);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<T>(rng.normal());
  const bool was = this->training();
  set_training(false);
  for (int t = config_.steps; t >= 1; --t) {
    const std::vector<int> ts(static_cast<std::size_t>(n), t);
    const Mat<T> out = denoise(z, ts, cond);
    const double ab = schedule_.alpha_bar(t);
    Mat<T> x0 = config_.predict_x0
                    ? out
                    : ((z - static_cast<T>(std::sqrt(1.0 - ab)) * out) / static_cast<T>(std::sqrt(ab))).eval();
    if (config_.clip_x0) {
      const T lim = static_cast<T>(config_.clip_value);
      x0 = x0.cwiseMax(-lim).cwiseMin(lim);
    }
    const double ab_prev = t > 1 ? schedule_.alpha_bar(t - 1) : 1.0;
    const double c0 = schedule_.beta(t) * std::sqrt(ab_prev) / (1.0 - ab);
    const double ct = (1.0 - ab_prev) * std::sqrt(schedule_.alpha(t)) / (1.0 - ab);
    z = static_cast<T>(c0) * x0 + static_cast<T>(ct) * z;
    if (t > 1) {
      const double sigma = std::sqrt(schedule_.posterior_variance(t));
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] += static_cast<T>(sigma * rng.normal());
    }
  }
  set_training(was);
  return z;
}

template <class T>
void CdpModel<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  net_.visit(this->join(prefix, "denoiser"), fn);
  if (config_.cond_dim > 0) fn(this->join(prefix, "null_cond"), null_cond_);
}

template <class T>
void CdpModel<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  net_.set_training(t);
}

// ---------------------------------------------------------------------------

template <class T>
DeterministicPrior<T>::DeterministicPrior(int cond_dim, int d_z, int width, int blocks, double dropout,
                                          std::uint64_t seed) {
  Rng rng(seed);
  net_ = ResMlp<T>(cond_dim, d_z, width, blocks, dropout, rng);
}

template <class T>
Mat<T> DeterministicPrior<T>::predict(const Mat<T>& z_image) {
  return net_.forward(z_image);
}

template <class T>
double DeterministicPrior<T>::train_step(const Mat<T>& z_image, const Mat<T>& z_cad, double scale) {
  const Mat<T> pred = net_.forward(z_image);
  Mat<T> grad;
  const double loss = nn::mse<T>(pred, z_cad, &grad, scale);
  net_.backward(grad);
  return loss;
}

template <class T>
void DeterministicPrior<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  net_.visit(this->join(prefix, "net"), fn);
}

template <class T>
void DeterministicPrior<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  net_.set_training(t);
}

template Mat<float> q_sample<float>(const NoiseSchedule&, const Mat<float>&, int, const Mat<float>&);
template Mat<double> q_sample<double>(const NoiseSchedule&, const Mat<double>&, int, const Mat<double>&);
template class ResMlpBlock<float>;
template class ResMlpBlock<double>;
template class ResMlp<float>;
template class ResMlp<double>;
template class CdpModel<float>;
template class CdpModel<double>;
template class DeterministicPrior<float>;
template class DeterministicPrior<double>;

}  // namespace gencad::models
