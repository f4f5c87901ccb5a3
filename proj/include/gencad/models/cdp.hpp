#pragma once

// Latent diffusion prior over CAD latents, optionally conditioned on an image
// latent, and the deterministic regression baseline.

#include <cstdint>
#include <vector>

#include "gencad/models/config.hpp"
#include "gencad/nn/layers.hpp"

namespace gencad::models {

using nn::Mat;

struct CdpConfig {
  int d_z = 64;
  int cond_dim = 64;     // image latent width; 0 disables conditioning
  int steps = 500;       // T
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int blocks = 10;
  int width = 128;       // full scale: 2048
  double dropout = 0.1;
  bool predict_x0 = false;
  bool clip_x0 = true;   // clamp the x0 estimate to the tanh range while sampling
  double clip_value = 1.0;
  std::uint64_t seed = 0;

  static CdpConfig from(const Config& cfg, const std::string& prefix = "cdp.");
  void write(Config& cfg, const std::string& prefix = "cdp.") const;
};

/// Linear beta schedule, 1-indexed: beta(t), alpha_bar(t) for t in 1..T.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(int steps, double beta_start, double beta_end);

  int steps() const { return steps_; }
  double beta(int t) const { return beta_[check(t)]; }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_[check(t)]; }
  /// Posterior variance of q(z_{t-1} | z_t, z_0); zero at t = 1.
  double posterior_variance(int t) const;

 private:
  std::size_t check(int t) const;
  int steps_ = 0;
  std::vector<double> beta_;       // [0] unused
  std::vector<double> alpha_bar_;  // [0] = 1
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
template <class T>
Mat<T> q_sample(const NoiseSchedule& schedule, const Mat<T>& z0, int t, const Mat<T>& eps);

/// LN-Linear-ReLU-Dropout-Linear-Dropout with identity shortcut.
template <class T>
class ResMlpBlock : public nn::Module<T> {
 public:
  ResMlpBlock() = default;
  ResMlpBlock(int width, double dropout, Rng& rng);

  Mat<T> forward(const Mat<T>& x);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

 private:
  nn::LayerNorm<T> norm_;
  nn::Linear<T> fc1_, fc2_;
  nn::ReLU<T> relu_;
  nn::Dropout<T> drop1_, drop2_;
};

/// Linear in -> blocks -> LayerNorm -> Linear out.
template <class T>
class ResMlp : public nn::Module<T> {
 public:
  ResMlp() = default;
  ResMlp(int in, int out, int width, int blocks, double dropout, Rng& rng);

  Mat<T> forward(const Mat<T>& x);
  Mat<T> backward(const Mat<T>& dy);
  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

 private:
  nn::Linear<T> in_;
  std::vector<ResMlpBlock<T>> blocks_;
  nn::LayerNorm<T> norm_;
  nn::Linear<T> out_;
};

template <class T>
class CdpModel : public nn::Module<T> {
 public:
  CdpModel() = default;
  explicit CdpModel(const CdpConfig& config);

  const CdpConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  bool conditional() const { return config_.cond_dim > 0; }

  /// Denoiser output for noised latents at per-row timesteps; cond may be
  /// empty (rows then use the learned null condition).
  Mat<T> denoise(const Mat<T>& z_t, const std::vector<int>& t, const Mat<T>& cond);
  /// Accumulates gradients of the last denoise() call.
  void denoise_backward(const Mat<T>& dout);

  /// One DDPM training objective evaluation at uniform random t, with
  /// gradients accumulated (scaled). Returns the mean squared error.
  double train_step(const Mat<T>& z0, const Mat<T>& cond, Rng& rng, double scale = 1.0);
  /// Ancestral sampling: n latents (cond has n rows or is empty).
  Mat<T> sample(int n, const Mat<T>& cond, std::uint64_t seed);

  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

 private:
  Mat<T> time_features(const std::vector<int>& t) const;

  CdpConfig config_;
  NoiseSchedule schedule_;
  ResMlp<T> net_;
  nn::Parameter<T> null_cond_;
  std::vector<bool> used_null_;
};

/// ResMLP regression from image latent to CAD latent, trained with MSE.
template <class T>
class DeterministicPrior : public nn::Module<T> {
 public:
  DeterministicPrior() = default;
  DeterministicPrior(int cond_dim, int d_z, int width, int blocks, double dropout, std::uint64_t seed);

  Mat<T> predict(const Mat<T>& z_image);
  /// MSE to target; accumulates gradients.
  double train_step(const Mat<T>& z_image, const Mat<T>& z_cad, double scale = 1.0);

  void visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;
  void set_training(bool t) override;

 private:
  ResMlp<T> net_;
};

}  // namespace gencad::models
