#pragma once

#include <cstdint>
#include <vector>

#include "gencad/nn/tensor.hpp"

namespace gencad::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// true: AdamW (decay applied to the weights); false: L2 term added to the gradient.
  bool decoupled = true;
};

template <class T>
class Adam {
 public:
  Adam(std::vector<NamedParameter<T>> params, AdamConfig config);

  void step();
  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  const AdamConfig& config() const { return config_; }

  /// Moment buffers under "<param>.adam_m" / "<param>.adam_v", for checkpoints.
  void visit_state(const typename Module<T>::Visitor& fn);

 private:
  std::vector<NamedParameter<T>> params_;
  std::vector<Parameter<T>> m_;
  std::vector<Parameter<T>> v_;
  AdamConfig config_;
  std::int64_t steps_ = 0;
};

/// Rescales all gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
template <class T>
double clip_grad_norm(const std::vector<NamedParameter<T>>& params, double max_norm);

/// Linear ramp from 0 to base_lr over `warmup` steps (step counts from 1), constant afterwards.
class WarmupSchedule {
 public:
  WarmupSchedule(double base_lr, std::int64_t warmup) : base_lr_(base_lr), warmup_(warmup) {}
  double lr_at(std::int64_t step) const;

 private:
  double base_lr_;
  std::int64_t warmup_;
};

/// Multiplies the learning rate by `factor` once the metric has not improved
/// (relative threshold) for more than `patience` consecutive epochs.
class ReduceOnPlateau {
 public:
  explicit ReduceOnPlateau(double factor = 0.5, int patience = 10, double threshold = 1e-4, double min_lr = 0.0)
      : factor_(factor), patience_(patience), threshold_(threshold), min_lr_(min_lr) {}
  double step(double metric, double lr);
  int bad_epochs() const { return bad_epochs_; }

 private:
  double factor_;
  int patience_;
  double threshold_;
  double min_lr_;
  double best_ = 0.0;
  bool has_best_ = false;
  int bad_epochs_ = 0;
};

/// Counts micro-batches; ready() turns true every `every` calls to tick().
class GradAccumulator {
 public:
  explicit GradAccumulator(int every = 1) : every_(every < 1 ? 1 : every) {}
  bool tick() {
    count_ = (count_ + 1) % every_;
    return count_ == 0;
  }
  double scale() const { return 1.0 / every_; }
  int every() const { return every_; }

 private:
  int every_;
  int count_ = 0;
};

}  // namespace gencad::nn
