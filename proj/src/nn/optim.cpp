#include "gencad/nn/optim.hpp"

#include <cmath>

namespace gencad::nn {

template <class T>
Adam<T>::Adam(std::vector<NamedParameter<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    Parameter<T> m;
    m.resize(p.param->value.rows(), p.param->value.cols());
    m.trainable = false;
    m_.push_back(m);
    v_.push_back(m);
  }
}

template <class T>
void Adam<T>::step() {
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i].param;
    auto& m = m_[i].value;
    auto& v = v_[i].value;
    Mat<T> g = p.grad;
    if (config_.weight_decay != 0.0) {
      if (config_.decoupled) {
        p.value *= static_cast<T>(1.0 - config_.lr * config_.weight_decay);
      } else {
        g += static_cast<T>(config_.weight_decay) * p.value;
      }
    }
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseAbs2();
    const T step_size = static_cast<T>(config_.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    p.value.array() -= step_size * m.array() / (v.array().sqrt() * inv_bc2 + static_cast<T>(config_.eps));
  }
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.param->zero_grad();
}

template <class T>
void Adam<T>::visit_state(const typename Module<T>::Visitor& fn) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    fn(params_[i].name + ".adam_m", m_[i]);
    fn(params_[i].name + ".adam_v", v_[i]);
  }
}

template <class T>
double clip_grad_norm(const std::vector<NamedParameter<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.param->grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T s = static_cast<T>(max_norm / norm);
    for (const auto& p : params) p.param->grad *= s;
  }
  return norm;
}

double WarmupSchedule::lr_at(std::int64_t step) const {
  if (warmup_ <= 0 || step >= warmup_) return base_lr_;
  if (step <= 0) return 0.0;
  return base_lr_ * static_cast<double>(step) / static_cast<double>(warmup_);
}

double ReduceOnPlateau::step(double metric, double lr) {
  if (!has_best_ || metric < best_ * (1.0 - threshold_)) {
    best_ = metric;
    has_best_ = true;
    bad_epochs_ = 0;
    return lr;
  }
  if (++bad_epochs_ > patience_) {
    bad_epochs_ = 0;
    return std::max(min_lr_, lr * factor_);
  }
  return lr;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(const std::vector<NamedParameter<float>>&, double);
template double clip_grad_norm<double>(const std::vector<NamedParameter<double>>&, double);

}  // namespace gencad::nn
