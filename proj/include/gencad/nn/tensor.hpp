#pragma once

// Dense storage, parameters and the module interface shared by every layer.
// Layers are templated on the scalar type: float for training, double for
// finite-difference checks. Forward calls cache what backward needs, so a
// layer instance is used once per forward pass.

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "gencad/error.hpp"

namespace gencad::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vec = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

/// Batch of feature maps, shape (n, c, h, w); row b of `data` holds image b in
/// channel-major order.
template <class T>
struct FeatureMap {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  Mat<T> data;

  FeatureMap() = default;
  FeatureMap(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(Mat<T>::Zero(n_, c_ * h_ * w_)) {}
  int plane() const { return h * w; }
  T* image(int b) { return data.data() + static_cast<std::ptrdiff_t>(b) * data.cols(); }
  const T* image(int b) const { return data.data() + static_cast<std::ptrdiff_t>(b) * data.cols(); }
};

template <class T>
struct Parameter {
  Mat<T> value;
  Mat<T> grad;
  bool trainable = true;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Mat<T>::Zero(rows, cols);
    grad = Mat<T>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

template <class T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param = nullptr;
};

template <class T>
class Module {
 public:
  using Visitor = std::function<void(const std::string&, Parameter<T>&)>;

  virtual ~Module() = default;
  /// Visits every parameter (including non-trainable state such as running
  /// statistics) under a dotted name.
  virtual void visit(const std::string& prefix, const Visitor& fn) = 0;
  virtual void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  std::vector<NamedParameter<T>> parameters(const std::string& prefix = "") {
    std::vector<NamedParameter<T>> out;
    visit(prefix, [&](const std::string& name, Parameter<T>& p) { out.push_back({name, &p}); });
    return out;
  }
  std::vector<NamedParameter<T>> trainable_parameters(const std::string& prefix = "") {
    std::vector<NamedParameter<T>> out;
    visit(prefix, [&](const std::string& name, Parameter<T>& p) {
      if (p.trainable) out.push_back({name, &p});
    });
    return out;
  }
  void zero_grad() {
    visit("", [](const std::string&, Parameter<T>& p) { p.zero_grad(); });
  }

 protected:
  static std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
  }

  bool training_ = true;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <class T>
void expect_cols(const Mat<T>& x, Eigen::Index cols, const char* where) {
  if (x.cols() != cols) {
    throw ShapeError(std::string(where) + ": expected " + std::to_string(cols) + " columns, got " +
                     shape_str(x.rows(), x.cols()));
  }
}

}  // namespace gencad::nn
