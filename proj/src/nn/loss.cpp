#include "gencad/nn/loss.hpp"

#include <cmath>

namespace gencad::nn {

template <class T>
double cross_entropy(const Mat<T>& logits, const std::vector<int>& targets, Mat<T>* grad, double scale) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " rows");
  }
  if (grad && (grad->rows() != logits.rows() || grad->cols() != logits.cols())) {
    *grad = Mat<T>::Zero(logits.rows(), logits.cols());
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= logits.cols()) {
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside " + std::to_string(logits.cols()) +
                       " classes");
    }
    const double m = static_cast<double>(logits.row(r).maxCoeff());
    double z = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(static_cast<double>(logits(r, c)) - m);
    total += std::log(z) + m - static_cast<double>(logits(r, t));
    if (grad) {
      for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        (*grad)(r, c) += static_cast<T>(scale * std::exp(static_cast<double>(logits(r, c)) - m) / z);
      }
      (*grad)(r, t) -= static_cast<T>(scale);
    }
  }
  return total;
}

template <class T>
double mse(const Mat<T>& a, const Mat<T>& b, Mat<T>* grad, double scale) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("mse: shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
  }
  const double n = static_cast<double>(a.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    total += d * d;
  }
  if (grad) {
    if (grad->rows() != a.rows() || grad->cols() != a.cols()) *grad = Mat<T>::Zero(a.rows(), a.cols());
    *grad += ((a - b) * static_cast<T>(2.0 * scale / n));
  }
  return n > 0 ? total / n : 0.0;
}

template double cross_entropy<float>(const Mat<float>&, const std::vector<int>&, Mat<float>*, double);
template double cross_entropy<double>(const Mat<double>&, const std::vector<int>&, Mat<double>*, double);
template double mse<float>(const Mat<float>&, const Mat<float>&, Mat<float>*, double);
template double mse<double>(const Mat<double>&, const Mat<double>&, Mat<double>*, double);

}  // namespace gencad::nn
