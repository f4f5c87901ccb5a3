#pragma once

#include <vector>

#include "gencad/nn/tensor.hpp"

namespace gencad::nn {

/// Sum over rows of -log softmax(logits_r)[target_r]; rows with a negative
/// target are skipped. When grad is given, scale * d(loss)/d(logits) is
/// accumulated into it.
template <class T>
double cross_entropy(const Mat<T>& logits, const std::vector<int>& targets, Mat<T>* grad = nullptr, double scale = 1.0);

/// Mean squared error over all entries; grad receives scale * d(loss)/d(a).
template <class T>
double mse(const Mat<T>& a, const Mat<T>& b, Mat<T>* grad = nullptr, double scale = 1.0);

}  // namespace gencad::nn
