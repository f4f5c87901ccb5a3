#pragma once

// Central-difference gradient verification in double precision. The scalar
// probed is L = sum(R .* forward(input)) for a fixed random R.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gencad/nn/tensor.hpp"
#include "gencad/rng.hpp"

namespace gencad::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[index]" of the worst entry
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient
/// is below the finite-difference noise level from dominating the report.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// forward(input) -> output; backward(dOutput) -> dInput (return an empty
/// matrix when the input is not differentiable). Pass input = nullptr to check
/// parameters only.
template <class Forward, class Backward>
GradCheckReport finite_diff_check(const std::vector<NamedParameter<double>>& params, Mat<double>* input,
                                  Forward&& forward, Backward&& backward, double eps = 1e-5,
                                  std::uint64_t seed = 0, double floor = 1e-6) {
  Mat<double> dummy;
  const Mat<double>& x0 = input ? *input : dummy;
  Mat<double> y = forward(x0);
  Rng rng(seed);
  Mat<double> r(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform(-1.0, 1.0);

  for (const auto& p : params) p.param->zero_grad();
  y = forward(x0);
  const Mat<double> dx = backward(r);
  auto loss = [&]() { return forward(input ? *input : dummy).cwiseProduct(r).sum(); };

  GradCheckReport report;
  auto probe = [&](Mat<double>& value, double analytic_of_index, Eigen::Index i, const std::string& name) {
    const double saved = value.data()[i];
    value.data()[i] = saved + eps;
    const double lp = loss();
    value.data()[i] = saved - eps;
    const double lm = loss();
    value.data()[i] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double err = relative_error(analytic_of_index, numeric, floor);
    ++report.checked;
    if (err > report.max_rel_error || report.worst.empty()) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      if (err >= report.max_rel_error) report.worst = name + "[" + std::to_string(i) + "]";
    }
  };

  // Snapshot analytic gradients; probing re-runs forward and must not disturb them.
  std::vector<Mat<double>> grads;
  for (const auto& p : params) grads.push_back(p.param->grad);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].param->trainable) continue;
    auto& value = params[k].param->value;
    for (Eigen::Index i = 0; i < value.size(); ++i) probe(value, grads[k].data()[i], i, params[k].name);
  }
  if (input && dx.size() == input->size()) {
    for (Eigen::Index i = 0; i < input->size(); ++i) probe(*input, dx.data()[i], i, "input");
  }
  return report;
}

}  // namespace gencad::nn
