#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "engage/tensor.hpp"

namespace engage {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

/// Scalar-valued function of a list of input tensors, built on the given tape.
template <typename Scalar>
using TapeFunction = std::function<Tensor<Scalar>(Tape<Scalar>&, std::span<const Tensor<Scalar>>)>;

/// Compares reverse-mode gradients of `f` with central differences of step
/// `h`. The error per entry is |analytic - numeric| / max(1, |analytic|).
/// `f` is evaluated exactly as written, including any stop_gradient cuts, so
/// a detached path shows up as a discrepancy.
template <typename Scalar>
GradCheckReport fd_check(const TapeFunction<Scalar>& f, std::vector<Matrix<Scalar>> inputs, Scalar h,
                         double tolerance) {
  std::vector<Matrix<Scalar>> analytic;
  {
    Tape<Scalar> tape;
    std::vector<Tensor<Scalar>> vars;
    for (const auto& x : inputs) vars.push_back(tape.variable(x));
    tape.backward(f(tape, vars));
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const auto& g = vars[i].grad();
      analytic.push_back(g.size() == 0 ? Matrix<Scalar>::Zero(inputs[i].rows(), inputs[i].cols()) : g);
    }
  }

  auto evaluate = [&]() {
    Tape<Scalar> tape;
    std::vector<Tensor<Scalar>> consts;
    for (const auto& x : inputs) consts.push_back(tape.constant(x));
    return static_cast<double>(f(tape, consts).value()(0, 0));
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        const Scalar saved = inputs[i](r, c);
        inputs[i](r, c) = saved + h;
        const double up = evaluate();
        inputs[i](r, c) = saved - h;
        const double down = evaluate();
        inputs[i](r, c) = saved;
        const double numeric = (up - down) / (2.0 * static_cast<double>(h));
        const double a = static_cast<double>(analytic[i](r, c));
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        if (err >= report.max_rel_error) {
          report.max_rel_error = err;
          report.worst_input = i;
          report.worst_row = r;
          report.worst_col = c;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace engage
