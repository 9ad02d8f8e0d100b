#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "engage/tensor.hpp"

namespace engage {

template <typename Scalar>
void zero_grad(std::span<Parameter<Scalar>* const> params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
void sgd_step(std::span<Parameter<Scalar>* const> params, Scalar lr) {
  for (auto* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      detail::shape_mismatch("sgd_step", p->value, p->grad);
    }
    p->value -= lr * p->grad;
  }
}

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  long step = 0;

  static AdamState for_params(std::span<Parameter<Scalar>* const> params) {
    AdamState s;
    for (const auto* p : params) {
      s.m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      s.v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
    return s;
  }
};

/// Bias-corrected Adam update.
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>* const> params, AdamState<Scalar>& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) + " slots for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i];
    if (state.m[i].rows() != p.value.rows() || state.m[i].cols() != p.value.cols()) {
      detail::shape_mismatch("adam_step", p.value, state.m[i]);
    }
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      detail::shape_mismatch("adam_step", p.value, p.grad);
    }
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * p.grad;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace engage
