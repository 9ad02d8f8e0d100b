#pragma once

#include <cmath>
#include <vector>

#include "engage/gnn.hpp"
#include "engage/tensor.hpp"

namespace engage {

/// Normalized-temperature cross entropy over the 2B-view batch: each of the
/// 2B anchors has its paired view as positive and the remaining 2B - 2 rows
/// as negatives; the positive is part of the denominator. Returns the mean
/// over anchors.
template <typename Scalar>
Tensor<Scalar> nt_xent(const Tensor<Scalar>& z1, const Tensor<Scalar>& z2, double tau) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) detail::shape_mismatch("nt_xent", z1.value(), z2.value());
  if (z1.rows() < 2) throw ConfigError("nt_xent: batch size must be >= 2");
  if (!(tau > 0.0)) throw ConfigError("nt_xent: temperature must be > 0");
  auto& tape = *z1.tape();
  const Eigen::Index b = z1.rows();
  const auto inv_tau = static_cast<Scalar>(1.0 / tau);

  auto h1 = row_l2_normalize(z1);
  auto h2 = row_l2_normalize(z2);
  std::vector<Tensor<Scalar>> anchors{h1, h2};
  std::vector<Tensor<Scalar>> partners{h2, h1};
  auto h = concat_rows(anchors);
  auto hp = concat_rows(partners);

  // Cosine similarities are <= 1, so shifting by 1/tau keeps exp() bounded.
  auto logits = scalar_mul(matmul(h, transpose(h)), inv_tau);
  auto shifted = add(logits, tape.constant(Matrix<Scalar>::Constant(2 * b, 2 * b, -inv_tau)));
  Matrix<Scalar> off_diag = Matrix<Scalar>::Ones(2 * b, 2 * b);
  off_diag.diagonal().setZero();
  auto denom = row_sum(elementwise_mul(exp(shifted), tape.constant(std::move(off_diag))));
  auto log_denom = add(log(denom), tape.constant(Matrix<Scalar>::Constant(2 * b, 1, inv_tau)));
  auto positive = scalar_mul(row_sum(elementwise_mul(h, hp)), inv_tau);
  return mean(sub(log_denom, positive));
}

/// -mean_i cos(p_i, target_i). Pass a stop_gradient'ed target to cut its branch.
template <typename Scalar>
Tensor<Scalar> negative_cosine(const Tensor<Scalar>& p, const Tensor<Scalar>& target) {
  if (p.rows() != target.rows() || p.cols() != target.cols()) {
    detail::shape_mismatch("negative_cosine", p.value(), target.value());
  }
  auto cos = row_sum(elementwise_mul(row_l2_normalize(p), row_l2_normalize(target)));
  return scalar_mul(mean(cos), Scalar(-1));
}

/// Symmetrized simsiam objective
///   1/2 [ D(pred(proj(z1)), sg(proj(z2))) + D(pred(proj(z2)), sg(proj(z1))) ].
/// `stop_gradient = false` exists only to demonstrate collapse.
template <typename Scalar>
Tensor<Scalar> simsiam_loss(Tape<Scalar>& tape, const Tensor<Scalar>& z1, const Tensor<Scalar>& z2,
                            Mlp<Scalar>& projector, Mlp<Scalar>& predictor, bool stop_gradient = true) {
  auto t1 = head_forward(tape, z1, projector);
  auto t2 = head_forward(tape, z2, projector);
  auto p1 = head_forward(tape, t1, predictor);
  auto p2 = head_forward(tape, t2, predictor);
  auto cut = [&](const Tensor<Scalar>& t) { return stop_gradient ? engage::stop_gradient(t) : t; };
  auto l12 = negative_cosine(p1, cut(t2));
  auto l21 = negative_cosine(p2, cut(t1));
  return scalar_mul(add(l12, l21), Scalar(0.5));
}

}  // namespace engage
