#pragma once

// Dense 2-D tensors with tape-based reverse-mode differentiation.
//
// A Tape owns every value produced during one forward pass. Tensors are
// lightweight handles (tape pointer + node id). Persistent trainable state
// lives in Parameter objects outside the tape; binding a Parameter to a tape
// creates a leaf whose gradient is added to Parameter::grad on backward().

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "engage/errors.hpp"

namespace engage {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
class Tensor {
 public:
  using Mat = Matrix<Scalar>;

  Tensor() = default;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  const Mat& value() const { return tape_->value(id_); }
  /// Accumulated gradient; empty (0x0) until backward() reached this node.
  const Mat& grad() const { return tape_->grad(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<Scalar>;
  Tensor(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << '(' << r << 'x' << c << ')';
  return os.str();
}

template <typename A, typename B>
[[noreturn]] void shape_mismatch(const char* op, const A& a, const B& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.rows(), a.cols()) +
                   " and " + shape_str(b.rows(), b.cols()));
}

}  // namespace detail

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using TensorT = Tensor<Scalar>;
  /// Propagates the node's gradient into its inputs. Receives the tape and
  /// the node id of the output.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  TensorT constant(Mat value) { return push(std::move(value), false, nullptr, nullptr, false); }

  /// Leaf whose gradient accumulates across repeated backward() calls.
  TensorT variable(Mat value) { return push(std::move(value), true, nullptr, nullptr, true); }

  TensorT parameter(Parameter<Scalar>& p) { return push(p.value, true, nullptr, &p, false); }

  /// Records an operation output. The node requires gradients iff any input
  /// does; otherwise `backward` is dropped.
  TensorT record(Mat value, std::initializer_list<TensorT> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& t : inputs) {
      check_same_tape(t);
      needs = needs || requires_grad(t.id());
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr, nullptr, false);
  }

  TensorT record(Mat value, std::span<const TensorT> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& t : inputs) {
      check_same_tape(t);
      needs = needs || requires_grad(t.id());
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr, nullptr, false);
  }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` to the gradient of node `id` if that node requires one.
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a 1x1 loss. Parameter gradients are added to their
  /// Parameter::grad, so repeated calls accumulate until zeroed.
  void backward(const TensorT& loss) {
    check_same_tape(loss);
    const Mat& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("backward: loss must be 1x1, got " + detail::shape_str(lv.rows(), lv.cols()));
    }
    for (auto& n : nodes_) {
      if (!n.persistent_grad) n.grad.resize(0, 0);
    }
    if (!requires_grad(loss.id())) return;
    accumulate(loss.id(), Mat::Ones(1, 1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.sink != nullptr) {
        if (n.sink->grad.rows() != n.grad.rows() || n.sink->grad.cols() != n.grad.cols()) {
          n.sink->grad.setZero(n.grad.rows(), n.grad.cols());
        }
        n.sink->grad += n.grad;
      }
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool persistent_grad = false;
    BackwardFn backward;
    Parameter<Scalar>* sink = nullptr;
  };

  TensorT push(Mat value, bool needs_grad, BackwardFn fn, Parameter<Scalar>* sink, bool persistent) {
    // Variables start from a zero gradient so grad() is well shaped even when
    // no path reaches them.
    Mat grad = persistent ? Mat::Zero(value.rows(), value.cols()) : Mat();
    nodes_.push_back(Node{std::move(value), std::move(grad), needs_grad, persistent, std::move(fn), sink});
    return TensorT(this, nodes_.size() - 1);
  }

  void check_same_tape(const TensorT& t) const {
    if (t.tape() != this) throw std::logic_error("tensor belongs to a different tape");
  }

  std::deque<Node> nodes_;  // stable references while the tape grows
};

// ---------------------------------------------------------------------------
// Operations. Each records onto the tape of its first argument.

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) detail::shape_mismatch("matmul", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  const std::size_t ia = a.id();
  Matrix<Scalar> v = a.value().transpose();
  return a.tape()->record(std::move(v), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

/// a + b. `b` may be a 1 x cols row that is broadcast over the rows of `a`.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const std::size_t ia = a.id(), ib = b.id();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
      t.accumulate(ia, t.grad(self));
      t.accumulate(ib, t.grad(self));
    });
  }
  if (b.rows() == 1 && a.cols() == b.cols()) {
    Matrix<Scalar> v = a.value().rowwise() + b.value().row(0);
    return a.tape()->record(std::move(v), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
      t.accumulate(ia, t.grad(self));
      if (t.requires_grad(ib)) t.accumulate(ib, t.grad(self).colwise().sum());
    });
  }
  detail::shape_mismatch("add", a.value(), b.value());
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_mismatch("sub", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    if (t.requires_grad(ib)) t.accumulate(ib, -t.grad(self));
  });
}

template <typename Scalar>
Tensor<Scalar> elementwise_mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    detail::shape_mismatch("elementwise_mul", a.value(), b.value());
  }
  const std::size_t ia = a.id(), ib = b.id();
  Matrix<Scalar> v = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(v), {a, b}, [ia, ib](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

template <typename Scalar>
Tensor<Scalar> scalar_mul(const Tensor<Scalar>& a, Scalar c) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value() * c, {a}, [ia, c](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self) * c);
  });
}

/// s * a where s is a 1x1 tensor (e.g. a learnable coefficient).
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, const Tensor<Scalar>& s) {
  if (s.rows() != 1 || s.cols() != 1) detail::shape_mismatch("scale", a.value(), s.value());
  const std::size_t ia = a.id(), is = s.id();
  return a.tape()->record(a.value() * s.value()(0, 0), {a, s}, [ia, is](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(is)(0, 0));
    if (t.requires_grad(is)) {
      t.accumulate(is, Matrix<Scalar>::Constant(1, 1, g.cwiseProduct(t.value(ia)).sum()));
    }
  });
}

/// Subgradient 0 at exactly 0.
template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  const std::size_t ia = a.id();
  Matrix<Scalar> v = a.value().cwiseMax(Scalar(0));
  return a.tape()->record(std::move(v), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    const auto& x = t.value(ia);
    t.accumulate(ia, t.grad(self).cwiseProduct((x.array() > Scalar(0)).template cast<Scalar>().matrix()));
  });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  const std::size_t ia = a.id();
  Matrix<Scalar> v = a.value().array().exp().matrix();
  return a.tape()->record(std::move(v), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

/// Natural log; every entry must be strictly positive.
template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  if ((a.value().array() <= Scalar(0)).any()) throw NumericalError("log: non-positive input");
  const std::size_t ia = a.id();
  Matrix<Scalar> v = a.value().array().log().matrix();
  return a.tape()->record(std::move(v), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
}

/// Sum of all entries, 1x1.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  const std::size_t ia = a.id();
  return a.tape()->record(Matrix<Scalar>::Constant(1, 1, a.value().sum()), {a},
                          [ia](Tape<Scalar>& t, std::size_t self) {
                            const auto& x = t.value(ia);
                            t.accumulate(ia, Matrix<Scalar>::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
                          });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty tensor");
  return scalar_mul(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// Per-row sum, rows x 1.
template <typename Scalar>
Tensor<Scalar> row_sum(const Tensor<Scalar>& a) {
  const std::size_t ia = a.id();
  Matrix<Scalar> v = a.value().rowwise().sum();
  return a.tape()->record(std::move(v), {a}, [ia](Tape<Scalar>& t, std::size_t self) {
    const Eigen::Index cols = t.value(ia).cols();
    t.accumulate(ia, t.grad(self).replicate(1, cols));
  });
}

template <typename Scalar>
Tensor<Scalar> row_mean(const Tensor<Scalar>& a) {
  if (a.cols() == 0) throw ShapeError("row_mean: zero columns");
  return scalar_mul(row_sum(a), Scalar(1) / static_cast<Scalar>(a.cols()));
}

/// Mean over rows, 1 x cols (average pooling of node embeddings).
template <typename Scalar>
Tensor<Scalar> mean_rows(const Tensor<Scalar>& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: zero rows");
  const std::size_t ia = a.id();
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.rows());
  Matrix<Scalar> v = a.value().colwise().sum() * inv;
  return a.tape()->record(std::move(v), {a}, [ia, inv](Tape<Scalar>& t, std::size_t self) {
    const Eigen::Index rows = t.value(ia).rows();
    t.accumulate(ia, (t.grad(self) * inv).replicate(rows, 1));
  });
}

/// Divides each row by its L2 norm. A zero row raises NumericalError.
template <typename Scalar>
Tensor<Scalar> row_l2_normalize(const Tensor<Scalar>& a) {
  const std::size_t ia = a.id();
  const auto& x = a.value();
  Matrix<Scalar> norms = x.rowwise().norm();
  if ((norms.array() <= Scalar(0)).any()) throw NumericalError("row_l2_normalize: zero-norm row");
  Matrix<Scalar> v = x.array().colwise() / norms.col(0).array();
  return a.tape()->record(std::move(v), {a}, [ia, norms](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    Matrix<Scalar> dots = g.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> gx = g - (y.array().colwise() * dots.col(0).array()).matrix();
    gx.array().colwise() /= norms.col(0).array();
    t.accumulate(ia, gx);
  });
}

template <typename Scalar>
Tensor<Scalar> concat_rows(std::span<const Tensor<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> offsets;
  ids.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.cols() != cols) detail::shape_mismatch("concat_rows", parts.front().value(), p.value());
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix<Scalar> v(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) v.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  return parts.front().tape()->record(
      std::move(v), parts, [ids = std::move(ids), offsets = std::move(offsets)](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!t.requires_grad(ids[i])) continue;
          t.accumulate(ids[i], g.middleRows(offsets[i], t.value(ids[i]).rows()));
        }
      });
}

template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  return concat_rows(std::span<const Tensor<Scalar>>(parts));
}

/// Rows of `a` at the given positions, in order (repeats allowed).
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& a, std::vector<Eigen::Index> rows) {
  for (auto r : rows) {
    if (r < 0 || r >= a.rows()) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range");
  }
  Matrix<Scalar> v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(v), {a}, [ia, rows = std::move(rows)](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    Matrix<Scalar> gx = Matrix<Scalar>::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(ia, gx);
  });
}

/// Forward identity (bitwise copy); contributes no gradient to `a`.
template <typename Scalar>
Tensor<Scalar> stop_gradient(const Tensor<Scalar>& a) {
  return a.tape()->constant(a.value());
}

}  // namespace engage
