#pragma once

// Finite-difference cases for every differentiable op, both losses and the
// encoder forward passes. Each case builds fresh random inputs from a seed
// and reports the worst relative gradient error.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "engage/gnn.hpp"
#include "engage/gradcheck.hpp"
#include "engage/losses.hpp"
#include "support.hpp"

namespace engage::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckReport(std::uint64_t seed, double tolerance)> run;
};

inline constexpr double kFdStep = 1e-6;

/// Central differences over parameter entries, the analogue of fd_check for
/// values held outside the tape.
inline GradCheckReport check_params(const std::vector<Parameter<double>*>& params,
                                    const std::function<Tensor<double>(Tape<double>&)>& f, double h,
                                    double tolerance) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(f(tape));
  }
  std::vector<Matrix<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  auto evaluate = [&] {
    Tape<double> tape;
    return f(tape).value()(0, 0);
  };
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params[i]->value;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        const double saved = v(r, c);
        v(r, c) = saved + h;
        const double up = evaluate();
        v(r, c) = saved - h;
        const double down = evaluate();
        v(r, c) = saved;
        const double numeric = (up - down) / (2 * h);
        const double a = analytic[i](r, c);
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
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

namespace detail_cases {

using Inputs = std::span<const Tensor<double>>;

/// Reduces a matrix-valued op to a scalar with fixed random weights so every
/// output entry contributes a distinct coefficient.
inline TapeFunction<double> weighted(std::function<Tensor<double>(Tape<double>&, Inputs)> op, Matrix<double> r) {
  return [op = std::move(op), r = std::move(r)](Tape<double>& tape, Inputs in) {
    auto y = op(tape, in);
    return sum(elementwise_mul(y, tape.constant(r)));
  };
}

inline GradCase unary(std::string name, int rows, int cols, double lo, double hi,
                      std::function<Tensor<double>(const Tensor<double>&)> op, int out_rows, int out_cols) {
  return {name, [=](std::uint64_t seed, double tol) {
            Rng rng(seed);
            auto x = random_matrix(rows, cols, rng, lo, hi);
            auto f = weighted([op](Tape<double>&, Inputs in) { return op(in[0]); },
                              random_matrix(out_rows, out_cols, rng));
            return fd_check<double>(f, {x}, kFdStep, tol);
          }};
}

inline GradCase binary(std::string name, int r1, int c1, int r2, int c2,
                       std::function<Tensor<double>(const Tensor<double>&, const Tensor<double>&)> op, int out_rows,
                       int out_cols) {
  return {name, [=](std::uint64_t seed, double tol) {
            Rng rng(seed);
            auto a = random_matrix(r1, c1, rng);
            auto b = random_matrix(r2, c2, rng);
            auto f = weighted([op](Tape<double>&, Inputs in) { return op(in[0], in[1]); },
                              random_matrix(out_rows, out_cols, rng));
            return fd_check<double>(f, {a, b}, kFdStep, tol);
          }};
}

/// Values in [-1, 1] with magnitude at least 0.05, keeping relu's kink
/// well away from the difference stencil.
inline Matrix<double> away_from_zero(int rows, int cols, Rng& rng) {
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = rng.uniform(0.05, 1.0);
    m.data()[i] = rng.bernoulli(0.5) ? v : -v;
  }
  return m;
}

/// Head with random biases so no output row can be exactly zero.
inline std::shared_ptr<Mlp<double>> random_head(const std::string& name, int in, const std::vector<int>& sizes,
                                                Rng& rng) {
  auto mlp = std::make_shared<Mlp<double>>(name, in, sizes, rng);
  for (auto& l : mlp->layers) l.bias.value = random_matrix(1, l.bias.value.cols(), rng, 0.1, 0.5);
  return mlp;
}

inline Graph case_graph(Rng& rng, int dim) {
  const int n = 5 + static_cast<int>(rng.below(4));
  return random_graph(n, 0.4, dim, rng);
}

}  // namespace detail_cases

inline std::vector<GradCase> gradient_cases() {
  using namespace detail_cases;
  using T = Tensor<double>;
  std::vector<GradCase> cases;

  cases.push_back(binary("matmul", 3, 4, 4, 2, [](const T& a, const T& b) { return matmul(a, b); }, 3, 2));
  cases.push_back(unary("transpose", 3, 4, -1, 1, [](const T& a) { return transpose(a); }, 4, 3));
  cases.push_back(binary("add", 3, 4, 3, 4, [](const T& a, const T& b) { return add(a, b); }, 3, 4));
  cases.push_back(binary("add_row_broadcast", 3, 4, 1, 4, [](const T& a, const T& b) { return add(a, b); }, 3, 4));
  cases.push_back(binary("sub", 3, 4, 3, 4, [](const T& a, const T& b) { return sub(a, b); }, 3, 4));
  cases.push_back(
      binary("elementwise_mul", 3, 4, 3, 4, [](const T& a, const T& b) { return elementwise_mul(a, b); }, 3, 4));
  cases.push_back(unary("scalar_mul", 3, 4, -1, 1, [](const T& a) { return scalar_mul(a, -1.7); }, 3, 4));
  cases.push_back(binary("scale", 3, 4, 1, 1, [](const T& a, const T& s) { return scale(a, s); }, 3, 4));
  cases.push_back({"relu", [](std::uint64_t seed, double tol) {
                     Rng rng(seed);
                     auto x = away_from_zero(4, 5, rng);
                     auto f = weighted([](Tape<double>&, Inputs in) { return relu(in[0]); }, random_matrix(4, 5, rng));
                     return fd_check<double>(f, {x}, kFdStep, tol);
                   }});
  cases.push_back(unary("exp", 3, 4, -2, 2, [](const T& a) { return exp(a); }, 3, 4));
  cases.push_back(unary("log", 3, 4, 0.2, 3, [](const T& a) { return log(a); }, 3, 4));
  cases.push_back(unary("sum", 3, 4, -1, 1, [](const T& a) { return sum(a); }, 1, 1));
  cases.push_back(unary("mean", 3, 4, -1, 1, [](const T& a) { return mean(a); }, 1, 1));
  cases.push_back(unary("row_sum", 3, 4, -1, 1, [](const T& a) { return row_sum(a); }, 3, 1));
  cases.push_back(unary("row_mean", 3, 4, -1, 1, [](const T& a) { return row_mean(a); }, 3, 1));
  cases.push_back(unary("mean_rows", 3, 4, -1, 1, [](const T& a) { return mean_rows(a); }, 1, 4));
  cases.push_back(unary("row_l2_normalize", 4, 3, -1, 1, [](const T& a) { return row_l2_normalize(a); }, 4, 3));
  cases.push_back(binary("concat_rows", 2, 3, 3, 3,
                         [](const T& a, const T& b) { return concat_rows(std::vector<T>{a, b, a}); }, 7, 3));
  cases.push_back(unary("gather_rows", 4, 3, -1, 1,
                        [](const T& a) { return gather_rows(a, std::vector<Eigen::Index>{2, 0, 2, 3}); }, 4, 3));
  cases.push_back({"neighbor_sum", [](std::uint64_t seed, double tol) {
                     Rng rng(seed);
                     const auto g = case_graph(rng, 3);
                     const auto nbrs = neighbor_lists(g);
                     auto f = weighted([nbrs](Tape<double>&, Inputs in) { return neighbor_sum(in[0], nbrs); },
                                       random_matrix(g.num_nodes, 3, rng));
                     return fd_check<double>(f, {g.features}, kFdStep, tol);
                   }});

  cases.push_back({"nt_xent", [](std::uint64_t seed, double tol) {
                     Rng rng(seed);
                     const int b = 2 + static_cast<int>(rng.below(4));
                     auto z1 = random_matrix(b, 5, rng);
                     auto z2 = random_matrix(b, 5, rng);
                     TapeFunction<double> f = [](Tape<double>&, Inputs in) { return nt_xent(in[0], in[1], 0.5); };
                     return fd_check<double>(f, {z1, z2}, kFdStep, tol);
                   }});

  // With the stop-gradient removed the loss is an ordinary composite, so the
  // full gradient must match finite differences.
  cases.push_back({"simsiam_loss", [](std::uint64_t seed, double tol) {
                     Rng rng(seed);
                     auto proj = random_head("proj", 4, {8, 4}, rng);
                     auto pred = random_head("pred", 4, {8, 4}, rng);
                     auto z1 = random_matrix(3, 4, rng);
                     auto z2 = random_matrix(3, 4, rng);
                     TapeFunction<double> f = [proj, pred](Tape<double>& tape, Inputs in) {
                       return simsiam_loss(tape, in[0], in[1], *proj, *pred, false);
                     };
                     return fd_check<double>(f, {z1, z2}, kFdStep, tol);
                   }});

  // With the stop-gradient, d/dz1 must equal the derivative of
  // 0.5 * D(pred(proj(z1)), proj(z2)) with the target frozen.
  cases.push_back({"simsiam_loss_stop_gradient", [](std::uint64_t seed, double tol) {
                     Rng rng(seed);
                     auto proj = random_head("proj", 4, {8, 4}, rng);
                     auto pred = random_head("pred", 4, {8, 4}, rng);
                     const auto z1 = random_matrix(3, 4, rng);
                     const auto z2 = random_matrix(3, 4, rng);
                     Matrix<double> analytic;
                     {
                       Tape<double> tape;
                       auto v1 = tape.variable(z1);
                       tape.backward(simsiam_loss(tape, v1, tape.constant(z2), *proj, *pred, true));
                       analytic = v1.grad();
                     }
                     Matrix<double> target;
                     {
                       Tape<double> tape;
                       target = head_forward(tape, tape.constant(z2), *proj).value();
                     }
                     auto frozen = [&](const Matrix<double>& x) {
                       Tape<double> tape;
                       auto p = head_forward(tape, head_forward(tape, tape.constant(x), *proj), *pred);
                       return 0.5 * negative_cosine(p, tape.constant(target)).value()(0, 0);
                     };
                     GradCheckReport report;
                     Matrix<double> x = z1;
                     for (Eigen::Index i = 0; i < x.size(); ++i) {
                       const double saved = x.data()[i];
                       x.data()[i] = saved + kFdStep;
                       const double up = frozen(x);
                       x.data()[i] = saved - kFdStep;
                       const double down = frozen(x);
                       x.data()[i] = saved;
                       const double numeric = (up - down) / (2 * kFdStep);
                       const double a = analytic.data()[i];
                       const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
                       if (err >= report.max_rel_error) {
                         report.max_rel_error = err;
                         report.worst_analytic = a;
                         report.worst_numeric = numeric;
                       }
                     }
                     report.passed = report.max_rel_error <= tol;
                     return report;
                   }});

  // Two GCN layers with the weights as tape inputs, mean pooled.
  cases.push_back({"gcn_forward", [](std::uint64_t seed, double tol) {
                     Rng rng(seed);
                     const auto g = case_graph(rng, 3);
                     const Matrix<double> a_hat = normalized_adjacency(g);
                     auto w1 = random_matrix(3, 4, rng);
                     auto w2 = random_matrix(4, 4, rng);
                     auto f = weighted(
                         [a_hat](Tape<double>& tape, Inputs in) {
                           auto a = tape.constant(a_hat);
                           auto h = gcn_forward(in[0], a, in[1], true);
                           return mean_rows(gcn_forward(h, a, in[2], false));
                         },
                         random_matrix(1, 4, rng));
                     return fd_check<double>(f, {g.features, w1, w2}, kFdStep, tol);
                   }});

  // Two GIN layers with the epsilons as inputs; MLP weights are covered by
  // the encoder parameter cases below.
  cases.push_back({"gin_forward", [](std::uint64_t seed, double tol) {
                     Rng rng(seed);
                     const auto g = case_graph(rng, 3);
                     const auto nbrs = neighbor_lists(g);
                     auto mlp1 = std::make_shared<Mlp<double>>("gin0", 3, std::vector<int>{4, 4}, rng);
                     auto mlp2 = std::make_shared<Mlp<double>>("gin1", 4, std::vector<int>{4, 4}, rng);
                     Matrix<double> eps1 = Matrix<double>::Constant(1, 1, rng.uniform(-0.5, 0.5));
                     Matrix<double> eps2 = Matrix<double>::Constant(1, 1, rng.uniform(-0.5, 0.5));
                     auto f = weighted(
                         [=](Tape<double>& tape, Inputs in) {
                           auto h = gin_forward(tape, in[0], nbrs, in[1], *mlp1, true);
                           return mean_rows(gin_forward(tape, h, nbrs, in[2], *mlp2, false));
                         },
                         random_matrix(1, 4, rng));
                     return fd_check<double>(f, {g.features, eps1, eps2}, kFdStep, tol);
                   }});

  for (auto kind : {EncoderKind::GCN, EncoderKind::GIN}) {
    const std::string name = kind == EncoderKind::GCN ? "gcn_encoder_params" : "gin_encoder_params";
    cases.push_back({name, [kind](std::uint64_t seed, double tol) {
                       Rng rng(seed);
                       const auto g = case_graph(rng, 3);
                       EncoderConfig cfg{kind, 2, 4, 0.1, true};
                       Encoder<double> enc(cfg, 3, rng);
                       // Zero biases put ReLU inputs exactly on the kink for
                       // nodes whose hidden row is all zero.
                       for (auto* p : enc.params())
                         if (p->name.ends_with(".bias")) p->value = random_matrix(1, p->value.cols(), rng, -0.5, 0.5);
                       const auto input = GraphInput<double>::from(g, kind);
                       const auto r = random_matrix(1, 4, rng);
                       return check_params(
                           enc.params(),
                           [&](Tape<double>& tape) {
                             auto z = enc.encode(tape, input).pooled;
                             return sum(elementwise_mul(z, tape.constant(r)));
                           },
                           kFdStep, tol);
                     }});
  }
  return cases;
}

}  // namespace engage::testing
