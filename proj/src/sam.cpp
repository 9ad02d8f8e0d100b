#include "engage/sam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "engage/errors.hpp"

namespace engage {

namespace {

RowVector<double> smooth(int row, const Matrix<double>& points, const KnnIndex& index, const SmoothingConfig& cfg) {
  if (row < 0 || row >= points.rows()) throw ConfigError("channel importance: index out of range");
  if (cfg.m < 0) throw ConfigError("channel importance: m must be >= 0");
  RowVector<double> acc = RowVector<double>::Zero(points.cols());
  if (cfg.include_self) acc += points.row(row);
  if (cfg.m > 0) {
    for (const auto& nb : index.query(points.row(row), cfg.m, row)) acc += points.row(nb.id);
  }
  const double norm = acc.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateExplanation("zero smoothed channel weights");
  return acc / norm;
}

}  // namespace

RowVector<double> channel_importance_graph(int n, const Matrix<double>& pooled, const KnnIndex& index,
                                           const SmoothingConfig& cfg) {
  if (cfg.m >= pooled.rows()) throw ConfigError("channel_importance_graph: m must be < number of graphs");
  return smooth(n, pooled, index, cfg);
}

RowVector<double> channel_importance_node(int i, const Matrix<double>& z, const KnnIndex& index,
                                          const SmoothingConfig& cfg) {
  if (cfg.m >= z.rows()) throw ConfigError("channel_importance_node: m must be < number of nodes");
  return smooth(i, z, index, cfg);
}

Eigen::VectorXd node_scores(const Matrix<double>& z, const RowVector<double>& w_tilde) {
  if (z.cols() != w_tilde.cols()) detail::shape_mismatch("node_scores", z, w_tilde);
  return (z * w_tilde.transpose()).cwiseMax(0.0);
}

Eigen::VectorXd node_scores_per_node(const Matrix<double>& z, const Matrix<double>& w_tilde_rows) {
  if (z.rows() != w_tilde_rows.rows() || z.cols() != w_tilde_rows.cols()) {
    detail::shape_mismatch("node_scores_per_node", z, w_tilde_rows);
  }
  return z.cwiseProduct(w_tilde_rows).rowwise().sum().cwiseMax(0.0);
}

Eigen::VectorXd edge_scores(const Eigen::VectorXd& psi, std::span<const Edge> edges) {
  Eigen::VectorXd phi(static_cast<Eigen::Index>(edges.size()));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edges[k].u >= psi.size() || edges[k].v >= psi.size()) throw ShapeError("edge_scores: edge endpoint out of range");
    phi(static_cast<Eigen::Index>(k)) = 0.5 * (psi(edges[k].u) + psi(edges[k].v));
  }
  return phi;
}

Eigen::VectorXd normalize01(const Eigen::VectorXd& psi) {
  if (psi.size() == 0) return psi;
  const double lo = psi.minCoeff();
  const double hi = psi.maxCoeff();
  if (!(hi > lo)) return Eigen::VectorXd::Constant(psi.size(), 0.5);
  return (psi.array() - lo) / (hi - lo);
}

Eigen::VectorXd cam_scores(const Matrix<double>& z, const RowVector<double>& class_weights) {
  if (z.cols() != class_weights.cols()) detail::shape_mismatch("cam_scores", z, class_weights);
  Eigen::VectorXd out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) s += class_weights(k) * z(i, k);
    out(i) = s > 0.0 ? s : 0.0;
  }
  return out;
}

double sparsity(const Eigen::VectorXd& psi, double mu) {
  if (psi.size() == 0) return 1.0;
  const auto above = (psi.array() > mu).count();
  return 1.0 - static_cast<double>(above) / static_cast<double>(psi.size());
}

double dataset_mean(std::span<const Eigen::VectorXd> psis) {
  double total = 0.0;
  Eigen::Index count = 0;
  for (const auto& p : psis) {
    total += p.sum();
    count += p.size();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double roc_auc(const Eigen::VectorXd& scores, std::span<const int> positive_nodes) {
  std::vector<char> positive(static_cast<std::size_t>(scores.size()), 0);
  for (int v : positive_nodes) {
    if (v < 0 || v >= scores.size()) throw ShapeError("roc_auc: node id out of range");
    positive[static_cast<std::size_t>(v)] = 1;
  }
  // Rank-sum with midranks for ties.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores(a) < scores(b); });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores(order[j]) == scores(order[i])) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[static_cast<std::size_t>(order[k])]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = order.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1) / 2.0) / (np * static_cast<double>(n_neg));
}

Explanation explain(const Graph& g, const Matrix<double>& z, const RowVector<double>& w_tilde) {
  if (z.rows() != g.num_nodes) throw ShapeError("explain: embedding rows != node count");
  Explanation e;
  e.w_tilde = w_tilde;
  e.psi = node_scores(z, w_tilde);
  e.psi01 = normalize01(e.psi);
  e.phi = edge_scores(e.psi, g.edges);
  return e;
}

}  // namespace engage
