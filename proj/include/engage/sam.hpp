#pragma once

// Smoothed activation maps: unsupervised node importance from final-layer
// embeddings, with channel weights averaged over embedding-space neighbors.

#include <span>
#include <vector>

#include "engage/graph.hpp"
#include "engage/knn.hpp"

namespace engage {

struct SmoothingConfig {
  int m = 5;                  // embedding-space neighbors (self excluded)
  bool include_self = true;   // add the instance's own embedding to the sum
};

struct Explanation {
  Eigen::VectorXd psi;     // per node, >= 0
  Eigen::VectorXd psi01;   // min-max rescaled psi
  Eigen::VectorXd phi;     // per edge, aligned with Graph::edges
  RowVector<double> w_tilde;  // unit-norm channel weights (graph-level)
};

/// Norm(z_n + sum of the m nearest other pooled embeddings). Throws
/// DegenerateExplanation when the summed vector is zero.
RowVector<double> channel_importance_graph(int n, const Matrix<double>& pooled, const KnnIndex& index,
                                           const SmoothingConfig& cfg);

/// Norm(F_i + sum of the m nearest other node embeddings).
RowVector<double> channel_importance_node(int i, const Matrix<double>& z, const KnnIndex& index,
                                          const SmoothingConfig& cfg);

/// psi_i = ReLU(sum_k w_k Z[i, k]).
Eigen::VectorXd node_scores(const Matrix<double>& z, const RowVector<double>& w_tilde);

/// Node-level variant where each node has its own weight row.
Eigen::VectorXd node_scores_per_node(const Matrix<double>& z, const Matrix<double>& w_tilde_rows);

/// phi_ij = (psi_i + psi_j) / 2 over the given edges.
Eigen::VectorXd edge_scores(const Eigen::VectorXd& psi, std::span<const Edge> edges);

/// Min-max rescaling to [0, 1]; constant input maps to 0.5.
Eigen::VectorXd normalize01(const Eigen::VectorXd& psi);

/// Class activation map with supervised class weights.
Eigen::VectorXd cam_scores(const Matrix<double>& z, const RowVector<double>& class_weights);

/// 1 - |{i : psi_i > mu}| / |V|. Empty graphs have sparsity 1.
double sparsity(const Eigen::VectorXd& psi, double mu);

/// Mean of psi over all nodes of all graphs.
double dataset_mean(std::span<const Eigen::VectorXd> psis);

/// Probability that a random positive node outscores a random negative one
/// (ties count 1/2). Returns 0.5 when either class is empty.
double roc_auc(const Eigen::VectorXd& scores, std::span<const int> positive_nodes);

/// psi, psi01 and phi for one graph given its node embeddings and weights.
Explanation explain(const Graph& g, const Matrix<double>& z, const RowVector<double>& w_tilde);

}  // namespace engage
