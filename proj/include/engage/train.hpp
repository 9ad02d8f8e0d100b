#pragma once

// Contrastive pre-training with once-per-epoch explanation refresh.

#include <cstdint>
#include <string>
#include <vector>

#include "engage/augment.hpp"
#include "engage/gnn.hpp"
#include "engage/graph.hpp"
#include "engage/sam.hpp"

namespace engage {

enum class Framework { SimCLR, SimSiam };
enum class OptimizerKind { Adam, Sgd };
enum class Precision { F64, F32 };
enum class IndexKind { Exact, Quantized };

struct TrainConfig {
  Framework framework = Framework::SimCLR;
  double tau = 0.5;
  int m = 5;
  bool include_self = true;
  AugmentConfig augment;
  int epochs = 50;
  int batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 0.001;
  int warmup_epochs = 1;
  std::uint64_t seed = 1;
  EncoderConfig encoder;
  /// Empty head sizes select {K, K} for the projector and {K/2, K} for the
  /// predictor.
  HeadConfig heads;
  /// Debug switch: false removes the simsiam stop-gradient.
  bool stop_gradient = true;
  IndexKind index = IndexKind::Exact;
  int index_lists = 0;  // 0 selects round(sqrt(N))
  int index_probe = 4;
  int kmeans_iters = 10;
  Precision precision = Precision::F64;
  int threads = 1;
  /// Node-level: at most this many nodes enter each contrastive loss.
  int node_sample = 512;

  void validate() const;
  /// Graph-level defaults: GIN, L = 3, K = 64, lr 0.001.
  static TrainConfig graph_defaults();
  /// Node-level defaults: GCN, L = 2, K = 128, lr 0.005, per-graph stats.
  static TrainConfig node_defaults();
};

/// Embeddings of every graph under one parameter snapshot.
struct Snapshot {
  std::vector<Matrix<double>> nodes;  // per graph, n_g x K
  Matrix<double> pooled;              // N x K
  Matrix<double> projected;           // N x P, projector output (graph-level)
};

struct DatasetExplanations {
  std::vector<Explanation> graphs;
  std::vector<bool> degenerate;  // smoothed weights or heat-map all zero
  double mu_psi = 0.0;
  double mean_sparsity = 0.0;
};

/// SAM over all graphs of a graph-level snapshot.
DatasetExplanations explain_graphs(const Dataset& ds, const Snapshot& snap, const SmoothingConfig& smoothing,
                                   const TrainConfig& cfg);

/// SAM for the single graph of a node-level snapshot (per-node smoothing).
DatasetExplanations explain_nodes(const Dataset& ds, const Snapshot& snap, const SmoothingConfig& smoothing,
                                  const TrainConfig& cfg);

struct RunRecord {
  std::vector<double> loss;            // mean step loss per epoch
  std::vector<double> sparsity;        // mean S_n at each epoch's refresh
  std::vector<double> projection_std;  // spread of normalized projector outputs
  std::vector<double> embedding_std;   // spread of normalized pooled embeddings
  int skipped_steps = 0;               // steps dropped on zero-norm views
  double edge_keep_rate = 0.0;         // kept fraction of edge draws, both views, all epochs
  double feat_keep_rate = 0.0;         // same for node feature rows
  Matrix<double> embeddings;           // final: per graph (graph-level) or per node
  DatasetExplanations explanations;    // computed with the trained encoder
  std::vector<std::string> param_names;
  std::vector<Matrix<double>> param_values;
};

RunRecord train_graph_level(const Dataset& ds, const TrainConfig& cfg);
RunRecord train_node_level(const Dataset& ds, const TrainConfig& cfg);

/// Dispatches on the dataset task.
RunRecord train(const Dataset& ds, const TrainConfig& cfg);

/// Mean over columns of the per-column std of row-normalized embeddings.
double normalized_spread(const Matrix<double>& x);

/// Smoothing actually used by an augmentation mode: heatmap disables
/// neighbor smoothing.
SmoothingConfig smoothing_for(const TrainConfig& cfg);

}  // namespace engage
