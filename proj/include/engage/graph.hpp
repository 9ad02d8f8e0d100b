#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "engage/tensor.hpp"

namespace engage {

using Features = Matrix<double>;

/// Undirected edge stored with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Graph {
  int num_nodes = 0;
  std::vector<Edge> edges;  // canonical: u < v, sorted, unique, no self-loops
  Features features;        // num_nodes x D
  std::optional<int> label;

  int feature_dim() const { return static_cast<int>(features.cols()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  /// Throws ConfigError if any structural invariant is violated.
  void validate() const;
};

/// Builds a Graph from arbitrary (possibly directed, duplicated) pairs. Self
/// pairs are dropped; endpoints must be in range.
Graph make_graph(int num_nodes, const std::vector<std::pair<int, int>>& pairs, Features features,
                 std::optional<int> label = std::nullopt);

enum class Task { GraphLevel, NodeLevel };

struct Dataset {
  std::string name;
  Task task = Task::GraphLevel;
  std::vector<Graph> graphs;
  int num_classes = 0;
  /// Node-level tasks: one label per node of graphs[0].
  std::vector<int> node_labels;
  /// Synthetic datasets: ids of the planted motif nodes in each graph.
  std::vector<std::vector<int>> motif_nodes;

  int feature_dim() const { return graphs.empty() ? 0 : graphs.front().feature_dim(); }
  std::vector<int> graph_labels() const;
};

struct TuParseOptions {
  int degree_cap = 50;
};

/// Reads the TUDataset text layout `{root}/{name}_*.txt`.
Dataset parse_tudataset(const std::filesystem::path& root, const std::string& name, const TuParseOptions& opts = {});

/// Writes `dataset` in TUDataset layout; features go to `_node_attributes.txt`.
void write_tudataset(const Dataset& dataset, const std::filesystem::path& root, const std::string& name);

/// Reads `edges.txt`, `features.txt` and `labels.txt` from `root`.
Dataset parse_node_dataset(const std::filesystem::path& root);

enum class MotifKind { Cycle5 = 0, Clique5 = 1 };

struct MotifSpec {
  int num_graphs = 100;
  int background_nodes = 20;
  double background_edge_prob = 0.1;
  int bridge_edges = 1;
  int degree_cap = 50;

  void validate() const;
};

Dataset generate_motif_dataset(const MotifSpec& spec, std::uint64_t seed);

/// Edges of the 5-node motif over local ids 0..4.
std::vector<Edge> motif_edges(MotifKind kind);

/// One-hot degree features, D = min(max degree over graphs, cap) + 1.
/// Degrees above the cap share the last column.
void assign_degree_features(std::vector<Graph>& graphs, int degree_cap);

/// D^-1/2 (A + I) D^-1/2 as a dense matrix.
Matrix<double> normalized_adjacency(const Graph& g);

/// Dense symmetric 0/1 adjacency without self-loops.
Matrix<double> adjacency(const Graph& g);

std::vector<std::vector<int>> neighbor_lists(const Graph& g);

}  // namespace engage
