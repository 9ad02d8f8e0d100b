#pragma once

// Two-view construction for contrastive training. Explanation-guided masks
// keep above-threshold structure in both views and split the remainder
// between the views; the random baseline drops edges and node features
// independently per view.

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "engage/graph.hpp"
#include "engage/rng.hpp"

namespace engage {

enum class AugmentMode { Random, Heatmap, Engage };
enum class StatsScope { PerGraph, PerBatch };

struct AugmentConfig {
  AugmentMode mode = AugmentMode::Engage;
  double lambda_e = 0.0;
  double lambda_f = 0.0;
  StatsScope stats_scope = StatsScope::PerBatch;
  double p_edge = 0.8;  // random-mode keep probabilities
  double p_feat = 0.8;

  void validate() const;
};

/// Binary masks for two views. Edge masks align with Graph::edges; feature
/// masks hold one entry per node, broadcast over all feature columns.
struct MaskPair {
  std::vector<std::uint8_t> edge1, edge2;
  std::vector<std::uint8_t> feat1, feat2;
};

inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

/// mean + lambda * population std; +inf for an empty set.
double threshold(std::span<const double> scores, double lambda);
inline double edge_threshold(std::span<const double> phi, double lambda_e) { return threshold(phi, lambda_e); }
inline double feature_threshold(std::span<const double> psi, double lambda_f) { return threshold(psi, lambda_f); }

/// Edges with phi > theta are kept in both views. Otherwise view 1 keeps the
/// edge with probability keep_prob and view 2 takes the complement.
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> make_edge_masks(std::span<const double> phi,
                                                                                std::span<const double> keep_prob,
                                                                                double theta_e, Rng& rng);

/// Node analogue of make_edge_masks; one draw per node.
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> make_feature_masks(std::span<const double> psi,
                                                                                   std::span<const double> psi01,
                                                                                   double theta_f, Rng& rng);

/// Bernoulli keep-probabilities per edge from rescaled node scores.
std::vector<double> edge_keep_probs(std::span<const double> psi01, std::span<const Edge> edges);

/// Independent Bernoulli(p) masks per view.
MaskPair random_masks(const Graph& g, double p_edge, double p_feat, Rng& rng);

/// Masked copies of g: dropped edges removed, masked node rows zeroed.
std::pair<Graph, Graph> apply(const Graph& g, const MaskPair& masks);

}  // namespace engage
