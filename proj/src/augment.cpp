#include "engage/augment.hpp"

#include <cmath>
#include <string>

#include "engage/errors.hpp"

namespace engage {

void AugmentConfig::validate() const {
  auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in01(p_edge) || !in01(p_feat)) throw ConfigError("AugmentConfig: keep probabilities must lie in [0, 1]");
  if (!std::isfinite(lambda_e) || !std::isfinite(lambda_f)) throw ConfigError("AugmentConfig: lambdas must be finite");
}

double threshold(std::span<const double> scores, double lambda) {
  if (scores.empty()) return kNoThreshold;
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  return mean + lambda * std::sqrt(var);
}

namespace {

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> split_masks(std::span<const double> score,
                                                                            std::span<const double> prob,
                                                                            double theta, Rng& rng,
                                                                            const char* what) {
  if (score.size() != prob.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(score.size()) + " scores but " +
                     std::to_string(prob.size()) + " probabilities");
  }
  std::vector<std::uint8_t> m1(score.size()), m2(score.size());
  for (std::size_t k = 0; k < score.size(); ++k) {
    if (score[k] > theta) {
      m1[k] = m2[k] = 1;
    } else {
      m1[k] = rng.bernoulli(prob[k]) ? 1 : 0;
      m2[k] = static_cast<std::uint8_t>(1 - m1[k]);
    }
  }
  return {std::move(m1), std::move(m2)};
}

}  // namespace

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> make_edge_masks(std::span<const double> phi,
                                                                                std::span<const double> keep_prob,
                                                                                double theta_e, Rng& rng) {
  return split_masks(phi, keep_prob, theta_e, rng, "make_edge_masks");
}

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> make_feature_masks(std::span<const double> psi,
                                                                                   std::span<const double> psi01,
                                                                                   double theta_f, Rng& rng) {
  return split_masks(psi, psi01, theta_f, rng, "make_feature_masks");
}

std::vector<double> edge_keep_probs(std::span<const double> psi01, std::span<const Edge> edges) {
  std::vector<double> out;
  out.reserve(edges.size());
  for (const auto& e : edges) {
    out.push_back(0.5 * (psi01[static_cast<std::size_t>(e.u)] + psi01[static_cast<std::size_t>(e.v)]));
  }
  return out;
}

MaskPair random_masks(const Graph& g, double p_edge, double p_feat, Rng& rng) {
  MaskPair m;
  auto draw = [&rng](std::size_t n, double p) {
    std::vector<std::uint8_t> v(n);
    for (auto& x : v) x = rng.bernoulli(p) ? 1 : 0;
    return v;
  };
  const auto ne = g.edges.size();
  const auto nn = static_cast<std::size_t>(g.num_nodes);
  m.edge1 = draw(ne, p_edge);
  m.edge2 = draw(ne, p_edge);
  m.feat1 = draw(nn, p_feat);
  m.feat2 = draw(nn, p_feat);
  return m;
}

namespace {

Graph masked(const Graph& g, const std::vector<std::uint8_t>& edge_mask, const std::vector<std::uint8_t>& feat_mask) {
  Graph out;
  out.num_nodes = g.num_nodes;
  out.label = g.label;
  for (std::size_t k = 0; k < g.edges.size(); ++k)
    if (edge_mask[k]) out.edges.push_back(g.edges[k]);
  out.features = g.features;
  for (int i = 0; i < g.num_nodes; ++i)
    if (!feat_mask[static_cast<std::size_t>(i)]) out.features.row(i).setZero();
  return out;
}

}  // namespace

std::pair<Graph, Graph> apply(const Graph& g, const MaskPair& masks) {
  const auto ne = g.edges.size();
  const auto nn = static_cast<std::size_t>(g.num_nodes);
  if (masks.edge1.size() != ne || masks.edge2.size() != ne || masks.feat1.size() != nn || masks.feat2.size() != nn) {
    throw ShapeError("apply: mask arity does not match graph (" + std::to_string(nn) + " nodes, " +
                     std::to_string(ne) + " edges)");
  }
  return {masked(g, masks.edge1, masks.feat1), masked(g, masks.edge2, masks.feat2)};
}

}  // namespace engage
