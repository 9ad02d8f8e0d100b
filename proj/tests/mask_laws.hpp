#pragma once

// One randomized (graph, psi, lambda) instance checked against the
// protection, complementarity and monotonicity laws of the view masks.

#include <algorithm>
#include <string>

#include "engage/augment.hpp"
#include "engage/sam.hpp"
#include "support.hpp"

namespace engage::testing {

inline std::vector<std::uint8_t> protected_set(std::span<const double> s, double theta) {
  std::vector<std::uint8_t> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = s[k] > theta;
  return out;
}

inline bool has_edge(const Graph& g, const Edge& e) {
  return std::binary_search(g.edges.begin(), g.edges.end(), e);
}

/// Returns an empty string when every law holds, else a description.
inline std::string check_mask_laws(Rng& rng) {
  const int n = 2 + static_cast<int>(rng.below(29));
  auto g = random_graph(n, rng.uniform(0.05, 0.6), 1 + static_cast<int>(rng.below(3)), rng);
  Eigen::VectorXd psi(n);
  for (int i = 0; i < n; ++i) psi(i) = rng.bernoulli(0.2) ? 0.0 : rng.uniform(0.0, 3.0);
  const Eigen::VectorXd psi01 = normalize01(psi);
  const Eigen::VectorXd phi = edge_scores(psi, g.edges);
  const double le = rng.uniform(-3.0, 3.0), lf = rng.uniform(-3.0, 3.0);
  const std::span<const double> phis(phi.data(), static_cast<std::size_t>(phi.size()));
  const std::span<const double> psis(psi.data(), static_cast<std::size_t>(psi.size()));
  const std::span<const double> p01(psi01.data(), static_cast<std::size_t>(psi01.size()));
  const double te = edge_threshold(phis, le), tf = feature_threshold(psis, lf);
  const auto probs = edge_keep_probs(p01, g.edges);

  const std::uint64_t draw_seed = rng();
  Rng draw(draw_seed);
  MaskPair m;
  std::tie(m.edge1, m.edge2) = make_edge_masks(phis, probs, te, draw);
  std::tie(m.feat1, m.feat2) = make_feature_masks(psis, p01, tf, draw);
  const auto [g1, g2] = apply(g, m);

  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const bool in1 = has_edge(g1, g.edges[k]), in2 = has_edge(g2, g.edges[k]);
    if (phi(static_cast<Eigen::Index>(k)) > te) {
      if (!in1 || !in2) return "protected edge missing from a view";
    } else if (in1 == in2) {
      return "below-threshold edge not split between views";
    }
  }
  for (const auto* v : {&g1, &g2})
    for (const auto& e : v->edges)
      if (!has_edge(g, e)) return "view contains an edge not in the graph";
  for (int i = 0; i < n; ++i) {
    const bool kept1 = g1.features.row(i) == g.features.row(i);
    const bool zero1 = g1.features.row(i).isZero(0.0);
    const bool kept2 = g2.features.row(i) == g.features.row(i);
    const bool zero2 = g2.features.row(i).isZero(0.0);
    if (psi(i) > tf) {
      if (!kept1 || !kept2) return "protected node features altered";
    } else {
      const auto f1 = m.feat1[static_cast<std::size_t>(i)], f2 = m.feat2[static_cast<std::size_t>(i)];
      if (f1 + f2 != 1) return "below-threshold node masks not complementary";
      if ((f1 ? !kept1 : !zero1) || (f2 ? !kept2 : !zero2)) return "feature mask not applied";
    }
  }

  // Raising lambda never grows the protected sets.
  const double le2 = le + rng.uniform(0.0, 2.0), lf2 = lf + rng.uniform(0.0, 2.0);
  Rng draw2(draw_seed);
  const auto e_hi = make_edge_masks(phis, probs, edge_threshold(phis, le2), draw2);
  const auto f_hi = make_feature_masks(psis, p01, feature_threshold(psis, lf2), draw2);
  const auto pe = protected_set(phis, te), pf = protected_set(psis, tf);
  for (std::size_t k = 0; k < pe.size(); ++k) {
    const bool hi = e_hi.first[k] && e_hi.second[k];
    if (hi && !pe[k]) return "protected edge set grew with lambda_e";
  }
  for (std::size_t i = 0; i < pf.size(); ++i) {
    const bool hi = f_hi.first[i] && f_hi.second[i];
    if (hi && !pf[i]) return "protected node set grew with lambda_f";
  }
  return {};
}

}  // namespace engage::testing
