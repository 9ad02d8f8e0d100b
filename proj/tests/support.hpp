#pragma once

// Fixtures and brute-force oracles shared by the unit tests and the
// acceptance binary. Nothing here calls into the code under test except
// for constructing inputs (make_graph).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "engage/graph.hpp"
#include "engage/rng.hpp"
#include "engage/tensor.hpp"

namespace engage::testing {

inline Matrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Erdos-Renyi graph with uniform random features.
inline Graph random_graph(int n, double p, int dim, Rng& rng) {
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) pairs.emplace_back(u, v);
  return make_graph(n, pairs, random_matrix(n, dim, rng, 0.0, 1.0));
}

inline Graph path_graph(int n, int dim = 1) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
  return make_graph(n, pairs, Matrix<double>::Ones(n, dim));
}

/// Dense normalized adjacency written out entry by entry.
inline Matrix<double> naive_normalized_adjacency(const Graph& g) {
  const int n = g.num_nodes;
  Matrix<double> a = Matrix<double>::Identity(n, n);
  for (const auto& e : g.edges) a(e.u, e.v) = a(e.v, e.u) = 1.0;
  std::vector<double> deg(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) deg[i] += a(i, j);
  Matrix<double> out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = a(i, j) / std::sqrt(deg[i] * deg[j]);
  return out;
}

/// k nearest rows of `points` to q by squared Euclidean distance, ties by id,
/// skipping `exclude`. Full sort of all candidates.
inline std::vector<int> brute_force_knn(const Matrix<double>& points, const std::vector<int>& ids,
                                        const RowVector<double>& q, int m, int exclude = -1) {
  std::vector<std::pair<double, int>> all;
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    if (ids[r] == exclude) continue;
    double d = 0.0;
    for (Eigen::Index c = 0; c < points.cols(); ++c) d += (points(r, c) - q(c)) * (points(r, c) - q(c));
    all.emplace_back(d, ids[r]);
  }
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  for (int k = 0; k < m && k < static_cast<int>(all.size()); ++k) out.push_back(all[k].second);
  return out;
}

/// Does the node set induce exactly the given edge set (after relabeling by
/// some bijection onto 0..4)? Tries all 120 bijections.
inline bool induces_motif(const Graph& g, const std::vector<int>& nodes, const std::vector<Edge>& motif) {
  if (nodes.size() != 5) return false;
  std::set<std::pair<int, int>> present;
  for (const auto& e : g.edges) present.insert({e.u, e.v});
  std::set<std::pair<int, int>> want;
  for (const auto& e : motif) want.insert({e.u, e.v});
  std::vector<int> perm{0, 1, 2, 3, 4};
  do {
    bool ok = true;
    for (int a = 0; a < 5 && ok; ++a) {
      for (int b = a + 1; b < 5 && ok; ++b) {
        const int u = std::min(nodes[perm[a]], nodes[perm[b]]);
        const int v = std::max(nodes[perm[a]], nodes[perm[b]]);
        ok = present.count({u, v}) == want.count({a, b});
      }
    }
    if (ok) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

/// Unique scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("engage-test-" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace engage::testing
