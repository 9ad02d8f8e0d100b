#include "engage/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "engage/errors.hpp"
#include "engage/rng.hpp"

namespace engage {

namespace {

std::vector<int> default_ids(const Matrix<double>& points, std::vector<int> ids) {
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(points.rows()));
    std::iota(ids.begin(), ids.end(), 0);
  }
  if (static_cast<Eigen::Index>(ids.size()) != points.rows()) throw ConfigError("knn: ids/points length mismatch");
  auto sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("knn: duplicate ids");
  return ids;
}

struct Candidate {
  double sq;
  int id;
  bool operator<(const Candidate& o) const { return sq < o.sq || (sq == o.sq && id < o.id); }
};

std::vector<Neighbor> take_best(std::vector<Candidate>& cands, int m) {
  const auto k = static_cast<std::size_t>(m);
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end());
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({cands[i].id, std::sqrt(cands[i].sq)});
  return out;
}

void check_m(int m, int count, bool excluded) {
  const int available = count - (excluded ? 1 : 0);
  if (m < 0 || m > available) {
    throw ConfigError("knn query: m = " + std::to_string(m) + " exceeds " + std::to_string(available) +
                      " available points");
  }
}

}  // namespace

ExactIndex::ExactIndex(Matrix<double> points, std::vector<int> ids)
    : points_(std::move(points)), ids_(default_ids(points_, std::move(ids))) {
  if (points_.rows() < 1) throw ConfigError("knn: index needs at least one point");
}

std::vector<Neighbor> ExactIndex::query(const RowVector<double>& q, int m, std::optional<int> exclude) const {
  if (q.cols() != points_.cols()) detail::shape_mismatch("knn query", q, points_);
  const bool hit = exclude && std::find(ids_.begin(), ids_.end(), *exclude) != ids_.end();
  check_m(m, size(), hit);
  std::vector<Candidate> cands;
  cands.reserve(ids_.size());
  for (Eigen::Index r = 0; r < points_.rows(); ++r) {
    const int id = ids_[static_cast<std::size_t>(r)];
    if (exclude && id == *exclude) continue;
    cands.push_back({(points_.row(r) - q).squaredNorm(), id});
  }
  return take_best(cands, m);
}

QuantizedIndex::QuantizedIndex(Matrix<double> points, int num_lists, int kmeans_iters, std::uint64_t seed, int probe,
                               std::vector<int> ids)
    : points_(std::move(points)), ids_(default_ids(points_, std::move(ids))) {
  const auto n = static_cast<int>(points_.rows());
  if (n < 1) throw ConfigError("knn: index needs at least one point");
  if (num_lists < 1 || num_lists > n) {
    throw ConfigError("knn: list count " + std::to_string(num_lists) + " must lie in [1, " + std::to_string(n) + "]");
  }
  if (probe < 1) throw ConfigError("knn: probe count must be >= 1");
  probe_ = std::min(probe, num_lists);

  // Initial centroids: distinct points drawn by a seeded shuffle.
  Rng rng(substream_seed(seed, "kmeans-init"));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  centroids_.resize(num_lists, points_.cols());
  for (int c = 0; c < num_lists; ++c) centroids_.row(c) = points_.row(order[static_cast<std::size_t>(c)]);

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  auto assign_all = [&] {
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points_.row(i) - centroids_.row(0)).squaredNorm();
      for (int c = 1; c < num_lists; ++c) {
        const double d = (points_.row(i) - centroids_.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      dist[static_cast<std::size_t>(i)] = best_d;
    }
  };

  for (int it = 0; it < kmeans_iters; ++it) {
    assign_all();
    Matrix<double> sums = Matrix<double>::Zero(num_lists, points_.cols());
    std::vector<int> counts(static_cast<std::size_t>(num_lists), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points_.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < num_lists; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids_.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Re-seed an empty cluster at the point farthest from its centroid.
      const auto far = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      centroids_.row(c) = points_.row(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
    }
  }
  assign_all();
  lists_.assign(static_cast<std::size_t>(num_lists), {});
  for (int i = 0; i < n; ++i) lists_[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].push_back(i);
}

void QuantizedIndex::set_probe(int probe) {
  if (probe < 1 || probe > static_cast<int>(centroids_.rows())) {
    throw ConfigError("knn: probe count must lie in [1, lists]");
  }
  probe_ = probe;
}

std::vector<Neighbor> QuantizedIndex::query(const RowVector<double>& q, int m, std::optional<int> exclude) const {
  if (q.cols() != points_.cols()) detail::shape_mismatch("knn query", q, points_);
  const bool hit = exclude && std::find(ids_.begin(), ids_.end(), *exclude) != ids_.end();
  check_m(m, size(), hit);

  std::vector<Candidate> order;
  for (Eigen::Index c = 0; c < centroids_.rows(); ++c) {
    order.push_back({(centroids_.row(c) - q).squaredNorm(), static_cast<int>(c)});
  }
  std::sort(order.begin(), order.end());

  std::vector<Candidate> cands;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (static_cast<int>(k) >= probe_ && static_cast<int>(cands.size()) >= m) break;
    for (int r : lists_[static_cast<std::size_t>(order[k].id)]) {
      const int id = ids_[static_cast<std::size_t>(r)];
      if (exclude && id == *exclude) continue;
      cands.push_back({(points_.row(r) - q).squaredNorm(), id});
    }
  }
  return take_best(cands, m);
}

ExactIndex build_exact(Matrix<double> points) { return ExactIndex(std::move(points)); }

QuantizedIndex build_quantized(Matrix<double> points, int num_lists, int kmeans_iters, std::uint64_t seed, int probe) {
  return QuantizedIndex(std::move(points), num_lists, kmeans_iters, seed, probe);
}

int default_num_lists(int n) { return std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))))); }

}  // namespace engage
