#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "engage/tensor.hpp"

namespace engage {

struct Neighbor {
  int id = 0;
  double distance = 0.0;  // Euclidean
};

/// Nearest-neighbor lookup over rows of an embedding matrix. Row r carries
/// id `ids[r]` (defaults to r).
class KnnIndex {
 public:
  virtual ~KnnIndex() = default;
  /// The m nearest points to `q` by ascending Euclidean distance, ties broken
  /// by smaller id. `exclude` removes one id from the candidates.
  virtual std::vector<Neighbor> query(const RowVector<double>& q, int m, std::optional<int> exclude = {}) const = 0;
  virtual int size() const = 0;
};

class ExactIndex final : public KnnIndex {
 public:
  explicit ExactIndex(Matrix<double> points, std::vector<int> ids = {});

  std::vector<Neighbor> query(const RowVector<double>& q, int m, std::optional<int> exclude = {}) const override;
  int size() const override { return static_cast<int>(points_.rows()); }
  const Matrix<double>& points() const { return points_; }
  const std::vector<int>& ids() const { return ids_; }

 private:
  Matrix<double> points_;
  std::vector<int> ids_;
};

/// Inverted-file index: k-means coarse quantizer with one id list per
/// centroid. A query scans the `probe` lists whose centroids are nearest,
/// widening the probe only when those lists hold fewer than m candidates.
class QuantizedIndex final : public KnnIndex {
 public:
  QuantizedIndex(Matrix<double> points, int num_lists, int kmeans_iters, std::uint64_t seed, int probe = 4,
                 std::vector<int> ids = {});

  std::vector<Neighbor> query(const RowVector<double>& q, int m, std::optional<int> exclude = {}) const override;
  int size() const override { return static_cast<int>(points_.rows()); }

  const Matrix<double>& centroids() const { return centroids_; }
  /// Row positions (not ids) per centroid.
  const std::vector<std::vector<int>>& lists() const { return lists_; }
  int probe() const { return probe_; }
  void set_probe(int probe);

 private:
  Matrix<double> points_;
  std::vector<int> ids_;
  Matrix<double> centroids_;
  std::vector<std::vector<int>> lists_;
  int probe_ = 1;
};

ExactIndex build_exact(Matrix<double> points);
QuantizedIndex build_quantized(Matrix<double> points, int num_lists, int kmeans_iters, std::uint64_t seed, int probe = 4);

/// round(sqrt(n)), at least 1.
int default_num_lists(int n);

}  // namespace engage
