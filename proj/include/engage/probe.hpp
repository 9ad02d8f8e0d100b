#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "engage/tensor.hpp"

namespace engage {

struct ProbeConfig {
  int folds = 10;
  double l2 = 1e-4;
  int epochs = 200;
  double lr = 0.05;
  int repetitions = 1;

  void validate() const;
};

struct ProbeResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<double> fold_accuracies;
};

double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Stratified k-fold assignment: fold id per sample. Within each class the
/// shuffled samples are dealt round-robin, continuing the counter across
/// classes so fold sizes differ by at most one.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

/// Multinomial logistic regression trained full-batch with Adam on
/// standardized features. Returns predicted classes for `test`.
std::vector<int> fit_predict_logistic(const Matrix<double>& train, std::span<const int> train_labels,
                                      const Matrix<double>& test, int num_classes, const ProbeConfig& cfg);

/// Cross-validated accuracy of a logistic-regression probe on frozen
/// embeddings. Mean and population std are taken across folds x repetitions.
ProbeResult linear_probe(const Matrix<double>& embeddings, std::span<const int> labels, const ProbeConfig& cfg,
                         std::uint64_t seed);

}  // namespace engage
