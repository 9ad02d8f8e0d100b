#include "engage/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "engage/errors.hpp"
#include "engage/optim.hpp"
#include "engage/rng.hpp"

namespace engage {

void ProbeConfig::validate() const {
  if (folds < 2) throw ConfigError("ProbeConfig: folds must be >= 2");
  if (epochs < 1 || repetitions < 1) throw ConfigError("ProbeConfig: epochs and repetitions must be >= 1");
  if (!(lr > 0.0) || l2 < 0.0) throw ConfigError("ProbeConfig: lr must be > 0 and l2 >= 0");
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  Rng rng(seed);
  std::vector<int> fold(labels.size(), 0);
  int next = 0;
  for (auto& [cls, members] : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    for (int idx : members) {
      fold[static_cast<std::size_t>(idx)] = next;
      next = (next + 1) % folds;
    }
  }
  return fold;
}

std::vector<int> fit_predict_logistic(const Matrix<double>& train, std::span<const int> train_labels,
                                      const Matrix<double>& test, int num_classes, const ProbeConfig& cfg) {
  const Eigen::Index n = train.rows();
  const Eigen::Index k = train.cols();
  RowVector<double> mu = train.colwise().mean();
  RowVector<double> sd = ((train.rowwise() - mu).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index c = 0; c < k; ++c)
    if (!(sd(c) > 1e-12)) sd(c) = 1.0;
  auto standardize = [&](const Matrix<double>& x) -> Matrix<double> {
    return ((x.rowwise() - mu).array().rowwise() / sd.array()).matrix();
  };
  const Matrix<double> xs = standardize(train);
  Matrix<double> onehot = Matrix<double>::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, train_labels[static_cast<std::size_t>(i)]) = 1.0;

  Parameter<double> w("probe.weight", Matrix<double>::Zero(k, num_classes));
  Parameter<double> b("probe.bias", Matrix<double>::Zero(1, num_classes));
  std::vector<Parameter<double>*> params{&w, &b};
  auto state = AdamState<double>::for_params(params);
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape<double> tape;
    auto wt = tape.parameter(w);
    auto logits = add(matmul(tape.constant(xs), wt), tape.parameter(b));
    Matrix<double> row_max = logits.value().rowwise().maxCoeff().replicate(1, num_classes);
    auto shifted = sub(logits, tape.constant(row_max));
    auto lse = log(row_sum(exp(shifted)));
    auto picked = row_sum(elementwise_mul(shifted, tape.constant(onehot)));
    auto loss = add(mean(sub(lse, picked)), scalar_mul(sum(elementwise_mul(wt, wt)), cfg.l2));
    zero_grad<double>(params);
    tape.backward(loss);
    adam_step<double>(params, state, adam);
  }

  const Matrix<double> scores = (standardize(test) * w.value).rowwise() + b.value.row(0);
  std::vector<int> pred(static_cast<std::size_t>(test.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return pred;
}

ProbeResult linear_probe(const Matrix<double>& embeddings, std::span<const int> labels, const ProbeConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.rows()) throw ShapeError("linear_probe: label count mismatch");
  if (static_cast<int>(labels.size()) < cfg.folds) throw ConfigError("linear_probe: fewer samples than folds");
  const std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw ConfigError("linear_probe: need at least two classes");
  if (*classes.begin() < 0) throw ConfigError("linear_probe: negative label");
  const int num_classes = *classes.rbegin() + 1;

  ProbeResult result;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const auto fold = stratified_folds(labels, cfg.folds, substream_seed(seed, "folds", static_cast<std::uint64_t>(rep)));
    for (int f = 0; f < cfg.folds; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (std::size_t i = 0; i < labels.size(); ++i) (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
      if (te.empty()) continue;
      Matrix<double> xtr = embeddings(tr, Eigen::all);
      Matrix<double> xte = embeddings(te, Eigen::all);
      std::vector<int> ytr, yte;
      for (auto i : tr) ytr.push_back(labels[static_cast<std::size_t>(i)]);
      for (auto i : te) yte.push_back(labels[static_cast<std::size_t>(i)]);
      const auto pred = fit_predict_logistic(xtr, ytr, xte, num_classes, cfg);
      result.fold_accuracies.push_back(accuracy(pred, yte));
    }
  }
  const auto& acc = result.fold_accuracies;
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean /= static_cast<double>(acc.size());
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  result.mean_accuracy = mean;
  result.std_accuracy = std::sqrt(var / static_cast<double>(acc.size()));
  return result;
}

}  // namespace engage
