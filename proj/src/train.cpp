#include "engage/train.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <thread>

#include "engage/errors.hpp"
#include "engage/knn.hpp"
#include "engage/losses.hpp"
#include "engage/optim.hpp"
#include "engage/rng.hpp"

namespace engage {

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("TrainConfig: tau must be > 0");
  if (m < 0) throw ConfigError("TrainConfig: m must be >= 0");
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (warmup_epochs < 1) throw ConfigError("TrainConfig: warmup_epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2");
  if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
  if (index_probe < 1 || kmeans_iters < 0 || index_lists < 0) throw ConfigError("TrainConfig: bad index settings");
  if (threads < 1) throw ConfigError("TrainConfig: threads must be >= 1");
  if (node_sample < 2) throw ConfigError("TrainConfig: node_sample must be >= 2");
  augment.validate();
  encoder.validate();
}

TrainConfig TrainConfig::graph_defaults() {
  TrainConfig cfg;
  cfg.encoder = EncoderConfig{EncoderKind::GIN, 3, 64, 0.0, false};
  cfg.lr = 0.001;
  cfg.augment.stats_scope = StatsScope::PerBatch;
  return cfg;
}

TrainConfig TrainConfig::node_defaults() {
  TrainConfig cfg;
  cfg.encoder = EncoderConfig{EncoderKind::GCN, 2, 128, 0.0, false};
  cfg.lr = 0.005;
  cfg.augment.stats_scope = StatsScope::PerGraph;
  return cfg;
}

SmoothingConfig smoothing_for(const TrainConfig& cfg) {
  SmoothingConfig s;
  s.include_self = cfg.include_self;
  s.m = cfg.augment.mode == AugmentMode::Heatmap ? 0 : cfg.m;
  return s;
}

double normalized_spread(const Matrix<double>& x) {
  if (x.rows() == 0 || x.cols() == 0) return 0.0;
  Matrix<double> y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double n = y.row(r).norm();
    if (n > 0.0) y.row(r) /= n;
  }
  const RowVector<double> mu = y.colwise().mean();
  return ((y.rowwise() - mu).array().square().colwise().mean()).sqrt().mean();
}

namespace {

template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::unique_ptr<KnnIndex> make_index(const Matrix<double>& points, const TrainConfig& cfg, std::uint64_t seed) {
  if (cfg.index == IndexKind::Exact) return std::make_unique<ExactIndex>(points);
  const int n = static_cast<int>(points.rows());
  const int lists = std::min(n, cfg.index_lists > 0 ? cfg.index_lists : default_num_lists(n));
  return std::make_unique<QuantizedIndex>(points, lists, cfg.kmeans_iters, seed, cfg.index_probe);
}

void finish_stats(DatasetExplanations& out) {
  std::vector<Eigen::VectorXd> psis;
  for (const auto& e : out.graphs) psis.push_back(e.psi);
  out.mu_psi = dataset_mean(psis);
  double total = 0.0;
  for (const auto& p : psis) total += sparsity(p, out.mu_psi);
  out.mean_sparsity = psis.empty() ? 0.0 : total / static_cast<double>(psis.size());
}

Explanation zero_explanation(const Graph& g) {
  Explanation e;
  e.psi = Eigen::VectorXd::Zero(g.num_nodes);
  e.psi01 = normalize01(e.psi);
  e.phi = Eigen::VectorXd::Zero(g.num_edges());
  return e;
}

}  // namespace

DatasetExplanations explain_graphs(const Dataset& ds, const Snapshot& snap, const SmoothingConfig& smoothing,
                                   const TrainConfig& cfg) {
  const auto n = static_cast<int>(ds.graphs.size());
  const auto index = make_index(snap.pooled, cfg, substream_seed(cfg.seed, "index"));
  DatasetExplanations out;
  out.graphs.resize(ds.graphs.size());
  std::vector<char> degenerate(ds.graphs.size(), 0);
  parallel_for(n, cfg.threads, [&](int i) {
    const auto& g = ds.graphs[static_cast<std::size_t>(i)];
    try {
      const auto w = channel_importance_graph(i, snap.pooled, *index, smoothing);
      auto e = explain(g, snap.nodes[static_cast<std::size_t>(i)], w);
      degenerate[static_cast<std::size_t>(i)] = e.psi.size() == 0 || e.psi.maxCoeff() <= 0.0;
      out.graphs[static_cast<std::size_t>(i)] = std::move(e);
    } catch (const DegenerateExplanation&) {
      out.graphs[static_cast<std::size_t>(i)] = zero_explanation(g);
      degenerate[static_cast<std::size_t>(i)] = 1;
    }
  });
  out.degenerate.assign(degenerate.begin(), degenerate.end());
  finish_stats(out);
  return out;
}

DatasetExplanations explain_nodes(const Dataset& ds, const Snapshot& snap, const SmoothingConfig& smoothing,
                                  const TrainConfig& cfg) {
  const auto& g = ds.graphs.front();
  const auto& z = snap.nodes.front();
  const auto index = make_index(z, cfg, substream_seed(cfg.seed, "index"));
  Matrix<double> weights = Matrix<double>::Zero(z.rows(), z.cols());
  parallel_for(static_cast<int>(z.rows()), cfg.threads, [&](int i) {
    try {
      weights.row(i) = channel_importance_node(i, z, *index, smoothing);
    } catch (const DegenerateExplanation&) {
      // psi_i = 0 for this node.
    }
  });
  Explanation e;
  e.psi = node_scores_per_node(z, weights);
  e.psi01 = normalize01(e.psi);
  e.phi = edge_scores(e.psi, g.edges);
  DatasetExplanations out;
  out.degenerate.push_back(e.psi.size() == 0 || e.psi.maxCoeff() <= 0.0);
  out.graphs.push_back(std::move(e));
  finish_stats(out);
  return out;
}

namespace {

template <typename Scalar>
class Model {
 public:
  Model(const TrainConfig& cfg, int in_dim) : cfg_(cfg) {
    Rng rng(substream_seed(cfg.seed, "init"));
    encoder_ = Encoder<Scalar>(cfg.encoder, in_dim, rng);
    const int k = cfg.encoder.hidden_dim;
    auto proj_sizes = cfg.heads.projector.empty() ? std::vector<int>{k, k} : cfg.heads.projector;
    projector_ = Mlp<Scalar>("projector", k, proj_sizes, rng);
    if (cfg.framework == Framework::SimSiam) {
      const int p = projector_.out_dim();
      auto pred_sizes = cfg.heads.predictor.empty() ? std::vector<int>{std::max(1, p / 2), p} : cfg.heads.predictor;
      if (pred_sizes.back() != p) throw ConfigError("predictor output must match projector output");
      predictor_ = Mlp<Scalar>("predictor", p, pred_sizes, rng);
    }
    params_ = encoder_.params();
    for (auto* p : projector_.params()) params_.push_back(p);
    for (auto* p : predictor_.params()) params_.push_back(p);
    adam_ = AdamState<Scalar>::for_params(params_);
  }

  Encoder<Scalar>& encoder() { return encoder_; }
  Mlp<Scalar>& projector() { return projector_; }

  Snapshot snapshot(const Dataset& ds) {
    Snapshot s;
    const auto n = static_cast<int>(ds.graphs.size());
    s.nodes.resize(ds.graphs.size());
    s.pooled.resize(n, encoder_.out_dim());
    s.projected.resize(n, projector_.out_dim());
    parallel_for(n, cfg_.threads, [&](int i) {
      Tape<Scalar> tape;
      const auto in = GraphInput<Scalar>::from(ds.graphs[static_cast<std::size_t>(i)], cfg_.encoder.kind);
      const auto emb = encoder_.encode(tape, in);
      s.nodes[static_cast<std::size_t>(i)] = emb.nodes.value().template cast<double>();
      s.pooled.row(i) = emb.pooled.value().template cast<double>();
      s.projected.row(i) = head_forward(tape, emb.pooled, projector_).value().template cast<double>();
    });
    return s;
  }

  /// Contrastive loss between two row-aligned embedding batches.
  Tensor<Scalar> loss(Tape<Scalar>& tape, const Tensor<Scalar>& z1, const Tensor<Scalar>& z2) {
    if (cfg_.framework == Framework::SimCLR) {
      return nt_xent(head_forward(tape, z1, projector_), head_forward(tape, z2, projector_), cfg_.tau);
    }
    return simsiam_loss(tape, z1, z2, projector_, predictor_, cfg_.stop_gradient);
  }

  void step(Tape<Scalar>& tape, const Tensor<Scalar>& loss) {
    zero_grad<Scalar>(params_);
    tape.backward(loss);
    if (cfg_.optimizer == OptimizerKind::Adam) {
      adam_step<Scalar>(params_, adam_, AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
    } else {
      sgd_step<Scalar>(params_, static_cast<Scalar>(cfg_.lr));
    }
  }

  void export_params(RunRecord& rec) {
    for (const auto* p : params_) {
      rec.param_names.push_back(p->name);
      rec.param_values.push_back(p->value.template cast<double>());
    }
  }

 private:
  TrainConfig cfg_;
  Encoder<Scalar> encoder_;
  Mlp<Scalar> projector_;
  Mlp<Scalar> predictor_;
  std::vector<Parameter<Scalar>*> params_;
  AdamState<Scalar> adam_;
};

/// Batches of a shuffled order; a trailing singleton joins the previous batch.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    batches.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

MaskPair guided_masks(const Graph& g, const Explanation& e, double theta_e, double theta_f, Rng& rng) {
  const auto psi = to_vector(e.psi);
  const auto psi01 = to_vector(e.psi01);
  const auto phi = to_vector(e.phi);
  const auto probs = edge_keep_probs(psi01, g.edges);
  MaskPair masks;
  std::tie(masks.edge1, masks.edge2) = make_edge_masks(phi, probs, theta_e, rng);
  std::tie(masks.feat1, masks.feat2) = make_feature_masks(psi, psi01, theta_f, rng);
  return masks;
}

struct KeepTally {
  double edges_kept = 0, edges_total = 0, feats_kept = 0, feats_total = 0;

  void add(const MaskPair& m) {
    auto count = [](const std::vector<std::uint8_t>& v) { return static_cast<double>(std::count(v.begin(), v.end(), 1)); };
    edges_kept += count(m.edge1) + count(m.edge2);
    edges_total += static_cast<double>(m.edge1.size() + m.edge2.size());
    feats_kept += count(m.feat1) + count(m.feat2);
    feats_total += static_cast<double>(m.feat1.size() + m.feat2.size());
  }
  void store(RunRecord& rec) const {
    rec.edge_keep_rate = edges_total > 0 ? edges_kept / edges_total : 1.0;
    rec.feat_keep_rate = feats_total > 0 ? feats_kept / feats_total : 1.0;
  }
};

bool guided(const TrainConfig& cfg, int epoch) {
  return cfg.augment.mode != AugmentMode::Random && epoch >= cfg.warmup_epochs;
}

template <typename Scalar>
RunRecord run_graph_level(const Dataset& ds, const TrainConfig& cfg) {
  const auto n = static_cast<int>(ds.graphs.size());
  if (n < 2) throw ConfigError("train_graph_level: need at least two graphs");
  Model<Scalar> model(cfg, ds.feature_dim());
  const auto smoothing = smoothing_for(cfg);
  RunRecord rec;
  KeepTally tally;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto snap = model.snapshot(ds);
    const auto expl = explain_graphs(ds, snap, smoothing, cfg);
    rec.sparsity.push_back(expl.mean_sparsity);
    rec.embedding_std.push_back(normalized_spread(snap.pooled));
    rec.projection_std.push_back(normalized_spread(snap.projected));

    Rng batch_rng(substream_seed(cfg.seed, "batches", static_cast<std::uint64_t>(epoch)));
    double loss_total = 0.0;
    int steps = 0;
    for (const auto& batch : make_batches(n, cfg.batch_size, batch_rng)) {
      // Thresholds over the batch (or per graph) from non-degenerate members.
      std::vector<double> batch_phi, batch_psi;
      for (int i : batch) {
        if (expl.degenerate[static_cast<std::size_t>(i)]) continue;
        const auto& e = expl.graphs[static_cast<std::size_t>(i)];
        batch_phi.insert(batch_phi.end(), e.phi.data(), e.phi.data() + e.phi.size());
        batch_psi.insert(batch_psi.end(), e.psi.data(), e.psi.data() + e.psi.size());
      }
      const double batch_theta_e = edge_threshold(batch_phi, cfg.augment.lambda_e);
      const double batch_theta_f = feature_threshold(batch_psi, cfg.augment.lambda_f);

      std::vector<GraphInput<Scalar>> inputs1, inputs2;
      for (int i : batch) {
        const auto& g = ds.graphs[static_cast<std::size_t>(i)];
        Rng rng(substream_seed(cfg.seed, "augment", static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(epoch)));
        MaskPair masks;
        if (guided(cfg, epoch) && !expl.degenerate[static_cast<std::size_t>(i)]) {
          const auto& e = expl.graphs[static_cast<std::size_t>(i)];
          double theta_e = batch_theta_e, theta_f = batch_theta_f;
          if (cfg.augment.stats_scope == StatsScope::PerGraph) {
            theta_e = edge_threshold(to_vector(e.phi), cfg.augment.lambda_e);
            theta_f = feature_threshold(to_vector(e.psi), cfg.augment.lambda_f);
          }
          masks = guided_masks(g, e, theta_e, theta_f, rng);
        } else {
          masks = random_masks(g, cfg.augment.p_edge, cfg.augment.p_feat, rng);
        }
        tally.add(masks);
        auto [v1, v2] = apply(g, masks);
        inputs1.push_back(GraphInput<Scalar>::from(v1, cfg.encoder.kind));
        inputs2.push_back(GraphInput<Scalar>::from(v2, cfg.encoder.kind));
      }

      Tape<Scalar> tape;
      std::vector<Tensor<Scalar>> z1, z2;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        z1.push_back(model.encoder().encode(tape, inputs1[k]).pooled);
        z2.push_back(model.encoder().encode(tape, inputs2[k]).pooled);
      }
      try {
        auto loss = model.loss(tape, concat_rows(z1), concat_rows(z2));
        model.step(tape, loss);
        loss_total += static_cast<double>(loss.value()(0, 0));
        ++steps;
      } catch (const NumericalError&) {
        ++rec.skipped_steps;
      }
    }
    rec.loss.push_back(steps > 0 ? loss_total / steps : 0.0);
  }

  const auto snap = model.snapshot(ds);
  rec.embeddings = snap.pooled;
  rec.explanations = explain_graphs(ds, snap, smoothing, cfg);
  tally.store(rec);
  model.export_params(rec);
  return rec;
}

template <typename Scalar>
RunRecord run_node_level(const Dataset& ds, const TrainConfig& cfg) {
  if (ds.graphs.size() != 1) throw ConfigError("train_node_level: node-level dataset must hold one graph");
  const auto& g = ds.graphs.front();
  if (g.num_nodes < 2) throw ConfigError("train_node_level: need at least two nodes");
  Model<Scalar> model(cfg, ds.feature_dim());
  const auto smoothing = smoothing_for(cfg);
  const auto base_input = GraphInput<Scalar>::from(g, cfg.encoder.kind);
  RunRecord rec;
  KeepTally tally;

  auto node_snapshot = [&] {
    Snapshot s;
    Tape<Scalar> tape;
    const auto emb = model.encoder().encode(tape, base_input);
    s.nodes.push_back(emb.nodes.value().template cast<double>());
    s.pooled = s.nodes.front();
    s.projected = head_forward(tape, emb.nodes, model.projector()).value().template cast<double>();
    return s;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto snap = node_snapshot();
    const auto expl = explain_nodes(ds, snap, smoothing, cfg);
    rec.sparsity.push_back(expl.mean_sparsity);
    rec.embedding_std.push_back(normalized_spread(snap.pooled));
    rec.projection_std.push_back(normalized_spread(snap.projected));

    Rng rng(substream_seed(cfg.seed, "augment", 0, static_cast<std::uint64_t>(epoch)));
    MaskPair masks;
    if (guided(cfg, epoch) && !expl.degenerate.front()) {
      const auto& e = expl.graphs.front();
      masks = guided_masks(g, e, edge_threshold(to_vector(e.phi), cfg.augment.lambda_e),
                           feature_threshold(to_vector(e.psi), cfg.augment.lambda_f), rng);
    } else {
      masks = random_masks(g, cfg.augment.p_edge, cfg.augment.p_feat, rng);
    }
    tally.add(masks);
    auto [v1, v2] = apply(g, masks);
    const auto in1 = GraphInput<Scalar>::from(v1, cfg.encoder.kind);
    const auto in2 = GraphInput<Scalar>::from(v2, cfg.encoder.kind);

    std::vector<Eigen::Index> rows(static_cast<std::size_t>(g.num_nodes));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    if (g.num_nodes > cfg.node_sample) {
      Rng sample_rng(substream_seed(cfg.seed, "node-sample", static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[sample_rng.below(i)]);
      rows.resize(static_cast<std::size_t>(cfg.node_sample));
      std::sort(rows.begin(), rows.end());
    }

    Tape<Scalar> tape;
    auto z1 = gather_rows(model.encoder().encode(tape, in1).nodes, rows);
    auto z2 = gather_rows(model.encoder().encode(tape, in2).nodes, rows);
    try {
      auto loss = model.loss(tape, z1, z2);
      model.step(tape, loss);
      rec.loss.push_back(static_cast<double>(loss.value()(0, 0)));
    } catch (const NumericalError&) {
      ++rec.skipped_steps;
      rec.loss.push_back(0.0);
    }
  }

  const auto snap = node_snapshot();
  rec.embeddings = snap.pooled;
  rec.explanations = explain_nodes(ds, snap, smoothing, cfg);
  tally.store(rec);
  model.export_params(rec);
  return rec;
}

}  // namespace

RunRecord train_graph_level(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.task != Task::GraphLevel) throw ConfigError("train_graph_level: dataset is node-level");
  return cfg.precision == Precision::F64 ? run_graph_level<double>(ds, cfg) : run_graph_level<float>(ds, cfg);
}

RunRecord train_node_level(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.task != Task::NodeLevel) throw ConfigError("train_node_level: dataset is graph-level");
  return cfg.precision == Precision::F64 ? run_node_level<double>(ds, cfg) : run_node_level<float>(ds, cfg);
}

RunRecord train(const Dataset& ds, const TrainConfig& cfg) {
  return ds.task == Task::GraphLevel ? train_graph_level(ds, cfg) : train_node_level(ds, cfg);
}

}  // namespace engage
