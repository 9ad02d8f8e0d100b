#pragma once

// GCN / GIN encoders, mean pooling and the projector / predictor MLP heads.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "engage/graph.hpp"
#include "engage/rng.hpp"
#include "engage/tensor.hpp"

namespace engage {

enum class EncoderKind { GCN, GIN };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::GIN;
  int layers = 3;
  int hidden_dim = 64;
  double gin_epsilon = 0.0;
  bool learn_epsilon = false;

  void validate() const {
    if (layers < 1 || hidden_dim < 1) throw ConfigError("EncoderConfig: layers and hidden_dim must be >= 1");
  }
};

/// Output sizes of each head layer. The predictor is used by simsiam only.
struct HeadConfig {
  std::vector<int> projector;
  std::vector<int> predictor;
};

template <typename Scalar>
Matrix<Scalar> glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix<Scalar> w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return w;
}

template <typename Scalar>
struct Linear {
  Parameter<Scalar> weight;  // in x out
  Parameter<Scalar> bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng)
      : weight(name + ".weight", glorot_uniform<Scalar>(in, out, rng)),
        bias(name + ".bias", Matrix<Scalar>::Zero(1, out)) {}

  Tensor<Scalar> operator()(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
    return add(matmul(x, tape.parameter(weight)), tape.parameter(bias));
  }
};

/// Stack of Linear layers with ReLU between layers and a linear output.
template <typename Scalar>
struct Mlp {
  std::vector<Linear<Scalar>> layers;

  Mlp() = default;
  Mlp(const std::string& name, int in, const std::vector<int>& sizes, Rng& rng) {
    layers.reserve(sizes.size());
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      layers.emplace_back(name + "." + std::to_string(l), in, sizes[l], rng);
      in = sizes[l];
    }
  }

  int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.value.cols()); }

  std::vector<Parameter<Scalar>*> params() {
    std::vector<Parameter<Scalar>*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
};

/// Per-graph constant inputs, converted once to the encoder's scalar type.
template <typename Scalar>
struct GraphInput {
  Matrix<Scalar> features;
  Matrix<Scalar> norm_adj;  // GCN only
  std::vector<std::vector<int>> neighbors;

  static GraphInput from(const Graph& g, EncoderKind kind) {
    GraphInput in;
    in.features = g.features.cast<Scalar>();
    if (kind == EncoderKind::GCN) in.norm_adj = normalized_adjacency(g).cast<Scalar>();
    in.neighbors = neighbor_lists(g);
    return in;
  }
};

/// Row i of the result is the sum of rows F[j] over j in neighbors[i].
template <typename Scalar>
Tensor<Scalar> neighbor_sum(const Tensor<Scalar>& f, const std::vector<std::vector<int>>& neighbors) {
  if (static_cast<Eigen::Index>(neighbors.size()) != f.rows()) {
    throw ShapeError("neighbor_sum: " + std::to_string(neighbors.size()) + " neighbor lists for " +
                     std::to_string(f.rows()) + " rows");
  }
  const auto& x = f.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    for (int j : neighbors[i]) out.row(static_cast<Eigen::Index>(i)) += x.row(j);
  const std::size_t id = f.id();
  return f.tape()->record(std::move(out), {f}, [id, neighbors](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Matrix<Scalar> gx = Matrix<Scalar>::Zero(g.rows(), g.cols());
    for (std::size_t i = 0; i < neighbors.size(); ++i)
      for (int j : neighbors[i]) gx.row(j) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(id, gx);
  });
}

/// One graph convolution: act(A_hat F W), evaluated as A_hat (F W). `activate`
/// is false for the final encoder layer.
template <typename Scalar>
Tensor<Scalar> gcn_forward(const Tensor<Scalar>& f_prev, const Tensor<Scalar>& a_hat, const Tensor<Scalar>& w,
                           bool activate) {
  auto h = matmul(a_hat, matmul(f_prev, w));
  return activate ? relu(h) : h;
}

/// One GIN layer: MLP((1 + eps) F_i + sum_{j in N(i)} F_j). `eps` is 1x1.
template <typename Scalar>
Tensor<Scalar> gin_forward(Tape<Scalar>& tape, const Tensor<Scalar>& f_prev,
                           const std::vector<std::vector<int>>& neighbors, const Tensor<Scalar>& eps,
                           Mlp<Scalar>& mlp, bool activate) {
  if (mlp.layers.empty()) throw ShapeError("gin_forward: empty MLP");
  if (mlp.layers.front().weight.value.rows() != f_prev.cols()) {
    detail::shape_mismatch("gin_forward", f_prev.value(), mlp.layers.front().weight.value.transpose());
  }
  auto self_term = add(f_prev, scale(f_prev, eps));
  Tensor<Scalar> h = add(self_term, neighbor_sum(f_prev, neighbors));
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    h = mlp.layers[l](tape, h);
    if (l + 1 < mlp.layers.size() || activate) h = relu(h);
  }
  return h;
}

template <typename Scalar>
Tensor<Scalar> head_forward(Tape<Scalar>& tape, const Tensor<Scalar>& z, Mlp<Scalar>& head) {
  Tensor<Scalar> h = z;
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    if (head.layers[l].weight.value.rows() != h.cols()) {
      detail::shape_mismatch("head_forward", h.value(), head.layers[l].weight.value.transpose());
    }
    h = head.layers[l](tape, h);
    if (l + 1 < head.layers.size()) h = relu(h);
  }
  return h;
}

template <typename Scalar>
struct Embedding {
  Tensor<Scalar> nodes;   // n x K, final layer output
  Tensor<Scalar> pooled;  // 1 x K, mean over nodes
};

template <typename Scalar>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, int in_dim, Rng& rng) : cfg_(cfg), in_dim_(in_dim) {
    cfg.validate();
    if (in_dim < 1) throw ConfigError("Encoder: input dimension must be >= 1");
    int d = in_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string name = "encoder.layer" + std::to_string(l);
      if (cfg.kind == EncoderKind::GCN) {
        gcn_weights_.emplace_back(name + ".weight", glorot_uniform<Scalar>(d, cfg.hidden_dim, rng));
      } else {
        gin_mlps_.emplace_back(name + ".mlp", d, std::vector<int>{cfg.hidden_dim, cfg.hidden_dim}, rng);
        gin_eps_.emplace_back(name + ".eps", Matrix<Scalar>::Constant(1, 1, static_cast<Scalar>(cfg.gin_epsilon)));
      }
      d = cfg.hidden_dim;
    }
  }

  Encoder(const Encoder&) = default;
  Encoder& operator=(const Encoder&) = default;

  const EncoderConfig& config() const { return cfg_; }
  int in_dim() const { return in_dim_; }
  int out_dim() const { return cfg_.hidden_dim; }

  /// Trainable parameters. GIN epsilons are included only when learnable.
  std::vector<Parameter<Scalar>*> params() {
    std::vector<Parameter<Scalar>*> out;
    for (auto& w : gcn_weights_) out.push_back(&w);
    for (std::size_t l = 0; l < gin_mlps_.size(); ++l) {
      for (auto* p : gin_mlps_[l].params()) out.push_back(p);
      if (cfg_.learn_epsilon) out.push_back(&gin_eps_[l]);
    }
    return out;
  }

  /// Final-layer node embeddings Z and the average-pooled graph embedding z.
  Embedding<Scalar> encode(Tape<Scalar>& tape, const GraphInput<Scalar>& g) {
    if (g.features.cols() != in_dim_) {
      throw ShapeError("encode: feature dim " + std::to_string(g.features.cols()) + " != encoder input " +
                       std::to_string(in_dim_));
    }
    Tensor<Scalar> h = tape.constant(g.features);
    if (cfg_.kind == EncoderKind::GCN) {
      auto a_hat = tape.constant(g.norm_adj);
      for (std::size_t l = 0; l < gcn_weights_.size(); ++l) {
        h = gcn_forward(h, a_hat, tape.parameter(gcn_weights_[l]), l + 1 < gcn_weights_.size());
      }
    } else {
      for (std::size_t l = 0; l < gin_mlps_.size(); ++l) {
        auto eps = cfg_.learn_epsilon ? tape.parameter(gin_eps_[l]) : tape.constant(gin_eps_[l].value);
        h = gin_forward(tape, h, g.neighbors, eps, gin_mlps_[l], l + 1 < gin_mlps_.size());
      }
    }
    return {h, mean_rows(h)};
  }

 private:
  EncoderConfig cfg_;
  int in_dim_ = 0;
  std::vector<Parameter<Scalar>> gcn_weights_;
  std::vector<Mlp<Scalar>> gin_mlps_;
  std::vector<Parameter<Scalar>> gin_eps_;
};

/// Writes named parameters: magic "ENGCKPT1", u64 count, then per entry
/// u64 name length, name bytes, u64 rows, u64 cols and rows*cols
/// little-endian float64 values in row-major order.
void save_checkpoint(const std::filesystem::path& path, const std::vector<std::string>& names,
                     const std::vector<Matrix<double>>& values);

struct CheckpointEntry {
  std::string name;
  Matrix<double> value;
};

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter<Scalar>*>& params) {
  std::vector<std::string> names;
  std::vector<Matrix<double>> values;
  for (const auto* p : params) {
    names.push_back(p->name);
    values.push_back(p->value.template cast<double>());
  }
  save_checkpoint(path, names, values);
}

}  // namespace engage
