#include "engage/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "engage/errors.hpp"
#include "engage/rng.hpp"

namespace engage {

namespace fs = std::filesystem;

void Graph::validate() const {
  if (num_nodes < 0) throw ConfigError("graph: negative node count");
  if (features.rows() != num_nodes) {
    throw ConfigError("graph: feature rows " + std::to_string(features.rows()) + " != node count " +
                      std::to_string(num_nodes));
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.u < 0 || e.v >= num_nodes || e.u >= e.v) throw ConfigError("graph: non-canonical edge");
    if (i > 0 && !(edges[i - 1] < e)) throw ConfigError("graph: edges not sorted/unique");
  }
}

Graph make_graph(int num_nodes, const std::vector<std::pair<int, int>>& pairs, Features features,
                 std::optional<int> label) {
  Graph g;
  g.num_nodes = num_nodes;
  g.edges.reserve(pairs.size());
  for (auto [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) {
      throw ConfigError("make_graph: edge (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range");
    }
    if (a == b) continue;
    g.edges.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.features = std::move(features);
  g.label = label;
  g.validate();
  return g;
}

std::vector<int> Dataset::graph_labels() const {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(g.label.value_or(-1));
  return out;
}

namespace {

struct Line {
  std::size_t number;
  std::string text;
};

std::vector<Line> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::vector<Line> lines;
  std::string s;
  std::size_t n = 0;
  while (std::getline(in, s)) {
    ++n;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    if (s.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back({n, s});
  }
  return lines;
}

std::string where(const fs::path& path, std::size_t line) { return path.string() + ":" + std::to_string(line); }

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

long parse_int(std::string_view tok, const fs::path& path, std::size_t line) {
  long v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(where(path, line), "expected integer, got '" + std::string(tok) + "'");
  return v;
}

double parse_double(std::string_view tok, const fs::path& path, std::size_t line) {
  double v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(where(path, line), "expected number, got '" + std::string(tok) + "'");
  return v;
}

std::vector<long> read_int_column(const fs::path& path) {
  std::vector<long> out;
  for (const auto& l : read_lines(path)) out.push_back(parse_int(trim(l.text), path, l.number));
  return out;
}

/// Maps arbitrary integer values to dense ids 0..k-1 in ascending value order.
std::map<long, int> dense_ids(const std::vector<long>& values) {
  std::map<long, int> ids;
  for (long v : values) ids.emplace(v, 0);
  int next = 0;
  for (auto& [v, id] : ids) id = next++;
  return ids;
}

}  // namespace

Dataset parse_tudataset(const fs::path& root, const std::string& name, const TuParseOptions& opts) {
  const fs::path a_path = root / (name + "_A.txt");
  const fs::path ind_path = root / (name + "_graph_indicator.txt");
  const fs::path gl_path = root / (name + "_graph_labels.txt");
  const fs::path nl_path = root / (name + "_node_labels.txt");
  const fs::path attr_path = root / (name + "_node_attributes.txt");
  for (const auto& p : {a_path, ind_path}) {
    if (!fs::exists(p)) throw ParseError(p.string(), "missing mandatory file");
  }

  // Node n (0-based, global) belongs to graph indicator[n] - 1.
  std::vector<int> graph_of;
  std::vector<int> local_id;
  std::vector<int> sizes;
  for (const auto& l : read_lines(ind_path)) {
    const long gid = parse_int(trim(l.text), ind_path, l.number);
    if (gid < 1) throw ParseError(where(ind_path, l.number), "graph id must be >= 1");
    if (static_cast<std::size_t>(gid) > sizes.size()) sizes.resize(static_cast<std::size_t>(gid), 0);
    graph_of.push_back(static_cast<int>(gid - 1));
    local_id.push_back(sizes[static_cast<std::size_t>(gid - 1)]++);
  }
  const auto total_nodes = static_cast<long>(graph_of.size());
  const std::size_t num_graphs = sizes.size();

  std::vector<std::vector<std::pair<int, int>>> pairs(num_graphs);
  for (const auto& l : read_lines(a_path)) {
    const auto toks = split(l.text, ',');
    if (toks.size() != 2) throw ParseError(where(a_path, l.number), "expected 'i, j'");
    const long i = parse_int(toks[0], a_path, l.number);
    const long j = parse_int(toks[1], a_path, l.number);
    if (i < 1 || j < 1 || i > total_nodes || j > total_nodes) {
      throw ParseError(where(a_path, l.number), "node id out of range");
    }
    const int gi = graph_of[static_cast<std::size_t>(i - 1)];
    if (gi != graph_of[static_cast<std::size_t>(j - 1)]) {
      throw ParseError(where(a_path, l.number), "edge joins nodes of different graphs");
    }
    pairs[static_cast<std::size_t>(gi)].emplace_back(local_id[static_cast<std::size_t>(i - 1)],
                                                     local_id[static_cast<std::size_t>(j - 1)]);
  }

  // Global node feature rows, or empty if falling back to degree one-hot.
  Features node_features;
  if (fs::exists(attr_path)) {
    const auto lines = read_lines(attr_path);
    if (static_cast<long>(lines.size()) != total_nodes) {
      throw ParseError(attr_path.string(), "expected " + std::to_string(total_nodes) + " rows, got " +
                                               std::to_string(lines.size()));
    }
    std::size_t arity = 0;
    for (std::size_t n = 0; n < lines.size(); ++n) {
      const auto toks = split(lines[n].text, ',');
      if (n == 0) {
        arity = toks.size();
        node_features.resize(total_nodes, static_cast<Eigen::Index>(arity));
      } else if (toks.size() != arity) {
        throw ParseError(where(attr_path, lines[n].number),
                         "attribute arity " + std::to_string(toks.size()) + " != " + std::to_string(arity));
      }
      for (std::size_t k = 0; k < arity; ++k) {
        node_features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) =
            parse_double(toks[k], attr_path, lines[n].number);
      }
    }
  } else if (fs::exists(nl_path)) {
    const auto labels = read_int_column(nl_path);
    if (static_cast<long>(labels.size()) != total_nodes) {
      throw ParseError(nl_path.string(), "expected " + std::to_string(total_nodes) + " labels");
    }
    const auto ids = dense_ids(labels);
    node_features = Features::Zero(total_nodes, static_cast<Eigen::Index>(ids.size()));
    for (long n = 0; n < total_nodes; ++n) node_features(n, ids.at(labels[static_cast<std::size_t>(n)])) = 1.0;
  }

  std::vector<std::optional<int>> labels(num_graphs);
  int num_classes = 0;
  if (fs::exists(gl_path)) {
    const auto raw = read_int_column(gl_path);
    if (raw.size() != num_graphs) {
      throw ParseError(gl_path.string(), "expected " + std::to_string(num_graphs) + " labels, got " +
                                             std::to_string(raw.size()));
    }
    const auto ids = dense_ids(raw);
    num_classes = static_cast<int>(ids.size());
    for (std::size_t g = 0; g < num_graphs; ++g) labels[g] = ids.at(raw[g]);
  }

  Dataset ds;
  ds.name = name;
  ds.task = Task::GraphLevel;
  ds.num_classes = num_classes;
  ds.graphs.reserve(num_graphs);
  std::vector<Features> xs;
  xs.reserve(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) xs.emplace_back(sizes[g], node_features.cols());
  if (node_features.size() > 0) {
    // Nodes of one graph need not be contiguous in the indicator file.
    for (long m = 0; m < total_nodes; ++m) {
      const auto um = static_cast<std::size_t>(m);
      xs[static_cast<std::size_t>(graph_of[um])].row(local_id[um]) = node_features.row(m);
    }
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    ds.graphs.push_back(make_graph(sizes[g], pairs[g], std::move(xs[g]), labels[g]));
  }
  if (node_features.size() == 0) assign_degree_features(ds.graphs, opts.degree_cap);
  return ds;
}

void write_tudataset(const Dataset& dataset, const fs::path& root, const std::string& name) {
  fs::create_directories(root);
  std::ofstream a(root / (name + "_A.txt"));
  std::ofstream ind(root / (name + "_graph_indicator.txt"));
  std::ofstream attr(root / (name + "_node_attributes.txt"));
  attr << std::setprecision(17);
  long offset = 1;
  bool has_labels = false;
  for (std::size_t g = 0; g < dataset.graphs.size(); ++g) {
    const auto& graph = dataset.graphs[g];
    has_labels = has_labels || graph.label.has_value();
    for (const auto& e : graph.edges) {
      a << offset + e.u << ", " << offset + e.v << '\n';
      a << offset + e.v << ", " << offset + e.u << '\n';
    }
    for (int n = 0; n < graph.num_nodes; ++n) {
      ind << g + 1 << '\n';
      for (Eigen::Index k = 0; k < graph.features.cols(); ++k) {
        if (k > 0) attr << ", ";
        attr << graph.features(n, k);
      }
      attr << '\n';
    }
    offset += graph.num_nodes;
  }
  if (has_labels) {
    std::ofstream gl(root / (name + "_graph_labels.txt"));
    for (const auto& graph : dataset.graphs) gl << graph.label.value_or(0) << '\n';
  }
}

Dataset parse_node_dataset(const fs::path& root) {
  const fs::path e_path = root / "edges.txt";
  const fs::path f_path = root / "features.txt";
  const fs::path l_path = root / "labels.txt";
  for (const auto& p : {e_path, f_path, l_path}) {
    if (!fs::exists(p)) throw ParseError(p.string(), "missing mandatory file");
  }

  const auto feature_lines = read_lines(f_path);
  const auto n = static_cast<int>(feature_lines.size());
  Features x;
  for (std::size_t r = 0; r < feature_lines.size(); ++r) {
    const auto toks = split_ws(feature_lines[r].text);
    if (r == 0) {
      x.resize(n, static_cast<Eigen::Index>(toks.size()));
    } else if (static_cast<Eigen::Index>(toks.size()) != x.cols()) {
      throw ParseError(where(f_path, feature_lines[r].number), "ragged feature row");
    }
    for (std::size_t k = 0; k < toks.size(); ++k) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          parse_double(toks[k], f_path, feature_lines[r].number);
    }
  }

  std::vector<std::pair<int, int>> pairs;
  for (const auto& l : read_lines(e_path)) {
    const auto toks = split_ws(l.text);
    if (toks.size() != 2) throw ParseError(where(e_path, l.number), "expected 'u v'");
    const long u = parse_int(toks[0], e_path, l.number);
    const long v = parse_int(toks[1], e_path, l.number);
    if (u < 0 || v < 0 || u >= n || v >= n) throw ParseError(where(e_path, l.number), "dangling edge endpoint");
    pairs.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }

  const auto raw_labels = read_int_column(l_path);
  if (static_cast<int>(raw_labels.size()) != n) {
    throw ParseError(l_path.string(), "expected " + std::to_string(n) + " labels, got " +
                                          std::to_string(raw_labels.size()));
  }

  Dataset ds;
  ds.name = root.filename().string();
  ds.task = Task::NodeLevel;
  int max_label = -1;
  for (long v : raw_labels) {
    if (v < 0) throw ParseError(l_path.string(), "negative label");
    ds.node_labels.push_back(static_cast<int>(v));
    max_label = std::max(max_label, static_cast<int>(v));
  }
  ds.num_classes = max_label + 1;
  ds.graphs.push_back(make_graph(n, pairs, std::move(x)));
  return ds;
}

void MotifSpec::validate() const {
  if (num_graphs < 1 || background_nodes < 1 || bridge_edges < 1 || degree_cap < 1) {
    throw ConfigError("MotifSpec: counts must be >= 1");
  }
  if (!(background_edge_prob >= 0.0 && background_edge_prob <= 1.0)) {
    throw ConfigError("MotifSpec: background_edge_prob must lie in [0, 1]");
  }
  if (bridge_edges > 5 * background_nodes) throw ConfigError("MotifSpec: more bridge edges than node pairs");
}

std::vector<Edge> motif_edges(MotifKind kind) {
  std::vector<Edge> out;
  if (kind == MotifKind::Cycle5) {
    for (int i = 0; i < 5; ++i) out.push_back({std::min(i, (i + 1) % 5), std::max(i, (i + 1) % 5)});
    std::sort(out.begin(), out.end());
  } else {
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j) out.push_back({i, j});
  }
  return out;
}

Dataset generate_motif_dataset(const MotifSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.name = "synthetic:motif";
  ds.task = Task::GraphLevel;
  ds.num_classes = 2;

  // Balanced labels in shuffled order.
  std::vector<int> kinds(static_cast<std::size_t>(spec.num_graphs));
  for (std::size_t g = 0; g < kinds.size(); ++g) kinds[g] = static_cast<int>(g % 2);
  Rng label_rng(substream_seed(seed, "motif-labels"));
  for (std::size_t i = kinds.size(); i > 1; --i) std::swap(kinds[i - 1], kinds[label_rng.below(i)]);

  const int b = spec.background_nodes;
  const int n = b + 5;
  for (int g = 0; g < spec.num_graphs; ++g) {
    Rng rng(substream_seed(seed, "motif-graph", static_cast<std::uint64_t>(g)));
    const auto kind = static_cast<MotifKind>(kinds[static_cast<std::size_t>(g)]);

    // Local layout: background 0..b-1, motif b..b+4; then relabel randomly.
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < b; ++i)
      for (int j = i + 1; j < b; ++j)
        if (rng.bernoulli(spec.background_edge_prob)) pairs.emplace_back(i, j);
    for (const auto& e : motif_edges(kind)) pairs.emplace_back(b + e.u, b + e.v);
    std::set<std::pair<int, int>> bridges;
    while (static_cast<int>(bridges.size()) < spec.bridge_edges) {
      bridges.emplace(b + static_cast<int>(rng.below(5)), static_cast<int>(rng.below(static_cast<std::uint64_t>(b))));
    }
    pairs.insert(pairs.end(), bridges.begin(), bridges.end());

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (auto& [u, v] : pairs) {
      u = perm[static_cast<std::size_t>(u)];
      v = perm[static_cast<std::size_t>(v)];
    }
    std::vector<int> motif;
    for (int i = 0; i < 5; ++i) motif.push_back(perm[static_cast<std::size_t>(b + i)]);
    std::sort(motif.begin(), motif.end());

    ds.graphs.push_back(make_graph(n, pairs, Features::Zero(n, 1), static_cast<int>(kind)));
    ds.motif_nodes.push_back(std::move(motif));
  }
  assign_degree_features(ds.graphs, spec.degree_cap);
  return ds;
}

void assign_degree_features(std::vector<Graph>& graphs, int degree_cap) {
  std::vector<std::vector<int>> degrees;
  int max_deg = 0;
  for (const auto& g : graphs) {
    std::vector<int> d(static_cast<std::size_t>(g.num_nodes), 0);
    for (const auto& e : g.edges) {
      ++d[static_cast<std::size_t>(e.u)];
      ++d[static_cast<std::size_t>(e.v)];
    }
    for (int v : d) max_deg = std::max(max_deg, v);
    degrees.push_back(std::move(d));
  }
  const int dim = std::min(max_deg, degree_cap) + 1;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    auto& g = graphs[i];
    g.features = Features::Zero(g.num_nodes, dim);
    for (int v = 0; v < g.num_nodes; ++v) g.features(v, std::min(degrees[i][static_cast<std::size_t>(v)], dim - 1)) = 1.0;
  }
}

Matrix<double> adjacency(const Graph& g) {
  Matrix<double> a = Matrix<double>::Zero(g.num_nodes, g.num_nodes);
  for (const auto& e : g.edges) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

Matrix<double> normalized_adjacency(const Graph& g) {
  Matrix<double> a = adjacency(g);
  a.diagonal().array() += 1.0;
  const Eigen::VectorXd deg = a.rowwise().sum();
  // One rounding per entry: a_ij / sqrt(d_i d_j) is exactly symmetric and
  // exact wherever d_i d_j is a perfect square.
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) a(i, j) /= std::sqrt(deg(i) * deg(j));
  return a;
}

std::vector<std::vector<int>> neighbor_lists(const Graph& g) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(g.num_nodes));
  for (const auto& e : g.edges) {
    out[static_cast<std::size_t>(e.u)].push_back(e.v);
    out[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  return out;
}

}  // namespace engage
