// engage: run one contrastive pre-training experiment or a lambda sweep.
//
//   engage run --dataset synthetic:motif --mode engage --lambda-e 2 --lambda-f 2 --seed 1 --out out/eg
//   engage sweep --dataset synthetic:motif --lambda-e-list -2,0,2 --lambda-f-list -2,0,2 --seeds 1,2

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "engage/errors.hpp"
#include "engage/run.hpp"

namespace {

using namespace engage;

struct Flags {
  std::string dataset;
  std::string framework = "simclr";
  std::string mode = "engage";
  double lambda_e = 0.0;
  double lambda_f = 0.0;
  std::optional<double> tau;
  std::optional<int> m;
  std::optional<int> epochs;
  std::optional<int> warmup;
  std::uint64_t seed = 1;
  std::string out = "out";
  bool dump_explanations = false;
  bool record_time = false;

  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<std::string> encoder;
  std::optional<int> layers;
  std::optional<int> hidden;
  std::optional<double> p_edge;
  std::optional<double> p_feat;
  std::string match_keep_rate;
  std::optional<std::string> stats_scope;
  std::string index = "exact";
  std::optional<int> index_lists;
  std::optional<int> index_probe;
  std::string precision = "f64";
  bool no_stop_gradient = false;
  bool exclude_self = false;
  std::optional<int> folds;
  std::optional<int> degree_cap;
  std::optional<int> motif_graphs;
  std::optional<int> threads;
};

void add_run_flags(CLI::App& app, Flags& f) {
  app.add_option("--dataset", f.dataset, "tudataset:NAME:DIR | nodeset:DIR | synthetic:motif")->required();
  app.add_option("--framework", f.framework, "simclr or simsiam");
  app.add_option("--mode", f.mode, "random, heatmap or engage");
  app.add_option("--lambda-e", f.lambda_e, "edge threshold multiplier");
  app.add_option("--lambda-f", f.lambda_f, "feature threshold multiplier");
  app.add_option("--tau", f.tau, "NT-Xent temperature");
  app.add_option("--m", f.m, "smoothing neighbors");
  app.add_option("--epochs", f.epochs);
  app.add_option("--warmup", f.warmup, "epochs with random masks before explanations engage");
  app.add_option("--seed", f.seed);
  app.add_option("--out", f.out, "output directory");
  app.add_flag("--dump-explanations", f.dump_explanations, "write explanations.tsv");
  app.add_flag("--record-time", f.record_time, "store wall_time_s in metrics.json");

  app.add_option("--lr", f.lr);
  app.add_option("--batch-size", f.batch_size);
  app.add_option("--encoder", f.encoder, "gin or gcn");
  app.add_option("--layers", f.layers);
  app.add_option("--hidden", f.hidden);
  app.add_option("--p-edge", f.p_edge, "edge keep probability of random masks");
  app.add_option("--p-feat", f.p_feat, "feature keep probability of random masks");
  app.add_option("--match-keep-rate", f.match_keep_rate,
                 "take random-mask keep probabilities from the metrics.json of an earlier run");
  app.add_option("--stats-scope", f.stats_scope, "per-batch or per-graph threshold statistics");
  app.add_option("--index", f.index, "exact or quantized");
  app.add_option("--index-lists", f.index_lists);
  app.add_option("--index-probe", f.index_probe);
  app.add_option("--precision", f.precision, "f64 or f32");
  app.add_flag("--no-stop-gradient", f.no_stop_gradient, "debug: drop the simsiam stop-gradient");
  app.add_flag("--exclude-self", f.exclude_self, "leave a graph's own embedding out of smoothing");
  app.add_option("--folds", f.folds, "probe folds");
  app.add_option("--degree-cap", f.degree_cap);
  app.add_option("--motif-graphs", f.motif_graphs, "graph count of synthetic:motif");
  app.add_option("--threads", f.threads, "worker threads (default ENGAGE_THREADS)");
}

template <typename T>
void set_if(T& dst, const std::optional<T>& src) {
  if (src) dst = *src;
}

RunManifest build_manifest(const Flags& f) {
  RunManifest man;
  man.dataset = DatasetSpec::parse(f.dataset);
  set_if(man.dataset.degree_cap, f.degree_cap);
  set_if(man.dataset.motif.num_graphs, f.motif_graphs);
  const bool node_level = man.dataset.kind == DatasetSpec::Kind::NodeSet;
  man.train = node_level ? TrainConfig::node_defaults() : TrainConfig::graph_defaults();
  man.probe.folds = node_level ? 5 : 10;

  auto& t = man.train;
  t.framework = parse_framework(f.framework);
  t.augment.mode = parse_mode(f.mode);
  t.augment.lambda_e = f.lambda_e;
  t.augment.lambda_f = f.lambda_f;
  set_if(t.tau, f.tau);
  set_if(t.m, f.m);
  set_if(t.epochs, f.epochs);
  set_if(t.warmup_epochs, f.warmup);
  t.seed = f.seed;
  set_if(t.lr, f.lr);
  set_if(t.batch_size, f.batch_size);
  if (f.encoder) {
    if (*f.encoder == "gin") t.encoder.kind = EncoderKind::GIN;
    else if (*f.encoder == "gcn") t.encoder.kind = EncoderKind::GCN;
    else throw ConfigError("unknown encoder '" + *f.encoder + "'");
  }
  set_if(t.encoder.layers, f.layers);
  set_if(t.encoder.hidden_dim, f.hidden);
  set_if(t.augment.p_edge, f.p_edge);
  set_if(t.augment.p_feat, f.p_feat);
  if (!f.match_keep_rate.empty()) {
    std::ifstream in(std::filesystem::path(f.match_keep_rate) / "metrics.json");
    if (!in) throw ConfigError("--match-keep-rate: no metrics.json in " + f.match_keep_rate);
    const auto j = nlohmann::json::parse(in);
    t.augment.p_edge = j.at("edge_keep_rate").get<double>();
    t.augment.p_feat = j.at("feat_keep_rate").get<double>();
  }
  if (f.stats_scope) {
    if (*f.stats_scope == "per-batch") t.augment.stats_scope = StatsScope::PerBatch;
    else if (*f.stats_scope == "per-graph") t.augment.stats_scope = StatsScope::PerGraph;
    else throw ConfigError("unknown stats scope '" + *f.stats_scope + "'");
  }
  if (f.index == "exact") t.index = IndexKind::Exact;
  else if (f.index == "quantized") t.index = IndexKind::Quantized;
  else throw ConfigError("unknown index '" + f.index + "'");
  set_if(t.index_lists, f.index_lists);
  set_if(t.index_probe, f.index_probe);
  if (f.precision == "f64") t.precision = Precision::F64;
  else if (f.precision == "f32") t.precision = Precision::F32;
  else throw ConfigError("unknown precision '" + f.precision + "'");
  t.stop_gradient = !f.no_stop_gradient;
  t.include_self = !f.exclude_self;
  t.threads = f.threads ? *f.threads : env_threads();
  set_if(man.probe.folds, f.folds);

  man.out_dir = f.out;
  man.dump_explanations = f.dump_explanations;
  man.record_wall_time = f.record_time;
  t.validate();
  man.probe.validate();
  return man;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, T (*conv)(const std::string&)) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
    try {
      out.push_back(conv(item));
    } catch (const std::logic_error&) {
      throw ConfigError("bad list entry '" + item + "'");
    }
    start = end + 1;
  }
  return out;
}

double to_double(const std::string& s) { return std::stod(s); }
std::uint64_t to_u64(const std::string& s) { return std::stoull(s); }

// Manifest errors are reported like run errors, as error.json plus an exit code.
template <typename Fn>
int guarded(const std::string& out, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    write_error(out, "ConfigError", e.what());
    std::fprintf(stderr, "engage: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    write_error(out, "ParseError", e.what());
    std::fprintf(stderr, "engage: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    write_error(out, "Error", e.what());
    std::fprintf(stderr, "engage: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-guided graph contrastive learning"};
  app.require_subcommand(1);

  Flags run_flags;
  auto* run_cmd = app.add_subcommand("run", "train, explain and probe once");
  add_run_flags(*run_cmd, run_flags);

  Flags sweep_flags;
  std::string le_list = "-2,0,2", lf_list = "-2,0,2", seed_list = "1,2";
  int workers = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over lambda_e x lambda_f x seeds");
  add_run_flags(*sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--lambda-e-list", le_list);
  sweep_cmd->add_option("--lambda-f-list", lf_list);
  sweep_cmd->add_option("--seeds", seed_list);
  sweep_cmd->add_option("--workers", workers, "concurrent runs (default ENGAGE_THREADS)");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) {
    return guarded(run_flags.out, [&] {
      const auto man = build_manifest(run_flags);
      const int status = run_guarded(man);
      if (status == 0) {
        std::printf("%s\n", (man.out_dir / "metrics.json").string().c_str());
      } else {
        std::fprintf(stderr, "engage: run failed, see %s\n", (man.out_dir / "error.json").string().c_str());
      }
      return status;
    });
  }

  return guarded(sweep_flags.out, [&] {
    auto man = build_manifest(sweep_flags);
    // Each run in the pool is single threaded; the pool itself is bounded.
    man.train.threads = 1;
    const auto result = sweep(man, parse_list<double>(le_list, to_double), parse_list<double>(lf_list, to_double),
                              parse_list<std::uint64_t>(seed_list, to_u64), workers > 0 ? workers : env_threads());
    std::printf("%zu runs, performance gap %.4f\n", result.rows.size(), result.performance_gap);
    return 0;
  });
}
