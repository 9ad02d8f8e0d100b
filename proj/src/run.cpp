#include "engage/run.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "engage/errors.hpp"
#include "engage/rng.hpp"

namespace engage {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::Random: return "random";
    case AugmentMode::Heatmap: return "heatmap";
    case AugmentMode::Engage: return "engage";
  }
  return "?";
}

std::string to_string(Framework fw) { return fw == Framework::SimCLR ? "simclr" : "simsiam"; }

AugmentMode parse_mode(const std::string& s) {
  if (s == "random") return AugmentMode::Random;
  if (s == "heatmap") return AugmentMode::Heatmap;
  if (s == "engage") return AugmentMode::Engage;
  throw ConfigError("unknown mode '" + s + "' (expected random, heatmap or engage)");
}

Framework parse_framework(const std::string& s) {
  if (s == "simclr") return Framework::SimCLR;
  if (s == "simsiam") return Framework::SimSiam;
  throw ConfigError("unknown framework '" + s + "' (expected simclr or simsiam)");
}

namespace {

std::string scope_name(StatsScope s) { return s == StatsScope::PerGraph ? "per-graph" : "per-batch"; }
StatsScope parse_scope(const std::string& s) {
  if (s == "per-graph") return StatsScope::PerGraph;
  if (s == "per-batch") return StatsScope::PerBatch;
  throw ConfigError("unknown stats scope '" + s + "'");
}

std::string encoder_name(EncoderKind k) { return k == EncoderKind::GCN ? "gcn" : "gin"; }
EncoderKind parse_encoder(const std::string& s) {
  if (s == "gcn") return EncoderKind::GCN;
  if (s == "gin") return EncoderKind::GIN;
  throw ConfigError("unknown encoder '" + s + "'");
}

std::vector<std::string> split_colon(const std::string& s, std::size_t max_parts) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (parts.size() + 1 < max_parts) {
    const auto pos = s.find(':', start);
    if (pos == std::string::npos) break;
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  parts.push_back(s.substr(start));
  return parts;
}

}  // namespace

DatasetSpec DatasetSpec::parse(const std::string& text) {
  const auto parts = split_colon(text, 3);
  DatasetSpec spec;
  if (parts[0] == "synthetic" && parts.size() == 2 && parts[1] == "motif") {
    spec.kind = Kind::SyntheticMotif;
  } else if (parts[0] == "tudataset" && parts.size() == 3 && !parts[1].empty()) {
    spec.kind = Kind::TuDataset;
    spec.name = parts[1];
    spec.dir = parts[2];
  } else if (parts[0] == "nodeset" && parts.size() >= 2) {
    spec.kind = Kind::NodeSet;
    spec.dir = text.substr(std::string("nodeset:").size());
  } else {
    throw ConfigError("unrecognized dataset '" + text +
                      "' (expected tudataset:NAME:DIR, nodeset:DIR or synthetic:motif)");
  }
  return spec;
}

std::string DatasetSpec::to_string() const {
  switch (kind) {
    case Kind::TuDataset: return "tudataset:" + name + ":" + dir;
    case Kind::NodeSet: return "nodeset:" + dir;
    case Kind::SyntheticMotif: return "synthetic:motif";
  }
  return "?";
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case DatasetSpec::Kind::TuDataset: return parse_tudataset(spec.dir, spec.name, TuParseOptions{spec.degree_cap});
    case DatasetSpec::Kind::NodeSet: return parse_node_dataset(spec.dir);
    case DatasetSpec::Kind::SyntheticMotif: return generate_motif_dataset(spec.motif, seed);
  }
  throw ConfigError("unknown dataset kind");
}

json RunManifest::to_json() const {
  const auto& t = train;
  return json{
      {"dataset",
       {{"spec", dataset.to_string()},
        {"degree_cap", dataset.degree_cap},
        {"motif",
         {{"num_graphs", dataset.motif.num_graphs},
          {"background_nodes", dataset.motif.background_nodes},
          {"background_edge_prob", dataset.motif.background_edge_prob},
          {"bridge_edges", dataset.motif.bridge_edges},
          {"degree_cap", dataset.motif.degree_cap}}}}},
      {"train",
       {{"framework", engage::to_string(t.framework)},
        {"tau", t.tau},
        {"m", t.m},
        {"include_self", t.include_self},
        {"augment",
         {{"mode", engage::to_string(t.augment.mode)},
          {"lambda_e", t.augment.lambda_e},
          {"lambda_f", t.augment.lambda_f},
          {"stats_scope", scope_name(t.augment.stats_scope)},
          {"p_edge", t.augment.p_edge},
          {"p_feat", t.augment.p_feat}}},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
        {"lr", t.lr},
        {"warmup_epochs", t.warmup_epochs},
        {"seed", t.seed},
        {"encoder",
         {{"kind", encoder_name(t.encoder.kind)},
          {"layers", t.encoder.layers},
          {"hidden_dim", t.encoder.hidden_dim},
          {"gin_epsilon", t.encoder.gin_epsilon},
          {"learn_epsilon", t.encoder.learn_epsilon}}},
        {"heads", {{"projector", t.heads.projector}, {"predictor", t.heads.predictor}}},
        {"stop_gradient", t.stop_gradient},
        {"index", t.index == IndexKind::Exact ? "exact" : "quantized"},
        {"index_lists", t.index_lists},
        {"index_probe", t.index_probe},
        {"kmeans_iters", t.kmeans_iters},
        {"precision", t.precision == Precision::F64 ? "f64" : "f32"},
        {"node_sample", t.node_sample}}},
      {"probe",
       {{"folds", probe.folds},
        {"l2", probe.l2},
        {"epochs", probe.epochs},
        {"lr", probe.lr},
        {"repetitions", probe.repetitions}}},
      {"out_dir", out_dir.string()},
      {"dump_explanations", dump_explanations},
      {"record_wall_time", record_wall_time},
  };
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  const auto& d = j.at("dataset");
  m.dataset = DatasetSpec::parse(d.at("spec").get<std::string>());
  m.dataset.degree_cap = d.at("degree_cap").get<int>();
  const auto& mo = d.at("motif");
  m.dataset.motif.num_graphs = mo.at("num_graphs").get<int>();
  m.dataset.motif.background_nodes = mo.at("background_nodes").get<int>();
  m.dataset.motif.background_edge_prob = mo.at("background_edge_prob").get<double>();
  m.dataset.motif.bridge_edges = mo.at("bridge_edges").get<int>();
  m.dataset.motif.degree_cap = mo.at("degree_cap").get<int>();

  const auto& t = j.at("train");
  auto& c = m.train;
  c.framework = parse_framework(t.at("framework").get<std::string>());
  c.tau = t.at("tau").get<double>();
  c.m = t.at("m").get<int>();
  c.include_self = t.at("include_self").get<bool>();
  const auto& a = t.at("augment");
  c.augment.mode = parse_mode(a.at("mode").get<std::string>());
  c.augment.lambda_e = a.at("lambda_e").get<double>();
  c.augment.lambda_f = a.at("lambda_f").get<double>();
  c.augment.stats_scope = parse_scope(a.at("stats_scope").get<std::string>());
  c.augment.p_edge = a.at("p_edge").get<double>();
  c.augment.p_feat = a.at("p_feat").get<double>();
  c.epochs = t.at("epochs").get<int>();
  c.batch_size = t.at("batch_size").get<int>();
  const auto opt = t.at("optimizer").get<std::string>();
  if (opt != "adam" && opt != "sgd") throw ConfigError("unknown optimizer '" + opt + "'");
  c.optimizer = opt == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
  c.lr = t.at("lr").get<double>();
  c.warmup_epochs = t.at("warmup_epochs").get<int>();
  c.seed = t.at("seed").get<std::uint64_t>();
  const auto& e = t.at("encoder");
  c.encoder.kind = parse_encoder(e.at("kind").get<std::string>());
  c.encoder.layers = e.at("layers").get<int>();
  c.encoder.hidden_dim = e.at("hidden_dim").get<int>();
  c.encoder.gin_epsilon = e.at("gin_epsilon").get<double>();
  c.encoder.learn_epsilon = e.at("learn_epsilon").get<bool>();
  c.heads.projector = t.at("heads").at("projector").get<std::vector<int>>();
  c.heads.predictor = t.at("heads").at("predictor").get<std::vector<int>>();
  c.stop_gradient = t.at("stop_gradient").get<bool>();
  const auto idx = t.at("index").get<std::string>();
  if (idx != "exact" && idx != "quantized") throw ConfigError("unknown index '" + idx + "'");
  c.index = idx == "exact" ? IndexKind::Exact : IndexKind::Quantized;
  c.index_lists = t.at("index_lists").get<int>();
  c.index_probe = t.at("index_probe").get<int>();
  c.kmeans_iters = t.at("kmeans_iters").get<int>();
  const auto prec = t.at("precision").get<std::string>();
  if (prec != "f64" && prec != "f32") throw ConfigError("unknown precision '" + prec + "'");
  c.precision = prec == "f64" ? Precision::F64 : Precision::F32;
  c.node_sample = t.at("node_sample").get<int>();

  const auto& p = j.at("probe");
  m.probe.folds = p.at("folds").get<int>();
  m.probe.l2 = p.at("l2").get<double>();
  m.probe.epochs = p.at("epochs").get<int>();
  m.probe.lr = p.at("lr").get<double>();
  m.probe.repetitions = p.at("repetitions").get<int>();

  m.out_dir = j.at("out_dir").get<std::string>();
  m.dump_explanations = j.at("dump_explanations").get<bool>();
  m.record_wall_time = j.at("record_wall_time").get<bool>();
  return m;
}

std::string RunManifest::run_id() const {
  auto j = to_json();
  // Where artifacts go and whether timing is recorded do not change results.
  j.erase("out_dir");
  j.erase("record_wall_time");
  j.erase("dump_explanations");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(mix64(hash_name(j.dump()))));
  return buf;
}

int env_threads() {
  const char* v = std::getenv("ENGAGE_THREADS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

namespace {

std::vector<int> probe_labels(const Dataset& ds) {
  return ds.task == Task::NodeLevel ? ds.node_labels : ds.graph_labels();
}

double mean_motif_auc(const Dataset& ds, const DatasetExplanations& ex) {
  double total = 0.0;
  for (std::size_t g = 0; g < ds.motif_nodes.size(); ++g) total += roc_auc(ex.graphs[g].psi, ds.motif_nodes[g]);
  return total / static_cast<double>(ds.motif_nodes.size());
}

}  // namespace

RunOutput run_in_memory(const RunManifest& manifest) {
  const auto start = std::chrono::steady_clock::now();
  const auto ds = load_dataset(manifest.dataset, manifest.train.seed);
  RunOutput out;
  out.record = train(ds, manifest.train);
  const auto labels = probe_labels(ds);
  out.probe = linear_probe(out.record.embeddings, labels, manifest.probe, substream_seed(manifest.train.seed, "probe"));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& t = manifest.train;
  json m{
      {"run_id", manifest.run_id()},
      {"dataset", manifest.dataset.to_string()},
      {"task", ds.task == Task::GraphLevel ? "graph" : "node"},
      {"num_graphs", ds.graphs.size()},
      {"mode", to_string(t.augment.mode)},
      {"framework", to_string(t.framework)},
      {"lambda_e", t.augment.lambda_e},
      {"lambda_f", t.augment.lambda_f},
      {"seed", t.seed},
      {"epochs", t.epochs},
      {"probe_mean_acc", out.probe.mean_accuracy},
      {"probe_std_acc", out.probe.std_accuracy},
      {"final_sparsity_mean", out.record.sparsity.back()},
      {"final_loss", out.record.loss.back()},
      {"skipped_steps", out.record.skipped_steps},
      {"edge_keep_rate", out.record.edge_keep_rate},
      {"feat_keep_rate", out.record.feat_keep_rate},
      {"wall_time_s", manifest.record_wall_time ? json(wall) : json(nullptr)},
  };
  if (!ds.motif_nodes.empty()) m["motif_auc"] = mean_motif_auc(ds, out.record.explanations);
  out.metrics = std::move(m);
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

RunOutput run(const RunManifest& manifest) {
  auto out = run_in_memory(manifest);
  fs::create_directories(manifest.out_dir);
  write_text(manifest.out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  write_text(manifest.out_dir / "metrics.json", out.metrics.dump(2) + "\n");

  std::string csv = "epoch,mean_sparsity\n";
  for (std::size_t e = 0; e < out.record.sparsity.size(); ++e) csv += std::to_string(e) + "," + fmt(out.record.sparsity[e]) + "\n";
  write_text(manifest.out_dir / "sparsity.csv", csv);

  save_checkpoint(manifest.out_dir / "checkpoint.bin", out.record.param_names, out.record.param_values);

  if (manifest.dump_explanations) {
    std::string tsv;
    const auto& graphs = out.record.explanations.graphs;
    for (std::size_t g = 0; g < graphs.size(); ++g) {
      for (Eigen::Index i = 0; i < graphs[g].psi.size(); ++i) {
        tsv += std::to_string(g) + "\t" + std::to_string(i) + "\t" + fmt(graphs[g].psi(i)) + "\t" +
               fmt(graphs[g].psi01(i)) + "\n";
      }
    }
    write_text(manifest.out_dir / "explanations.tsv", tsv);
  }
  return out;
}

void write_error(const fs::path& out_dir, const std::string& kind, const std::string& message) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream f(out_dir / "error.json");
  f << json{{"error", kind}, {"message", message}}.dump(2) << "\n";
}

int run_guarded(const RunManifest& manifest) {
  try {
    run(manifest);
    return 0;
  } catch (const ConfigError& e) {
    write_error(manifest.out_dir, "ConfigError", e.what());
    return 2;
  } catch (const ParseError& e) {
    write_error(manifest.out_dir, "ParseError", e.what());
    return 3;
  } catch (const ShapeError& e) {
    write_error(manifest.out_dir, "ShapeError", e.what());
  } catch (const NumericalError& e) {
    write_error(manifest.out_dir, "NumericalError", e.what());
  } catch (const std::exception& e) {
    write_error(manifest.out_dir, "Error", e.what());
  }
  return 1;
}

SweepResult sweep(const RunManifest& base, const std::vector<double>& lambda_e, const std::vector<double>& lambda_f,
                  const std::vector<std::uint64_t>& seeds, int workers) {
  if (lambda_e.empty() || lambda_f.empty() || seeds.empty()) throw ConfigError("sweep: empty grid");
  std::vector<RunManifest> jobs;
  for (double le : lambda_e)
    for (double lf : lambda_f)
      for (auto s : seeds) {
        RunManifest m = base;
        m.train.augment.lambda_e = le;
        m.train.augment.lambda_f = lf;
        m.train.seed = s;
        jobs.push_back(std::move(m));
      }

  SweepResult result;
  result.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        const auto out = run_in_memory(jobs[k]);
        const auto& a = jobs[k].train.augment;
        result.rows[k] = {a.lambda_e, a.lambda_f, jobs[k].train.seed, out.probe.mean_accuracy, out.probe.std_accuracy};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::map<std::pair<double, double>, std::pair<double, int>> cells;
  for (const auto& r : result.rows) {
    auto& c = cells[{r.lambda_e, r.lambda_f}];
    c.first += r.mean_accuracy;
    ++c.second;
  }
  double lo = 1e300, hi = -1e300;
  for (const auto& [key, c] : cells) {
    const double avg = c.first / c.second;
    lo = std::min(lo, avg);
    hi = std::max(hi, avg);
  }
  result.performance_gap = hi - lo;

  fs::create_directories(base.out_dir);
  std::string csv = "lambda_e,lambda_f,seed,mode,probe_mean_acc,probe_std_acc,performance_gap\n";
  for (const auto& r : result.rows) {
    csv += fmt(r.lambda_e) + "," + fmt(r.lambda_f) + "," + std::to_string(r.seed) + "," +
           to_string(base.train.augment.mode) + "," + fmt(r.mean_accuracy) + "," + fmt(r.std_accuracy) + "," +
           fmt(result.performance_gap) + "\n";
  }
  write_text(base.out_dir / "sweep.csv", csv);
  return result;
}

}  // namespace engage
