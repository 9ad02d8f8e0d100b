#pragma once

// Experiment orchestration: dataset loading, train -> explain -> probe,
// artifact emission and the lambda sweep.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "engage/probe.hpp"
#include "engage/train.hpp"

namespace engage {

struct DatasetSpec {
  enum class Kind { TuDataset, NodeSet, SyntheticMotif };
  Kind kind = Kind::SyntheticMotif;
  std::string name;  // TUDataset name
  std::string dir;
  MotifSpec motif;
  int degree_cap = 50;

  /// `tudataset:NAME:DIR`, `nodeset:DIR` or `synthetic:motif`.
  static DatasetSpec parse(const std::string& text);
  std::string to_string() const;
};

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct RunManifest {
  DatasetSpec dataset;
  TrainConfig train;
  ProbeConfig probe;
  std::filesystem::path out_dir = "out";
  bool dump_explanations = false;
  bool record_wall_time = false;

  /// 16 hex digits hashing the serialized configuration (seed included).
  std::string run_id() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

struct RunOutput {
  nlohmann::json metrics;
  RunRecord record;
  ProbeResult probe;
};

/// Trains, explains and probes, then writes metrics.json, sparsity.csv,
/// manifest.json, checkpoint.bin and (optionally) explanations.tsv.
RunOutput run(const RunManifest& manifest);

/// Same pipeline without writing artifacts.
RunOutput run_in_memory(const RunManifest& manifest);

/// Runs `run` and converts failures into error.json plus an exit status:
/// 2 for configuration errors, 3 for parse errors, 1 otherwise.
int run_guarded(const RunManifest& manifest);

/// Writes error.json into `out_dir` (created if needed).
void write_error(const std::filesystem::path& out_dir, const std::string& kind, const std::string& message);

struct SweepRow {
  double lambda_e = 0.0;
  double lambda_f = 0.0;
  std::uint64_t seed = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// max - min over grid cells of the seed-averaged accuracy.
  double performance_gap = 0.0;
};

/// Every (lambda_e, lambda_f, seed) combination of `base`, dispatched to at
/// most `workers` concurrent runs. Writes sweep.csv into base.out_dir.
SweepResult sweep(const RunManifest& base, const std::vector<double>& lambda_e, const std::vector<double>& lambda_f,
                  const std::vector<std::uint64_t>& seeds, int workers);

/// ENGAGE_THREADS, defaulting to 1.
int env_threads();

std::string to_string(AugmentMode mode);
std::string to_string(Framework fw);
AugmentMode parse_mode(const std::string& s);
Framework parse_framework(const std::string& s);

}  // namespace engage
