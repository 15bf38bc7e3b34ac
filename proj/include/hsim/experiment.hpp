#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hsim/dataio.hpp"
#include "hsim/embedder.hpp"
#include "hsim/eval.hpp"

namespace hsim {

struct DatasetSource {
  enum class Kind { Synthetic, File };
  Kind kind = Kind::Synthetic;
  HierarchySpec hierarchy;
  std::filesystem::path path;
  FileFormat format = FileFormat::Binary;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct ExperimentConfig {
  std::string run_id = "run";
  DatasetSource dataset;
  double noise_ratio = 0.0;
  TrainConfig train;
  std::vector<int> k_values{1, 2, 4, 8};
  bool eval_every_epoch = true;
  std::vector<std::uint64_t> seeds;  // ablation grid; empty means {train.seed}
  std::filesystem::path output_dir;
  bool dump_margins = false;
  std::string source_text;  // config file contents, echoed verbatim

  std::uint64_t seed() const { return train.seed; }
  void set_seed(std::uint64_t s) { train.seed = s; }
};

// Field-level validation; throws InvalidConfig naming the offending key.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_json(const ExperimentConfig& config, int indent = 2);

struct MetricsRow {
  std::string run_id;
  std::string loss;
  std::string margin_mode;
  std::string sim_kind;
  double noise_ratio = 0.0;
  std::uint64_t seed = 0;
  std::string epoch;  // epoch number, or "final"
  std::optional<double> mean_loss;
  std::vector<double> recalls;  // ascending k
};

std::string metrics_csv_header(const std::vector<int>& k_values);
std::string metrics_csv_row(const MetricsRow& row);

struct DataSplits {
  FeatureDataset train;      // noisy labels
  FeatureDataset test;       // clean labels
  std::vector<Label> clean_train_labels;
  std::vector<bool> flipped;
};

// Generate or load, split, and corrupt the training labels.
DataSplits prepare_data(const ExperimentConfig& config);

struct RunResult {
  std::vector<MetricsRow> rows;
  RecallReport final_recall;
  std::vector<EpochRecord> history;
  MlpModel model;
  double wall_clock_seconds = 0.0;
};

// Writes metrics.csv, report.json, model.hsim, config.json and, when enabled,
// margins_epoch<N>.json under config.output_dir (skipped if it is empty).
RunResult run(const ExperimentConfig& config);

enum class AblationRow { Baseline, ClassWise, SampleWise, Full, FullEuclidean, FullHyperbolic };

const char* ablation_row_name(AblationRow row);
std::vector<AblationRow> ablation_rows();

// Row configuration derived from a base config.
ExperimentConfig ablation_config(const ExperimentConfig& base, AblationRow row, std::uint64_t seed);

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seeds;
  std::vector<int> k_values;
  // recall[row][seed][k]
  std::vector<std::vector<std::vector<double>>> recall;

  double mean_recall(AblationRow row, std::size_t k_index = 0) const;
  std::string csv() const;
};

// Runs the ablation grid over every seed; rows share seeds. Writes
// ablation.csv when config.output_dir is set.
AblationResult run_ablation(const ExperimentConfig& config);

}  // namespace hsim
