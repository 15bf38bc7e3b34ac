#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hsim/geometry.hpp"
#include "hsim/losses.hpp"
#include "hsim/margins.hpp"
#include "hsim/perturb.hpp"
#include "hsim/types.hpp"

namespace hsim {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Affine layers with a rectifier between consecutive layers (none after the
// last one).
class MlpModel {
 public:
  MlpModel() = default;
  // He-uniform weights, zero biases. dims = {input, hidden..., output}.
  MlpModel(std::span<const int> dims, std::uint64_t seed);
  explicit MlpModel(std::vector<DenseLayer> layers);

  static MlpModel zeros(std::span<const int> dims);

  int input_dim() const;
  int output_dim() const;
  std::vector<int> dims() const;
  std::size_t parameter_count() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

struct ForwardCache {
  std::vector<RowMatrix> inputs;  // input of each layer
  std::vector<RowMatrix> pre;     // pre-activation output of each layer
};

using ModelGrads = std::vector<DenseLayer>;

RowMatrix forward(const MlpModel& model, const RowMatrix& features, ForwardCache* cache = nullptr);

// Reverse pass for the batch recorded in `cache`; the rectifier's subgradient
// at 0 is 0.
ModelGrads backward(const MlpModel& model, const ForwardCache& cache, const RowMatrix& upstream);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct AdamState {
  AdamConfig config;
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  long step = 0;

  AdamState() = default;
  AdamState(const MlpModel& model, const AdamConfig& config);
};

// Decoupled weight decay (p *= 1 - lr * wd) followed by the bias-corrected
// Adam update.
void adam_step(AdamState& state, MlpModel& model, const ModelGrads& grads);

// Augmentation strengths as fractions of the mean training-feature norm; the
// per-coordinate scale is fraction * mean_norm / sqrt(d).
struct RelativeAugment {
  double weak = 0.05;
  double strong = 0.15;
  double mask_frac = 0.25;

  AugmentPolicy resolve(double mean_norm, Eigen::Index dim) const;
};

struct TrainConfig {
  int epochs = 30;
  int classes_per_batch = 4;
  int samples_per_class = 4;
  int hidden_dim = 128;
  int output_dim = 32;
  LossSpec loss;
  InterTransform inter = InterTransform::negation();
  ConsistencyMode consistency = ConsistencyMode::Min;
  // Ablation switches for hierarchical mode.
  bool class_divergence = true;
  bool sample_consistency = true;
  SimilarityKind similarity;
  RelativeAugment augment;
  AdamConfig adam;
  std::size_t stats_cap_per_class = 256;
  std::uint64_t seed = 0;

  bool hierarchical() const { return loss.mode == MarginMode::Hierarchical; }
  bool uses_augmentation() const { return hierarchical() && sample_consistency; }
  void validate() const;
};

// Training split as seen by the trainer: features with (possibly noisy) labels.
struct TrainingSet {
  const RowMatrix& features;
  std::span<const Label> labels;
  int num_classes;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t batches = 0;
};

// Class-balanced mini-batches of sample indices for one epoch.
std::vector<std::vector<std::size_t>> sample_batches(std::span<const Label> labels, int num_classes,
                                                     const TrainConfig& config, int epoch);

EpochStats train_epoch(MlpModel& model, AdamState& adam, const TrainingSet& data,
                       const MarginTable& margins, const TrainConfig& config, int epoch);

// Margins for `epoch` from the model's current embeddings of the training set.
MarginTable compute_epoch_margins(const MlpModel& model, const TrainingSet& data,
                                  const TrainConfig& config, int epoch);

struct MarginSummary {
  double mean_pos = 0.0;
  double mean_neg = 0.0;  // off-diagonal
  double mean_aug = 0.0;
};

MarginSummary summarize(const MarginTable& table);

struct EpochRecord {
  int epoch = 0;
  EpochStats stats;
  std::optional<MarginSummary> margins;
};

struct FitObserver {
  std::function<void(const MarginTable&)> on_margins;
  std::function<void(const EpochRecord&, const MlpModel&)> on_epoch;
};

std::vector<EpochRecord> fit(MlpModel& model, const TrainingSet& data, const TrainConfig& config,
                             const FitObserver& observer = {});

MlpModel make_model(int input_dim, const TrainConfig& config);

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace hsim
