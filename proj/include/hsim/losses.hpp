#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hsim/geometry.hpp"
#include "hsim/margins.hpp"
#include "hsim/types.hpp"

namespace hsim {

inline constexpr Eigen::Index kNoSource = -1;

// Model outputs for one mini-batch. Augmented rows carry the label of the
// sample they were derived from and point back to it through `source`.
struct EmbeddingBatch {
  RowMatrix embeddings;
  std::vector<Label> labels;
  std::vector<Eigen::Index> source;  // kNoSource for original samples
  int epoch = 0;

  Eigen::Index size() const { return embeddings.rows(); }
  bool is_anchor(Eigen::Index i) const { return source[static_cast<std::size_t>(i)] == kNoSource; }
  void validate() const;
};

struct PairSets {
  Eigen::Index anchor = 0;
  std::vector<Eigen::Index> aug;  // augmentations of the anchor
  std::vector<Eigen::Index> pos;  // same label, not augmentations
  std::vector<Eigen::Index> neg;  // different label, not augmentations
};

// One entry per original (non-augmented) sample, in batch order.
std::vector<PairSets> build_pair_sets(const EmbeddingBatch& batch);

struct LossResult {
  double value = 0.0;
  RowMatrix grads;  // d value / d embeddings, same shape as the batch
  // On/off state of every hinge in evaluation order; empty for smooth losses.
  std::vector<bool> hinge_active;
};

struct MsHyperParams {
  double aug_scale = 2.0;  // augmentation term
  double pos_scale = 2.0;  // positive term
  double neg_scale = 40.0; // negative term

  void validate() const;
};

struct ScalarLoss {
  double value;
  double d_s_ap;
  double d_s_an;
};

// [s_an - s_ap + margin]_+ with the zero subgradient at the kink.
ScalarLoss triplet_loss(double s_ap, double s_an, double margin);

// Mean over every in-batch (anchor, positive, negative) triplet.
LossResult triplet_loss(const EmbeddingBatch& batch, double margin, const SimilarityKind& kind);

// Triplet margin widened by the class compactness and divergence offsets of
// `margins`, plus a hinge pulling each augmentation above M_a.
LossResult triplet_star_loss(const EmbeddingBatch& batch, const MarginTable& margins,
                             double triplet_margin, const SimilarityKind& kind);

LossResult lifted_loss(const EmbeddingBatch& batch, double gamma, const SimilarityKind& kind);

// Margins read from the table; augmentations add [log sum e^{M_a - s}]_+.
LossResult lifted_loss(const EmbeddingBatch& batch, const MarginTable& margins,
                       const SimilarityKind& kind);

LossResult ms_loss(const EmbeddingBatch& batch, double gamma, double pos_scale, double neg_scale,
                   const SimilarityKind& kind);

LossResult ms_star_loss(const EmbeddingBatch& batch, const MarginTable& margins,
                        const MsHyperParams& hp, const SimilarityKind& kind);

enum class LossFamily { Triplet, Lifted, Ms };
enum class MarginMode { Fixed, Hierarchical };

struct LossSpec {
  LossFamily family = LossFamily::Ms;
  MarginMode mode = MarginMode::Hierarchical;
  double gamma = 0.5;
  double triplet_margin = 0.1;
  MsHyperParams ms;

  std::string family_name() const;
  std::string mode_name() const;
};

LossFamily parse_loss_family(const std::string& name);
MarginMode parse_margin_mode(const std::string& name);

// Dispatch used by the trainer. `margins` is only read in hierarchical mode.
LossResult evaluate_loss(const LossSpec& spec, const EmbeddingBatch& batch,
                         const MarginTable& margins, const SimilarityKind& kind);

using LossOp = std::function<LossResult(const EmbeddingBatch&)>;

// Max relative difference between analytic gradients and central differences
// over all embedding coordinates with |analytic| > 1e-8. Coordinates within
// 10 eps of a hinge kink are skipped.
double finite_difference_check(const LossOp& loss_op, const EmbeddingBatch& batch, double eps);

}  // namespace hsim
