#pragma once

#include <span>
#include <string>
#include <vector>

#include "hsim/class_stats.hpp"
#include "hsim/geometry.hpp"

namespace hsim {

// How the inter-class similarity set is turned into a set whose rescaled
// values grow as classes become more dissimilar.
struct InterTransform {
  enum class Kind { Reciprocal, Negation };
  Kind kind = Kind::Negation;
  double epsilon = 1e-3;  // Reciprocal clamp: 1 / max(S_ab, epsilon)

  static InterTransform reciprocal(double eps = 1e-3) { return {Kind::Reciprocal, eps}; }
  static InterTransform negation() { return {Kind::Negation, 1e-3}; }

  double apply(double s) const;
  std::string name() const;
  static InterTransform parse(const std::string& name, double eps);
};

// Which intra-class pair similarity becomes the augmentation margin.
enum class ConsistencyMode { Min, Max };

struct MarginConfig {
  double gamma = 0.5;
  InterTransform inter = InterTransform::negation();
  ConsistencyMode consistency = ConsistencyMode::Min;
};

struct MarginTable {
  std::vector<double> m_pos;  // per class
  Eigen::MatrixXd m_neg;      // per class pair, symmetric; diagonal holds gamma
  std::vector<double> m_aug;  // per class
  double gamma = 0.5;
  int epoch = 0;
  InterTransform inter_transform;

  int num_classes() const { return static_cast<int>(m_pos.size()); }

  // Fixed-margin table: M_p = M_n = gamma, M_a = `aug`.
  static MarginTable baseline(int num_classes, double gamma, int epoch, double aug = 1.0);

  // Copy with the class-wise divergence part reset to gamma.
  MarginTable without_class_divergence() const;

  // Throws InvalidSpec if a bound or the symmetry of m_neg is violated.
  void validate(const SimilarityKind& kind) const;
};

MarginTable build_margin_table(const ClassSimilarityMatrix& stats,
                               std::span<const double> consistency, const MarginConfig& config);

MarginTable build_margin_table(const ClassSimilarityMatrix& stats, const RowMatrix& embeddings,
                               std::span<const Label> labels, const SimilarityKind& kind,
                               const MarginConfig& config);

// Diagnostic dump: per-class arrays and the pair table as the row-major upper
// triangle (a < b).
std::string margin_table_json(const MarginTable& table, int indent = 2);

}  // namespace hsim
