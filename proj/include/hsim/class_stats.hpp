#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hsim/geometry.hpp"
#include "hsim/types.hpp"

namespace hsim {

// Average intra-class (diagonal) and inter-class (off-diagonal) similarity.
struct ClassSimilarityMatrix {
  Eigen::MatrixXd entries;
  std::vector<std::size_t> class_sizes;
  int epoch = 0;

  int num_classes() const { return static_cast<int>(entries.rows()); }
};

// Values mapped affinely onto [0, 0.2]. `source_order` is the ascending
// argsort of the input, which the mapping preserves.
struct RescaledSet {
  std::vector<double> values;
  std::vector<std::size_t> source_order;
};

inline constexpr double kRescaleTop = 0.2;

// Per-class sample lists in ascending index order; throws EmptyClass when a
// class in [0, num_classes) has no member.
std::vector<std::vector<Eigen::Index>> members_by_class(std::span<const Label> labels,
                                                        int num_classes);

ClassSimilarityMatrix class_similarity_matrix(const RowMatrix& embeddings,
                                              std::span<const Label> labels, int num_classes,
                                              const SimilarityKind& kind, int epoch = 0);

// Same statistic from precomputed pairwise similarities.
ClassSimilarityMatrix class_similarity_matrix(const PairwiseSimilarity& sims,
                                              std::span<const Label> labels, int num_classes,
                                              int epoch = 0);

RescaledSet rescale_to_unit_fifth(std::span<const double> values);

enum class IntraExtreme { Min, Max };

// Extreme pairwise similarity inside one class. Singletons return the
// self-similarity of the kind (1.0 for cosine and exp(-d)).
double intra_similarity_extreme(const RowMatrix& embeddings, std::span<const Label> labels,
                                Label class_id, const SimilarityKind& kind, IntraExtreme which);

inline double min_intra_similarity(const RowMatrix& embeddings, std::span<const Label> labels,
                                   Label class_id, const SimilarityKind& kind) {
  return intra_similarity_extreme(embeddings, labels, class_id, kind, IntraExtreme::Min);
}

// Extreme intra-class similarity for every class from precomputed pairwise
// similarities.
std::vector<double> intra_similarity_extremes(const PairwiseSimilarity& sims,
                                              std::span<const Label> labels, int num_classes,
                                              IntraExtreme which);

}  // namespace hsim
