#pragma once

#include <span>
#include <string>
#include <vector>

#include "hsim/geometry.hpp"
#include "hsim/types.hpp"

namespace hsim {

struct RecallReport {
  std::vector<int> k_values;   // ascending, unique
  std::vector<double> recalls; // matching k_values
  std::size_t n_queries = 0;
};

// Every sample queries all others (itself excluded), ranked by descending
// similarity with ties broken by ascending index. A query hits at K when one
// of its top-K neighbors shares its label.
RecallReport recall_at_k(const RowMatrix& embeddings, std::span<const Label> labels,
                         std::span<const int> k_values, const SimilarityKind& kind);

// Neighbors of `query` in rank order (self excluded), at most `top_k`.
std::vector<Eigen::Index> ranked_neighbors(const Eigen::MatrixXd& sims, Eigen::Index query,
                                           std::size_t top_k);

// One line per (query, neighbor):
//   query=<q> rank=<r> neighbor=<j> sim=<s, 6 decimals> <correct|incorrect>
std::string neighbor_dump(const RowMatrix& embeddings, std::span<const Label> labels,
                          std::span<const Eigen::Index> queries, int top_k,
                          const SimilarityKind& kind);

}  // namespace hsim
