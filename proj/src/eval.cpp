#include "hsim/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "hsim/error.hpp"

namespace hsim {
namespace {

bool ranks_before(const Eigen::MatrixXd& sims, Eigen::Index q, Eigen::Index a, Eigen::Index b) {
  const double sa = sims(q, a);
  const double sb = sims(q, b);
  return sa > sb || (sa == sb && a < b);
}

}  // namespace

RecallReport recall_at_k(const RowMatrix& embeddings, std::span<const Label> labels,
                         std::span<const int> k_values, const SimilarityKind& kind) {
  const Eigen::Index n = embeddings.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "labels do not match embeddings");
  }
  if (n < 2) throw Error(ErrorKind::KTooLarge, "recall needs at least two samples");
  RecallReport report;
  report.k_values.assign(k_values.begin(), k_values.end());
  std::sort(report.k_values.begin(), report.k_values.end());
  report.k_values.erase(std::unique(report.k_values.begin(), report.k_values.end()),
                        report.k_values.end());
  for (int k : report.k_values) {
    if (k < 1 || k >= n) {
      throw Error(ErrorKind::KTooLarge, "K = " + std::to_string(k) + " needs 1 <= K < n = " +
                                            std::to_string(n));
    }
  }
  const PairwiseSimilarity sims(embeddings, kind);
  const auto& s = sims.matrix();
  std::vector<std::size_t> hits(report.k_values.size(), 0);
  for (Eigen::Index q = 0; q < n; ++q) {
    // Best-ranked same-label neighbor, then its rank among all neighbors.
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == q || labels[static_cast<std::size_t>(j)] != labels[static_cast<std::size_t>(q)]) continue;
      if (best < 0 || ranks_before(s, q, j, best)) best = j;
    }
    if (best < 0) continue;
    std::size_t rank = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != q && j != best && ranks_before(s, q, j, best)) ++rank;
    }
    for (std::size_t t = 0; t < report.k_values.size(); ++t) {
      if (rank < static_cast<std::size_t>(report.k_values[t])) ++hits[t];
    }
  }
  report.n_queries = static_cast<std::size_t>(n);
  for (auto h : hits) report.recalls.push_back(static_cast<double>(h) / static_cast<double>(n));
  return report;
}

std::vector<Eigen::Index> ranked_neighbors(const Eigen::MatrixXd& sims, Eigen::Index query,
                                           std::size_t top_k) {
  std::vector<Eigen::Index> order;
  for (Eigen::Index j = 0; j < sims.rows(); ++j) {
    if (j != query) order.push_back(j);
  }
  const auto keep = std::min(top_k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](Eigen::Index a, Eigen::Index b) { return ranks_before(sims, query, a, b); });
  order.resize(keep);
  return order;
}

std::string neighbor_dump(const RowMatrix& embeddings, std::span<const Label> labels,
                          std::span<const Eigen::Index> queries, int top_k,
                          const SimilarityKind& kind) {
  const Eigen::Index n = embeddings.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "labels do not match embeddings");
  }
  for (auto q : queries) {
    if (q < 0 || q >= n) throw Error(ErrorKind::IndexOutOfRange, "query " + std::to_string(q));
  }
  if (top_k < 1) throw Error(ErrorKind::IndexOutOfRange, "top_k must be >= 1");
  const PairwiseSimilarity sims(embeddings, kind);
  std::string out;
  char buf[160];
  for (auto q : queries) {
    const auto nbrs = ranked_neighbors(sims.matrix(), q, static_cast<std::size_t>(top_k));
    for (std::size_t r = 0; r < nbrs.size(); ++r) {
      const bool ok = labels[static_cast<std::size_t>(nbrs[r])] == labels[static_cast<std::size_t>(q)];
      std::snprintf(buf, sizeof buf, "query=%lld rank=%zu neighbor=%lld sim=%.6f %s\n",
                    static_cast<long long>(q), r + 1, static_cast<long long>(nbrs[r]),
                    sims(q, nbrs[r]), ok ? "correct" : "incorrect");
      out += buf;
    }
  }
  return out;
}

}  // namespace hsim
