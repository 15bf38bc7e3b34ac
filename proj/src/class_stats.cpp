#include "hsim/class_stats.hpp"

#include <algorithm>
#include <numeric>

#include "hsim/error.hpp"

namespace hsim {

std::vector<std::vector<Eigen::Index>> members_by_class(std::span<const Label> labels,
                                                        int num_classes) {
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw Error(ErrorKind::IndexOutOfRange, "label " + std::to_string(labels[i]) +
                                                  " outside [0, " + std::to_string(num_classes) +
                                                  ")");
    }
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  for (int a = 0; a < num_classes; ++a) {
    if (members[static_cast<std::size_t>(a)].empty()) {
      throw Error(ErrorKind::EmptyClass, "class " + std::to_string(a) + " has no samples");
    }
  }
  return members;
}

ClassSimilarityMatrix class_similarity_matrix(const PairwiseSimilarity& sims,
                                              std::span<const Label> labels, int num_classes,
                                              int epoch) {
  if (static_cast<std::size_t>(sims.size()) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "labels do not match embeddings");
  }
  const auto members = members_by_class(labels, num_classes);
  ClassSimilarityMatrix out;
  out.epoch = epoch;
  out.entries.resize(num_classes, num_classes);
  out.class_sizes.resize(static_cast<std::size_t>(num_classes));
  for (int a = 0; a < num_classes; ++a) {
    const auto& ca = members[static_cast<std::size_t>(a)];
    const auto na = ca.size();
    out.class_sizes[static_cast<std::size_t>(a)] = na;
    if (na == 1) {
      out.entries(a, a) = sims(ca[0], ca[0]);
    } else {
      double sum = 0.0;
      for (std::size_t p = 0; p < na; ++p) {
        for (std::size_t q = p + 1; q < na; ++q) sum += sims(ca[p], ca[q]);
      }
      const double n = static_cast<double>(na);
      out.entries(a, a) = 2.0 * sum / (n * n - n);
    }
    for (int b = a + 1; b < num_classes; ++b) {
      const auto& cb = members[static_cast<std::size_t>(b)];
      double sum = 0.0;
      for (auto i : ca) {
        for (auto j : cb) sum += sims(i, j);
      }
      const double v = sum / (static_cast<double>(na) * static_cast<double>(cb.size()));
      out.entries(a, b) = v;
      out.entries(b, a) = v;
    }
  }
  return out;
}

ClassSimilarityMatrix class_similarity_matrix(const RowMatrix& embeddings,
                                              std::span<const Label> labels, int num_classes,
                                              const SimilarityKind& kind, int epoch) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "labels do not match embeddings");
  }
  members_by_class(labels, num_classes);
  return class_similarity_matrix(PairwiseSimilarity(embeddings, kind), labels, num_classes, epoch);
}

RescaledSet rescale_to_unit_fifth(std::span<const double> values) {
  RescaledSet out;
  out.values.assign(values.size(), 0.0);
  out.source_order.resize(values.size());
  std::iota(out.source_order.begin(), out.source_order.end(), std::size_t{0});
  std::stable_sort(out.source_order.begin(), out.source_order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    // (v - lo) / range is exactly 0 and 1 at the endpoints.
    out.values[i] = (values[i] - *lo) / range * kRescaleTop;
  }
  return out;
}

double intra_similarity_extreme(const RowMatrix& embeddings, std::span<const Label> labels,
                                Label class_id, const SimilarityKind& kind, IntraExtreme which) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "labels do not match embeddings");
  }
  std::vector<Eigen::Index> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == class_id) members.push_back(static_cast<Eigen::Index>(i));
  }
  if (members.empty()) {
    throw Error(ErrorKind::EmptyClass, "class " + std::to_string(class_id) + " has no samples");
  }
  if (members.size() == 1) return self_similarity(kind);
  bool first = true;
  double best = 0.0;
  for (std::size_t p = 0; p < members.size(); ++p) {
    for (std::size_t q = p + 1; q < members.size(); ++q) {
      const double s = embedding_similarity(row_span(embeddings, members[p]),
                                            row_span(embeddings, members[q]), kind);
      if (first || (which == IntraExtreme::Min ? s < best : s > best)) best = s;
      first = false;
    }
  }
  return best;
}

std::vector<double> intra_similarity_extremes(const PairwiseSimilarity& sims,
                                              std::span<const Label> labels, int num_classes,
                                              IntraExtreme which) {
  const auto members = members_by_class(labels, num_classes);
  std::vector<double> out;
  out.reserve(members.size());
  for (const auto& ca : members) {
    if (ca.size() == 1) {
      out.push_back(sims(ca[0], ca[0]));
      continue;
    }
    double best = sims(ca[0], ca[1]);
    for (std::size_t p = 0; p < ca.size(); ++p) {
      for (std::size_t q = p + 1; q < ca.size(); ++q) {
        const double s = sims(ca[p], ca[q]);
        best = which == IntraExtreme::Min ? std::min(best, s) : std::max(best, s);
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace hsim
