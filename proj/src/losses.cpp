#include "hsim/losses.hpp"

#include <algorithm>
#include <cmath>

#include "hsim/error.hpp"

namespace hsim {
namespace {

// log(1 + sum_j e^{a_j}) with max-shift; `weights` receives d/da_j.
double log1p_sum_exp(const std::vector<double>& a, std::vector<double>& weights) {
  weights.resize(a.size());
  if (a.empty()) return 0.0;
  const double m = std::max(0.0, *std::max_element(a.begin(), a.end()));
  double z = std::exp(-m);
  for (std::size_t j = 0; j < a.size(); ++j) {
    weights[j] = std::exp(a[j] - m);
    z += weights[j];
  }
  for (double& w : weights) w /= z;
  return m + std::log(z);
}

// log(sum_j e^{a_j}) with max-shift; `weights` receives the softmax.
double log_sum_exp(const std::vector<double>& a, std::vector<double>& weights) {
  weights.resize(a.size());
  const double m = *std::max_element(a.begin(), a.end());
  double z = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    weights[j] = std::exp(a[j] - m);
    z += weights[j];
  }
  for (double& w : weights) w /= z;
  return m + std::log(z);
}

std::size_t cls(const EmbeddingBatch& b, Eigen::Index i) {
  return static_cast<std::size_t>(b.labels[static_cast<std::size_t>(i)]);
}

void require_anchors(const std::vector<PairSets>& sets) {
  if (sets.empty()) throw Error(ErrorKind::EmptyBatch, "batch has no anchor samples");
}

void require_table(const EmbeddingBatch& batch, const MarginTable& margins) {
  if (margins.epoch != batch.epoch) {
    throw Error(ErrorKind::StaleMarginTable, "margin table epoch " + std::to_string(margins.epoch) +
                                                 " used at epoch " + std::to_string(batch.epoch));
  }
  for (Label l : batch.labels) {
    if (l >= margins.num_classes()) {
      throw Error(ErrorKind::IndexOutOfRange, "label " + std::to_string(l) + " has no margins");
    }
  }
}

LossResult finish(double value, const PairwiseSimilarity& sims, std::vector<bool> hinges = {}) {
  return {value, sims.pullback(), std::move(hinges)};
}

}  // namespace

void EmbeddingBatch::validate() const {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n || source.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "batch labels/source do not match embeddings");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) throw Error(ErrorKind::IndexOutOfRange, "negative label in batch");
    const auto s = source[i];
    if (s == kNoSource) continue;
    if (s < 0 || static_cast<std::size_t>(s) >= n || source[static_cast<std::size_t>(s)] != kNoSource) {
      throw Error(ErrorKind::IndexOutOfRange, "augmentation source must be an original sample");
    }
    if (labels[static_cast<std::size_t>(s)] != labels[i]) {
      throw Error(ErrorKind::InvalidSpec, "augmentation label differs from its source");
    }
  }
}

std::vector<PairSets> build_pair_sets(const EmbeddingBatch& batch) {
  batch.validate();
  const Eigen::Index n = batch.size();
  std::vector<PairSets> sets;
  std::vector<std::size_t> slot(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!batch.is_anchor(i)) continue;
    slot[static_cast<std::size_t>(i)] = sets.size();
    PairSets p;
    p.anchor = i;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || !batch.is_anchor(j)) continue;
      (batch.labels[static_cast<std::size_t>(j)] == batch.labels[static_cast<std::size_t>(i)] ? p.pos
                                                                                             : p.neg)
          .push_back(j);
    }
    sets.push_back(std::move(p));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (batch.is_anchor(j)) continue;
    sets[slot[static_cast<std::size_t>(batch.source[static_cast<std::size_t>(j)])]].aug.push_back(j);
  }
  return sets;
}

void MsHyperParams::validate() const {
  if (!(aug_scale > 0.0 && pos_scale > 0.0 && neg_scale > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "MS scales must be strictly positive");
  }
}

ScalarLoss triplet_loss(double s_ap, double s_an, double margin) {
  const double h = s_an - s_ap + margin;
  if (h > 0.0) return {h, -1.0, 1.0};
  return {0.0, 0.0, 0.0};
}

namespace {

LossResult triplet_impl(const EmbeddingBatch& batch, const MarginTable* margins,
                        double triplet_margin, const SimilarityKind& kind) {
  const auto sets = build_pair_sets(batch);
  require_anchors(sets);
  PairwiseSimilarity sims(batch.embeddings, kind);
  std::vector<bool> hinges;

  std::size_t triplets = 0;
  for (const auto& p : sets) triplets += p.pos.size() * p.neg.size();
  double value = 0.0;
  if (triplets > 0) {
    const double inv = 1.0 / static_cast<double>(triplets);
    double sum = 0.0;
    for (const auto& p : sets) {
      const auto a = cls(batch, p.anchor);
      for (auto j : p.pos) {
        for (auto k : p.neg) {
          double margin = triplet_margin;
          if (margins) {
            margin += (margins->m_pos[a] - margins->gamma) +
                      (margins->gamma - margins->m_neg(static_cast<Eigen::Index>(a),
                                                       static_cast<Eigen::Index>(cls(batch, k))));
          }
          const auto t = triplet_loss(sims(p.anchor, j), sims(p.anchor, k), margin);
          hinges.push_back(t.value > 0.0);
          sum += t.value;
          sims.add_gradient(p.anchor, j, inv * t.d_s_ap);
          sims.add_gradient(p.anchor, k, inv * t.d_s_an);
        }
      }
    }
    value = sum * inv;
  }

  if (margins) {
    std::size_t aug_pairs = 0;
    for (const auto& p : sets) aug_pairs += p.aug.size();
    if (aug_pairs > 0) {
      const double inv = 1.0 / static_cast<double>(aug_pairs);
      double sum = 0.0;
      for (const auto& p : sets) {
        const double m_aug = margins->m_aug[cls(batch, p.anchor)];
        for (auto j : p.aug) {
          const double h = m_aug - sims(p.anchor, j);
          hinges.push_back(h > 0.0);
          if (h > 0.0) {
            sum += h;
            sims.add_gradient(p.anchor, j, -inv);
          }
        }
      }
      value += sum * inv;
    }
  }
  return finish(value, sims, std::move(hinges));
}

LossResult lifted_impl(const EmbeddingBatch& batch, const MarginTable& margins,
                       bool with_aug, const SimilarityKind& kind) {
  const auto sets = build_pair_sets(batch);
  require_anchors(sets);
  PairwiseSimilarity sims(batch.embeddings, kind);
  std::vector<bool> hinges;
  std::vector<double> a_pos, a_neg, w_pos, w_neg;

  std::size_t valid = 0;
  std::size_t with_augs = 0;
  for (const auto& p : sets) {
    valid += (!p.pos.empty() && !p.neg.empty()) ? 1 : 0;
    with_augs += (with_aug && !p.aug.empty()) ? 1 : 0;
  }
  double value = 0.0;
  for (const auto& p : sets) {
    const auto a = cls(batch, p.anchor);
    if (valid > 0 && !p.pos.empty() && !p.neg.empty()) {
      const double inv = 1.0 / static_cast<double>(valid);
      a_pos.clear();
      a_neg.clear();
      for (auto j : p.pos) a_pos.push_back(margins.m_pos[a] - sims(p.anchor, j));
      for (auto k : p.neg) {
        a_neg.push_back(sims(p.anchor, k) -
                        margins.m_neg(static_cast<Eigen::Index>(a),
                                      static_cast<Eigen::Index>(cls(batch, k))));
      }
      const double term = log_sum_exp(a_pos, w_pos) + log_sum_exp(a_neg, w_neg);
      hinges.push_back(term > 0.0);
      if (term > 0.0) {
        value += inv * term;
        for (std::size_t t = 0; t < p.pos.size(); ++t) sims.add_gradient(p.anchor, p.pos[t], -inv * w_pos[t]);
        for (std::size_t t = 0; t < p.neg.size(); ++t) sims.add_gradient(p.anchor, p.neg[t], inv * w_neg[t]);
      }
    }
    if (with_augs > 0 && !p.aug.empty()) {
      const double inv = 1.0 / static_cast<double>(with_augs);
      a_pos.clear();
      for (auto j : p.aug) a_pos.push_back(margins.m_aug[a] - sims(p.anchor, j));
      const double term = log_sum_exp(a_pos, w_pos);
      hinges.push_back(term > 0.0);
      if (term > 0.0) {
        value += inv * term;
        for (std::size_t t = 0; t < p.aug.size(); ++t) sims.add_gradient(p.anchor, p.aug[t], -inv * w_pos[t]);
      }
    }
  }
  return finish(value, sims, std::move(hinges));
}

}  // namespace

LossResult triplet_loss(const EmbeddingBatch& batch, double margin, const SimilarityKind& kind) {
  return triplet_impl(batch, nullptr, margin, kind);
}

LossResult triplet_star_loss(const EmbeddingBatch& batch, const MarginTable& margins,
                             double triplet_margin, const SimilarityKind& kind) {
  require_table(batch, margins);
  return triplet_impl(batch, &margins, triplet_margin, kind);
}

LossResult lifted_loss(const EmbeddingBatch& batch, double gamma, const SimilarityKind& kind) {
  int c = 1;
  for (Label l : batch.labels) c = std::max(c, l + 1);
  return lifted_impl(batch, MarginTable::baseline(c, gamma, batch.epoch), false, kind);
}

LossResult lifted_loss(const EmbeddingBatch& batch, const MarginTable& margins,
                       const SimilarityKind& kind) {
  require_table(batch, margins);
  return lifted_impl(batch, margins, true, kind);
}

LossResult ms_loss(const EmbeddingBatch& batch, double gamma, double pos_scale, double neg_scale,
                   const SimilarityKind& kind) {
  MsHyperParams{1.0, pos_scale, neg_scale}.validate();
  const auto sets = build_pair_sets(batch);
  require_anchors(sets);
  PairwiseSimilarity sims(batch.embeddings, kind);
  const double inv_n = 1.0 / static_cast<double>(sets.size());
  std::vector<double> a, w;
  double sum = 0.0;
  for (const auto& p : sets) {
    a.clear();
    for (auto j : p.pos) a.push_back(-pos_scale * (sims(p.anchor, j) - gamma));
    sum += log1p_sum_exp(a, w) / pos_scale;
    for (std::size_t t = 0; t < p.pos.size(); ++t) sims.add_gradient(p.anchor, p.pos[t], -inv_n * w[t]);

    a.clear();
    for (auto k : p.neg) a.push_back(neg_scale * (sims(p.anchor, k) - gamma));
    sum += log1p_sum_exp(a, w) / neg_scale;
    for (std::size_t t = 0; t < p.neg.size(); ++t) sims.add_gradient(p.anchor, p.neg[t], inv_n * w[t]);
  }
  return finish(sum * inv_n, sims);
}

LossResult ms_star_loss(const EmbeddingBatch& batch, const MarginTable& margins,
                        const MsHyperParams& hp, const SimilarityKind& kind) {
  hp.validate();
  require_table(batch, margins);
  const auto sets = build_pair_sets(batch);
  require_anchors(sets);
  PairwiseSimilarity sims(batch.embeddings, kind);
  const double inv_n = 1.0 / static_cast<double>(sets.size());
  std::vector<double> a, w;
  double sum = 0.0;
  for (const auto& p : sets) {
    const auto c = cls(batch, p.anchor);

    a.clear();
    for (auto j : p.aug) a.push_back(-hp.aug_scale * (sims(p.anchor, j) - margins.m_aug[c]));
    sum += log1p_sum_exp(a, w) / hp.aug_scale;
    for (std::size_t t = 0; t < p.aug.size(); ++t) sims.add_gradient(p.anchor, p.aug[t], -inv_n * w[t]);

    a.clear();
    for (auto j : p.pos) a.push_back(-hp.pos_scale * (sims(p.anchor, j) - margins.m_pos[c]));
    sum += log1p_sum_exp(a, w) / hp.pos_scale;
    for (std::size_t t = 0; t < p.pos.size(); ++t) sims.add_gradient(p.anchor, p.pos[t], -inv_n * w[t]);

    a.clear();
    for (auto k : p.neg) {
      const double m_neg =
          margins.m_neg(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(cls(batch, k)));
      a.push_back(hp.neg_scale * (sims(p.anchor, k) - m_neg));
    }
    sum += log1p_sum_exp(a, w) / hp.neg_scale;
    for (std::size_t t = 0; t < p.neg.size(); ++t) sims.add_gradient(p.anchor, p.neg[t], inv_n * w[t]);
  }
  return finish(sum * inv_n, sims);
}

std::string LossSpec::family_name() const {
  switch (family) {
    case LossFamily::Triplet: return "triplet";
    case LossFamily::Lifted: return "lifted";
    case LossFamily::Ms: return "ms";
  }
  return "unknown";
}

std::string LossSpec::mode_name() const {
  return mode == MarginMode::Fixed ? "fixed" : "hierarchical";
}

LossFamily parse_loss_family(const std::string& name) {
  if (name == "triplet") return LossFamily::Triplet;
  if (name == "lifted") return LossFamily::Lifted;
  if (name == "ms") return LossFamily::Ms;
  throw Error(ErrorKind::InvalidConfig, "unknown loss '" + name + "'");
}

MarginMode parse_margin_mode(const std::string& name) {
  if (name == "fixed") return MarginMode::Fixed;
  if (name == "hierarchical") return MarginMode::Hierarchical;
  throw Error(ErrorKind::InvalidConfig, "unknown margin mode '" + name + "'");
}

LossResult evaluate_loss(const LossSpec& spec, const EmbeddingBatch& batch,
                         const MarginTable& margins, const SimilarityKind& kind) {
  const bool fixed = spec.mode == MarginMode::Fixed;
  switch (spec.family) {
    case LossFamily::Triplet:
      return fixed ? triplet_loss(batch, spec.triplet_margin, kind)
                   : triplet_star_loss(batch, margins, spec.triplet_margin, kind);
    case LossFamily::Lifted:
      return fixed ? lifted_loss(batch, spec.gamma, kind) : lifted_loss(batch, margins, kind);
    case LossFamily::Ms:
      return fixed ? ms_loss(batch, spec.gamma, spec.ms.pos_scale, spec.ms.neg_scale, kind)
                   : ms_star_loss(batch, margins, spec.ms, kind);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown loss family");
}

double finite_difference_check(const LossOp& loss_op, const EmbeddingBatch& batch, double eps) {
  const LossResult base = loss_op(batch);
  EmbeddingBatch probe = batch;
  auto eval_at = [&](Eigen::Index r, Eigen::Index k, double delta) {
    probe.embeddings(r, k) = batch.embeddings(r, k) + delta;
    auto out = loss_op(probe);
    probe.embeddings(r, k) = batch.embeddings(r, k);
    return out;
  };
  double worst = 0.0;
  for (Eigen::Index r = 0; r < batch.size(); ++r) {
    for (Eigen::Index k = 0; k < batch.embeddings.cols(); ++k) {
      const double analytic = base.grads(r, k);
      if (std::abs(analytic) <= 1e-8) continue;
      const auto plus = eval_at(r, k, eps);
      const auto minus = eval_at(r, k, -eps);
      if (!base.hinge_active.empty()) {
        if (plus.hinge_active != base.hinge_active || minus.hinge_active != base.hinge_active ||
            eval_at(r, k, 10 * eps).hinge_active != base.hinge_active ||
            eval_at(r, k, -10 * eps).hinge_active != base.hinge_active) {
          continue;
        }
      }
      const double numeric = (plus.value - minus.value) / (2.0 * eps);
      // The 1e-6 floor keeps cancellation noise in the difference quotient from
      // dominating coordinates whose gradient is barely above the cutoff.
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace hsim
