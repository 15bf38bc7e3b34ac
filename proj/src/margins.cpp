#include "hsim/margins.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "hsim/error.hpp"

namespace hsim {

double InterTransform::apply(double s) const {
  return kind == Kind::Negation ? -s : 1.0 / std::max(s, epsilon);
}

std::string InterTransform::name() const {
  return kind == Kind::Negation ? "negation" : "reciprocal";
}

InterTransform InterTransform::parse(const std::string& name, double eps) {
  if (name == "negation") return negation();
  if (name == "reciprocal") {
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidConfig, "reciprocal epsilon must be positive");
    return reciprocal(eps);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown inter transform '" + name + "'");
}

MarginTable MarginTable::baseline(int num_classes, double gamma, int epoch, double aug) {
  MarginTable t;
  t.m_pos.assign(static_cast<std::size_t>(num_classes), gamma);
  t.m_neg = Eigen::MatrixXd::Constant(num_classes, num_classes, gamma);
  t.m_aug.assign(static_cast<std::size_t>(num_classes), aug);
  t.gamma = gamma;
  t.epoch = epoch;
  return t;
}

MarginTable MarginTable::without_class_divergence() const {
  MarginTable t = *this;
  std::fill(t.m_pos.begin(), t.m_pos.end(), gamma);
  t.m_neg.setConstant(gamma);
  return t;
}

void MarginTable::validate(const SimilarityKind& kind) const {
  const int c = num_classes();
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
  if (m_neg.rows() != c || m_neg.cols() != c || m_aug.size() != m_pos.size()) {
    fail("margin table shapes disagree");
  }
  for (int a = 0; a < c; ++a) {
    const double mp = m_pos[static_cast<std::size_t>(a)];
    if (!(mp >= gamma && mp <= gamma + kRescaleTop)) fail("m_pos out of [gamma, gamma + 0.2]");
    const double ma = m_aug[static_cast<std::size_t>(a)];
    if (kind.mode == SimilarityMode::Cosine && !(ma >= -1.0 && ma <= 1.0)) fail("m_aug out of [-1, 1]");
    if (kind.mode == SimilarityMode::NegExpPoincare && !(ma > 0.0 && ma <= 1.0)) fail("m_aug out of (0, 1]");
    for (int b = 0; b < c; ++b) {
      const double mn = m_neg(a, b);
      if (!(mn >= gamma - kRescaleTop && mn <= gamma)) fail("m_neg out of [gamma - 0.2, gamma]");
      if (mn != m_neg(b, a)) fail("m_neg is not symmetric");
    }
  }
}

MarginTable build_margin_table(const ClassSimilarityMatrix& stats,
                               std::span<const double> consistency, const MarginConfig& config) {
  const int c = stats.num_classes();
  if (consistency.size() != static_cast<std::size_t>(c)) {
    throw Error(ErrorKind::DimensionMismatch, "consistency values do not match class count");
  }
  if (!(config.gamma > 0.0)) throw Error(ErrorKind::InvalidConfig, "gamma must be positive");
  MarginTable t;
  t.gamma = config.gamma;
  t.epoch = stats.epoch;
  t.inter_transform = config.inter;

  std::vector<double> intra(static_cast<std::size_t>(c));
  for (int a = 0; a < c; ++a) intra[static_cast<std::size_t>(a)] = stats.entries(a, a);
  const auto intra_hat = rescale_to_unit_fifth(intra);
  t.m_pos.resize(intra.size());
  for (std::size_t a = 0; a < intra.size(); ++a) t.m_pos[a] = config.gamma + intra_hat.values[a];

  std::vector<double> inter;
  inter.reserve(static_cast<std::size_t>(c) * static_cast<std::size_t>(c - 1) / 2);
  for (int a = 0; a < c; ++a) {
    for (int b = a + 1; b < c; ++b) inter.push_back(config.inter.apply(stats.entries(a, b)));
  }
  const auto inter_hat = rescale_to_unit_fifth(inter);
  t.m_neg = Eigen::MatrixXd::Constant(c, c, config.gamma);
  std::size_t k = 0;
  for (int a = 0; a < c; ++a) {
    for (int b = a + 1; b < c; ++b, ++k) {
      t.m_neg(a, b) = config.gamma - inter_hat.values[k];
      t.m_neg(b, a) = t.m_neg(a, b);
    }
  }
  t.m_aug.assign(consistency.begin(), consistency.end());
  return t;
}

MarginTable build_margin_table(const ClassSimilarityMatrix& stats, const RowMatrix& embeddings,
                               std::span<const Label> labels, const SimilarityKind& kind,
                               const MarginConfig& config) {
  const int c = stats.num_classes();
  const auto which =
      config.consistency == ConsistencyMode::Min ? IntraExtreme::Min : IntraExtreme::Max;
  std::vector<double> consistency(static_cast<std::size_t>(c));
  for (int a = 0; a < c; ++a) {
    consistency[static_cast<std::size_t>(a)] =
        intra_similarity_extreme(embeddings, labels, a, kind, which);
  }
  auto table = build_margin_table(stats, consistency, config);
  table.validate(kind);
  return table;
}

std::string margin_table_json(const MarginTable& table, int indent) {
  nlohmann::json j;
  j["epoch"] = table.epoch;
  j["gamma"] = table.gamma;
  j["num_classes"] = table.num_classes();
  j["inter_transform"] = table.inter_transform.name();
  j["m_pos"] = table.m_pos;
  j["m_aug"] = table.m_aug;
  std::vector<double> upper;
  for (int a = 0; a < table.num_classes(); ++a) {
    for (int b = a + 1; b < table.num_classes(); ++b) upper.push_back(table.m_neg(a, b));
  }
  j["m_neg_upper"] = upper;
  return j.dump(indent);
}

}  // namespace hsim
