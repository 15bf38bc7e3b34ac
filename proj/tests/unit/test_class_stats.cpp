#include <doctest.h>

#include <algorithm>
#include <vector>

#include "hsim/class_stats.hpp"
#include "hsim/error.hpp"
#include "test_support.hpp"

using namespace hsim;

namespace {

RowMatrix rows(std::initializer_list<std::initializer_list<double>> values) {
  RowMatrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : values) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("class_similarity_matrix examples") {
  const auto cos = SimilarityKind::cosine();
  {
    const std::vector<Label> labels{0, 0};
    const auto s = class_similarity_matrix(rows({{1, 0}, {1, 0}}), labels, 1, cos);
    CHECK(s.entries(0, 0) == 1.0);
  }
  {
    const std::vector<Label> labels{0, 0};
    const auto s = class_similarity_matrix(rows({{1, 0}, {0, 1}}), labels, 1, cos);
    CHECK(s.entries(0, 0) == 0.0);
  }
  {
    const std::vector<Label> labels{0, 0, 1};
    const auto s = class_similarity_matrix(rows({{1, 0}, {1, 0}, {0, 1}}), labels, 2, cos, 3);
    CHECK(s.entries(0, 1) == 0.0);
    CHECK(s.entries(1, 0) == 0.0);
    CHECK(s.entries(1, 1) == 1.0);
    CHECK(s.class_sizes == std::vector<std::size_t>{2, 1});
    CHECK(s.epoch == 3);
  }
}

TEST_CASE("class_similarity_matrix errors") {
  const std::vector<Label> labels{0, 0, 2};
  try {
    class_similarity_matrix(rows({{1, 0}, {1, 0}, {0, 1}}), labels, 3, SimilarityKind::cosine());
    FAIL("expected EmptyClass");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyClass);
  }
  const std::vector<Label> bad{0, 5};
  CHECK_THROWS_AS(class_similarity_matrix(rows({{1, 0}, {0, 1}}), bad, 2, SimilarityKind::cosine()), Error);
}

TEST_CASE("class_similarity_matrix matches a brute-force double loop") {
  RngStream rng(21);
  for (int t = 0; t < 40; ++t) {
    const int c = 2 + static_cast<int>(rng.below(3));
    std::vector<Label> labels;
    for (int a = 0; a < c; ++a) {
      const int n = 1 + static_cast<int>(rng.below(20));
      for (int k = 0; k < n; ++k) labels.push_back(a);
    }
    rng.shuffle(labels.begin(), labels.end());
    const auto n = static_cast<Eigen::Index>(labels.size());
    const auto x = testing::random_matrix(rng, n, 4);
    const auto kind = t % 2 ? SimilarityKind::cosine() : SimilarityKind::neg_exp_poincare(1.0);
    const auto s = class_similarity_matrix(x, labels, c, kind);

    // Ordered pairs i != j: each unordered pair counted twice.
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(c, c);
    Eigen::MatrixXd count = Eigen::MatrixXd::Zero(c, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto a = labels[static_cast<std::size_t>(i)];
        const auto b = labels[static_cast<std::size_t>(j)];
        sum(a, b) += embedding_similarity(row_span(x, i), row_span(x, j), kind);
        count(a, b) += 1;
      }
    }
    for (int a = 0; a < c; ++a) {
      const auto na = static_cast<double>(s.class_sizes[static_cast<std::size_t>(a)]);
      for (int b = 0; b < c; ++b) {
        const auto nb = static_cast<double>(s.class_sizes[static_cast<std::size_t>(b)]);
        if (a == b) {
          CHECK(count(a, a) == na * na - na);
          if (na == 1) {
            CHECK(s.entries(a, a) == 1.0);
          } else {
            CHECK(s.entries(a, a) == doctest::Approx(sum(a, a) / count(a, a)).epsilon(1e-12));
          }
        } else {
          CHECK(count(a, b) == na * nb);
          CHECK(s.entries(a, b) == doctest::Approx(sum(a, b) / count(a, b)).epsilon(1e-12));
          CHECK(s.entries(a, b) == s.entries(b, a));
        }
      }
      if (kind.hyperbolic()) {
        CHECK(s.entries(a, a) > 0.0);
        CHECK(s.entries(a, a) <= 1.0);
      } else {
        CHECK(s.entries(a, a) >= -1.0);
        CHECK(s.entries(a, a) <= 1.0);
      }
    }
  }
}

TEST_CASE("class_similarity_matrix is invariant to sample order") {
  RngStream rng(22);
  for (int t = 0; t < 20; ++t) {
    std::vector<Label> labels;
    for (int k = 0; k < 30; ++k) labels.push_back(static_cast<Label>(k % 3));
    const auto x = testing::random_matrix(rng, 30, 5);
    std::vector<Eigen::Index> perm(30);
    for (Eigen::Index i = 0; i < 30; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm.begin(), perm.end());
    RowMatrix xp(30, 5);
    std::vector<Label> lp(30);
    for (std::size_t i = 0; i < 30; ++i) {
      xp.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
      lp[i] = labels[static_cast<std::size_t>(perm[i])];
    }
    const auto a = class_similarity_matrix(x, labels, 3, SimilarityKind::cosine());
    const auto b = class_similarity_matrix(xp, lp, 3, SimilarityKind::cosine());
    CHECK((a.entries - b.entries).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("precomputed and direct overloads agree bit for bit") {
  RngStream rng(23);
  std::vector<Label> labels{0, 1, 2, 0, 1, 2, 0, 1};
  const auto x = testing::random_matrix(rng, 8, 3);
  const auto kind = SimilarityKind::neg_exp_poincare(0.05);
  const PairwiseSimilarity sims(x, kind);
  const auto a = class_similarity_matrix(x, labels, 3, kind);
  const auto b = class_similarity_matrix(sims, labels, 3);
  CHECK(a.entries == b.entries);
}

TEST_CASE("rescale_to_unit_fifth examples") {
  CHECK(rescale_to_unit_fifth(std::vector<double>{1, 2, 3}).values == std::vector<double>{0, 0.1, 0.2});
  CHECK(rescale_to_unit_fifth(std::vector<double>{5, 5}).values == std::vector<double>{0, 0});
  CHECK(rescale_to_unit_fifth(std::vector<double>{0.9, 0.8}).values == std::vector<double>{0.2, 0});
  CHECK(rescale_to_unit_fifth(std::vector<double>{4}).values == std::vector<double>{0});
}

TEST_CASE("rescale_to_unit_fifth properties") {
  RngStream rng(24);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(2 + rng.below(10));
    for (auto& x : v) x = rng.normal(0, 3);
    const auto r = rescale_to_unit_fifth(v);
    CHECK(*std::min_element(r.values.begin(), r.values.end()) == 0.0);
    CHECK(*std::max_element(r.values.begin(), r.values.end()) == 0.2);
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[i] < v[j]) CHECK(r.values[i] < r.values[j]);
      }
    }
    for (std::size_t k = 1; k < r.source_order.size(); ++k) {
      CHECK(v[r.source_order[k - 1]] <= v[r.source_order[k]]);
    }
    const auto again = rescale_to_unit_fifth(r.values);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(again.values[i] - r.values[i]) <= 1e-15);
  }
}

TEST_CASE("min_intra_similarity examples") {
  const auto cos = SimilarityKind::cosine();
  const std::vector<Label> two{0, 0};
  CHECK(min_intra_similarity(rows({{1, 0}, {1, 0}}), two, 0, cos) == 1.0);
  const std::vector<Label> three{0, 0, 0};
  CHECK(min_intra_similarity(rows({{1, 0}, {0, 1}, {-1, 0}}), three, 0, cos) == -1.0);
  // Pair sims {0.9, 0.7, 0.8} from unit vectors at chosen angles.
  const double a1 = std::acos(0.9), a2 = std::acos(0.7);
  const auto x = rows({{1, 0}, {std::cos(a1), std::sin(a1)}, {std::cos(a2), -std::sin(a2)}});
  // Third pair sim is cos(a1 + a2); pick the ordering so that the minimum is 0.7 or lower.
  const double expected = std::min({0.9, 0.7, std::cos(a1 + a2)});
  CHECK(min_intra_similarity(x, three, 0, cos) == doctest::Approx(expected).epsilon(1e-14));
  const std::vector<Label> single{1, 0};
  CHECK(min_intra_similarity(rows({{1, 0}, {0, 1}}), single, 0, cos) == 1.0);
}

TEST_CASE("min_intra_similarity example with three listed similarities") {
  // A precomputed similarity table lets the example be stated exactly.
  RowMatrix x(3, 3);
  // Unit vectors with Gram matrix [[1,.9,.7],[.9,1,.8],[.7,.8,1]] via Cholesky.
  Eigen::Matrix3d g;
  g << 1, 0.9, 0.7, 0.9, 1, 0.8, 0.7, 0.8, 1;
  const Eigen::Matrix3d l = g.llt().matrixL();
  x = l;
  const std::vector<Label> labels{0, 0, 0};
  CHECK(min_intra_similarity(x, labels, 0, SimilarityKind::cosine()) == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(intra_similarity_extreme(x, labels, 0, SimilarityKind::cosine(), IntraExtreme::Max) ==
        doctest::Approx(0.9).epsilon(1e-14));
}

TEST_CASE("min_intra_similarity errors and batch form") {
  const std::vector<Label> labels{0, 0};
  try {
    min_intra_similarity(rows({{1, 0}, {0, 1}}), labels, 1, SimilarityKind::cosine());
    FAIL("expected EmptyClass");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyClass);
  }
  RngStream rng(25);
  const std::vector<Label> l{0, 1, 0, 1, 1, 2};
  const auto x = testing::random_matrix(rng, 6, 3);
  const PairwiseSimilarity sims(x, SimilarityKind::cosine());
  const auto all = intra_similarity_extremes(sims, l, 3, IntraExtreme::Min);
  for (Label a = 0; a < 3; ++a) {
    CHECK(all[static_cast<std::size_t>(a)] == min_intra_similarity(x, l, a, SimilarityKind::cosine()));
  }
  CHECK(all[2] == 1.0);
}
