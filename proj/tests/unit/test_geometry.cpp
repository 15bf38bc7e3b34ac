#include <doctest.h>

#include <cmath>
#include <vector>

#include "hsim/error.hpp"
#include "hsim/geometry.hpp"
#include "hsim/rng.hpp"
#include "test_support.hpp"

using namespace hsim;

namespace {

using Vec = std::vector<double>;

// 40-digit mpmath evaluations (tests/oracles/oracle_values.py).
constexpr double kLn3 = 1.098612288668109691395245236922525704647;
constexpr double kExpMapOne = 0.3525815104679625792793750749420121741635;
constexpr double kDistExpMapOne = 0.7367773746675149741499044244827588632432;
constexpr double kNegExpSimOne = 0.4786539550640798581717740765202774108469;

Vec random_vec(RngStream& rng, int d, double scale = 1.0) {
  Vec v(static_cast<std::size_t>(d));
  for (auto& c : v) c = scale * rng.normal();
  return v;
}

Vec random_ball_point(RngStream& rng, int d, double max_norm) {
  Vec v = random_vec(rng, d);
  double n = 0;
  for (double c : v) n += c * c;
  n = std::sqrt(n);
  const double r = max_norm * rng.uniform();
  for (auto& c : v) c *= r / n;
  return v;
}

double norm(const Vec& v) {
  double s = 0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("cosine_sim examples") {
  CHECK(cosine_sim(Vec{1, 0}, Vec{1, 0}) == 1.0);
  CHECK(cosine_sim(Vec{1, 0}, Vec{0, 1}) == 0.0);
  CHECK(cosine_sim(Vec{1, 1}, Vec{1, 0}) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("cosine_sim errors") {
  CHECK_THROWS_AS(cosine_sim(Vec{0, 0}, Vec{1, 0}), Error);
  try {
    cosine_sim(Vec{1e-13, 0}, Vec{1, 0});
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVector);
  }
  try {
    cosine_sim(Vec{1, 0, 0}, Vec{1, 0});
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("cosine_sim stays clamped and is scale invariant") {
  RngStream rng(7);
  for (int t = 0; t < 1000; ++t) {
    const auto u = random_vec(rng, 5);
    const auto v = random_vec(rng, 5);
    const double s = cosine_sim(u, v);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    const double a = std::exp(rng.uniform(-5, 5));
    const double b = std::exp(rng.uniform(-5, 5));
    Vec au = u, bv = v;
    for (auto& c : au) c *= a;
    for (auto& c : bv) c *= b;
    CHECK(std::abs(cosine_sim(au, bv) - s) <= 1e-12);
  }
  // Parallel vectors whose dot product can round above the product of norms.
  const Vec u{0.1, 0.2, 0.3};
  CHECK(cosine_sim(u, u) <= 1.0);
}

TEST_CASE("poincare_distance examples") {
  CHECK(poincare_distance(Vec{0, 0}, Vec{0, 0}) == 0.0);
  const double d = poincare_distance(Vec{0.5, 0}, Vec{0, 0});
  CHECK(std::abs(d - kLn3) <= 1e-12);
  // Independent cross-checks of the frozen constant.
  CHECK(std::abs(std::cosh(kLn3) - 5.0 / 3.0) <= 1e-15);
  CHECK(std::abs(2.0 * std::atanh(0.5) - kLn3) <= 1e-15);
  CHECK(poincare_distance(Vec{0.3, 0}, Vec{0.3, 0}) == 0.0);
}

TEST_CASE("poincare_distance rejects points on or outside the boundary") {
  try {
    poincare_distance(Vec{1.0, 0}, Vec{0, 0});
    FAIL("expected OutsideBall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OutsideBall);
  }
  CHECK_THROWS_AS(poincare_distance(Vec{0, 0}, Vec{0.6, 0.8}), Error);
  CHECK_THROWS_AS(poincare_distance(Vec{0, 0}, Vec{1 - 1e-10, 0}), Error);
  CHECK_NOTHROW(poincare_distance(Vec{0, 0}, Vec{1 - 1e-8, 0}));
}

TEST_CASE("poincare_distance from origin is 2 artanh |x|") {
  RngStream rng(11);
  for (int t = 0; t < 10000; ++t) {
    const auto x = random_ball_point(rng, 1 + static_cast<int>(rng.below(6)), 0.99);
    const Vec zero(x.size(), 0.0);
    CHECK(std::abs(poincare_distance(zero, x) - 2.0 * std::atanh(norm(x))) <= 1e-10);
  }
}

TEST_CASE("poincare_distance is a metric on random points") {
  RngStream rng(12);
  for (int t = 0; t < 10000; ++t) {
    const int d = 1 + static_cast<int>(rng.below(5));
    const auto u = random_ball_point(rng, d, 0.95);
    const auto v = random_ball_point(rng, d, 0.95);
    const auto w = random_ball_point(rng, d, 0.95);
    const double uv = poincare_distance(u, v);
    CHECK(uv == poincare_distance(v, u));
    CHECK(uv > 0.0);
    CHECK(poincare_distance(u, w) <= uv + poincare_distance(v, w) + 1e-9);
  }
}

TEST_CASE("exp_map examples") {
  const auto origin = exp_map(Vec{0, 0, 0}, 1.0);
  CHECK(origin == Vec{0, 0, 0});
  const auto z = exp_map(Vec{1, 0}, 1.0);
  CHECK(std::abs(z[0] - kExpMapOne) <= 1e-15);
  CHECK(z[1] == 0.0);
  // tanh(1) / (1 + 2 tanh(1)^2), computed independently.
  const double th = std::tanh(1.0);
  CHECK(std::abs(kExpMapOne - th / (1 + 2 * th * th)) <= 1e-15);
  const auto small = exp_map(Vec{0.3, 0.4}, 1e-8);
  CHECK(std::abs(small[0] - 0.3) <= 1e-6);
  CHECK(std::abs(small[1] - 0.4) <= 1e-6);
}

TEST_CASE("exp_map standard form is the tanh map") {
  const auto z = exp_map(Vec{1, 0}, 1.0, ExpMapForm::Standard);
  CHECK(std::abs(z[0] - std::tanh(1.0)) <= 1e-15);
}

TEST_CASE("exp_map output lies inside the unit ball") {
  RngStream rng(13);
  const double taus[] = {0.01, 0.05, 1.0};
  for (int t = 0; t < 10000; ++t) {
    auto x = random_ball_point(rng, 1 + static_cast<int>(rng.below(8)), 100.0);
    const double tau = taus[t % 3];
    CHECK(norm(exp_map(x, tau)) < 1.0);
    CHECK(norm(exp_map(x, tau, ExpMapForm::Standard)) < 1.0);
  }
}

TEST_CASE("exp_map rejects bad input") {
  CHECK_THROWS_AS(exp_map(Vec{1.0, NAN}, 1.0), Error);
  CHECK_THROWS_AS(exp_map(Vec{1.0, 0.0}, 0.0), Error);
}

TEST_CASE("embedding_similarity examples") {
  CHECK(embedding_similarity(Vec{0, 1}, Vec{0, 1}, SimilarityKind::cosine()) == 1.0);
  const auto hyp = SimilarityKind::neg_exp_poincare(1.0);
  CHECK(embedding_similarity(Vec{0.2, 0.2}, Vec{0.2, 0.2}, hyp) == 1.0);
  const double s = embedding_similarity(Vec{1, 0}, Vec{0, 0}, hyp);
  CHECK(std::abs(s - kNegExpSimOne) <= 1e-14);
  CHECK(std::abs(std::exp(-2.0 * std::atanh(kExpMapOne)) - kNegExpSimOne) <= 1e-15);
  CHECK(std::abs(std::exp(-kDistExpMapOne) - kNegExpSimOne) <= 1e-15);
}

TEST_CASE("embedding_similarity is symmetric and maximal at self") {
  RngStream rng(14);
  const SimilarityKind kinds[] = {SimilarityKind::cosine(), SimilarityKind::neg_exp_poincare(1.0),
                                  SimilarityKind::neg_exp_poincare(0.05, ExpMapForm::Standard),
                                  {SimilarityMode::NegPoincare, 1.0, ExpMapForm::AsPrinted}};
  for (const auto& kind : kinds) {
    for (int t = 0; t < 2000; ++t) {
      const auto u = random_vec(rng, 4, 2.0);
      const auto v = random_vec(rng, 4, 2.0);
      const double uv = embedding_similarity(u, v, kind);
      CHECK(uv == embedding_similarity(v, u, kind));
      CHECK(embedding_similarity(u, u, kind) >= uv);
      if (kind.mode == SimilarityMode::NegExpPoincare) {
        CHECK(uv > 0.0);
        CHECK(uv <= 1.0);
      }
    }
  }
}

TEST_CASE("analytic partials match central differences") {
  RngStream rng(15);
  auto check = [](auto fn, const Vec& u, const Vec& v, const Vec& du, const Vec& dv) {
    const double h = 1e-6;
    for (std::size_t k = 0; k < u.size(); ++k) {
      Vec up = u, um = u, vp = v, vm = v;
      up[k] += h;
      um[k] -= h;
      vp[k] += h;
      vm[k] -= h;
      CHECK(std::abs((fn(up, v) - fn(um, v)) / (2 * h) - du[k]) <= 1e-6 * std::max(1.0, std::abs(du[k])));
      CHECK(std::abs((fn(u, vp) - fn(u, vm)) / (2 * h) - dv[k]) <= 1e-6 * std::max(1.0, std::abs(dv[k])));
    }
  };
  for (int t = 0; t < 200; ++t) {
    const auto u = random_vec(rng, 4);
    const auto v = random_vec(rng, 4);
    Vec du(4), dv(4);
    cosine_sim_grad(u, v, du, dv);
    check([](const Vec& a, const Vec& b) { return cosine_sim(a, b); }, u, v, du, dv);

    const auto p = random_ball_point(rng, 4, 0.9);
    const auto q = random_ball_point(rng, 4, 0.9);
    poincare_distance_grad(p, q, du, dv);
    check([](const Vec& a, const Vec& b) { return poincare_distance(a, b); }, p, q, du, dv);
  }
}

TEST_CASE("exp_map VJP matches central differences") {
  RngStream rng(16);
  const double taus[] = {1.0, 0.05, 3.0};
  for (auto form : {ExpMapForm::AsPrinted, ExpMapForm::Standard}) {
    for (int t = 0; t < 300; ++t) {
      const double tau = taus[t % 3];
      // Mix of tiny, moderate and projected (large) inputs.
      const double scale = t % 5 == 0 ? 1e-5 : (t % 5 == 1 ? 30.0 : 1.0);
      const auto x = random_vec(rng, 3, scale);
      const auto g = random_vec(rng, 3);
      Vec out(3);
      exp_map_vjp(x, tau, form, g, out);
      const double h = 1e-6 * std::max(scale, 1e-3);
      for (std::size_t k = 0; k < 3; ++k) {
        Vec xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const auto zp = exp_map(xp, tau, form);
        const auto zm = exp_map(xm, tau, form);
        double numeric = 0;
        for (std::size_t j = 0; j < 3; ++j) numeric += g[j] * (zp[j] - zm[j]) / (2 * h);
        CHECK(std::abs(numeric - out[k]) <= 1e-6 * std::max(1.0, std::abs(out[k])));
      }
    }
  }
}

TEST_CASE("PairwiseSimilarity matches embedding_similarity") {
  RngStream rng(17);
  const auto x = testing::random_matrix(rng, 6, 3);
  for (const auto& kind : {SimilarityKind::cosine(), SimilarityKind::neg_exp_poincare(1.0)}) {
    const PairwiseSimilarity sims(x, kind);
    for (Eigen::Index i = 0; i < 6; ++i) {
      for (Eigen::Index j = 0; j < 6; ++j) {
        if (i == j) {
          CHECK(sims(i, i) == self_similarity(kind));
        } else {
          CHECK(sims(i, j) == embedding_similarity(row_span(x, i), row_span(x, j), kind));
        }
      }
    }
  }
}
