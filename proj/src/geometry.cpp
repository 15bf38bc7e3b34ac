#include "hsim/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "hsim/error.hpp"

namespace hsim {
namespace {

void check_same_dim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "dimensions " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  if (u.empty()) throw Error(ErrorKind::DimensionMismatch, "empty vector");
}

void check_finite(std::span<const double> x) {
  for (double c : x) {
    if (!std::isfinite(c)) throw Error(ErrorKind::NonFinite, "vector has a non-finite component");
  }
}

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
  return s;
}

double squared_distance(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - v[k];
    s += d * d;
  }
  return s;
}

void check_in_ball(double sq_norm) {
  if (!(std::sqrt(sq_norm) < 1.0 - kBallGuard)) {
    throw Error(ErrorKind::OutsideBall, "point norm " + std::to_string(std::sqrt(sq_norm)));
  }
}

// acosh(1 + q) without forming 1 + q.
double acosh1p(double q) { return std::log1p(q + std::sqrt(q * (q + 2.0))); }

struct RadialScale {
  double h;        // z = h(r) x before projection
  double dh_by_r;  // h'(r) / r
};

RadialScale radial_scale(double r, double tau, ExpMapForm form) {
  const double s = std::sqrt(tau);
  const double t = s * r;
  if (t < 1e-3) {
    const double t2 = t * t;
    if (form == ExpMapForm::Standard) {
      return {1.0 - t2 / 3.0 + 2.0 * t2 * t2 / 15.0, tau * (-2.0 / 3.0 + 8.0 * t2 / 15.0)};
    }
    return {1.0 - 7.0 * t2 / 3.0 + 92.0 * t2 * t2 / 15.0, tau * (-14.0 / 3.0 + 368.0 * t2 / 15.0)};
  }
  const double th = std::tanh(t);
  const double sech2 = 1.0 - th * th;
  const double a = th / t;
  const double da_dt = (sech2 * t - th) / (t * t);
  if (form == ExpMapForm::Standard) return {a, tau * da_dt / t};
  const double b = 1.0 + 2.0 * th * th;
  const double db_dt = 4.0 * th * sech2;
  const double dh_dt = (da_dt * b - a * db_dt) / (b * b);
  return {a / b, tau * dh_dt / t};
}

}  // namespace

std::string SimilarityKind::name() const {
  switch (mode) {
    case SimilarityMode::Cosine: return "cosine";
    case SimilarityMode::NegExpPoincare: return "negexp_poincare";
    case SimilarityMode::NegPoincare: return "neg_poincare";
  }
  return "unknown";
}

SimilarityKind SimilarityKind::parse(const std::string& name, double tau, ExpMapForm form) {
  if (name == "cosine") return cosine();
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidConfig, "curvature must be positive");
  if (name == "negexp_poincare") return {SimilarityMode::NegExpPoincare, tau, form};
  if (name == "neg_poincare") return {SimilarityMode::NegPoincare, tau, form};
  throw Error(ErrorKind::InvalidConfig, "unknown similarity kind '" + name + "'");
}

ExpMapForm parse_exp_map_form(const std::string& name) {
  if (name == "as_printed") return ExpMapForm::AsPrinted;
  if (name == "standard") return ExpMapForm::Standard;
  throw Error(ErrorKind::InvalidConfig, "unknown exp map form '" + name + "'");
}

std::string to_string(ExpMapForm form) {
  return form == ExpMapForm::AsPrinted ? "as_printed" : "standard";
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  check_same_dim(u, v);
  check_finite(u);
  check_finite(v);
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (nu < kMinNorm || nv < kMinNorm) throw Error(ErrorKind::ZeroVector, "cosine of a zero vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double cosine_sim_grad(std::span<const double> u, std::span<const double> v, std::span<double> du,
                       std::span<double> dv) {
  check_same_dim(u, v);
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (nu < kMinNorm || nv < kMinNorm) throw Error(ErrorKind::ZeroVector, "cosine of a zero vector");
  const double raw = dot(u, v) / (nu * nv);
  const double s = std::clamp(raw, -1.0, 1.0);
  const double inv = 1.0 / (nu * nv);
  for (std::size_t k = 0; k < u.size(); ++k) {
    du[k] = v[k] * inv - raw * u[k] / uu;
    dv[k] = u[k] * inv - raw * v[k] / vv;
  }
  return s;
}

double poincare_distance(std::span<const double> u, std::span<const double> v) {
  check_same_dim(u, v);
  check_finite(u);
  check_finite(v);
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  check_in_ball(uu);
  check_in_ball(vv);
  const double q = 2.0 * squared_distance(u, v) / ((1.0 - uu) * (1.0 - vv));
  return acosh1p(q);
}

double poincare_distance_grad(std::span<const double> u, std::span<const double> v,
                              std::span<double> du, std::span<double> dv) {
  check_same_dim(u, v);
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  check_in_ball(uu);
  check_in_ball(vv);
  const double alpha = 1.0 - uu;
  const double beta = 1.0 - vv;
  const double delta = squared_distance(u, v);
  const double q = 2.0 * delta / (alpha * beta);
  const double d = acosh1p(q);
  if (q <= 0.0) {
    std::fill(du.begin(), du.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    return d;
  }
  const double dd_dq = 1.0 / std::sqrt(q * (q + 2.0));
  const double c_diff = 4.0 / (alpha * beta);
  const double c_u = 4.0 * delta / (alpha * alpha * beta);
  const double c_v = 4.0 * delta / (alpha * beta * beta);
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double diff = u[k] - v[k];
    du[k] = dd_dq * (c_diff * diff + c_u * u[k]);
    dv[k] = dd_dq * (-c_diff * diff + c_v * v[k]);
  }
  return d;
}

std::vector<double> exp_map(std::span<const double> x, double tau, ExpMapForm form) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidSpec, "exp_map curvature must be positive");
  if (x.empty()) throw Error(ErrorKind::DimensionMismatch, "empty vector");
  check_finite(x);
  const double r = std::sqrt(dot(x, x));
  std::vector<double> z(x.size(), 0.0);
  if (r == 0.0) return z;
  const double h = radial_scale(r, tau, form).h;
  double norm = h * r;
  double scale = h;
  if (norm > kBallRadius) scale *= kBallRadius / norm;
  for (std::size_t k = 0; k < x.size(); ++k) z[k] = scale * x[k];
  return z;
}

void exp_map_vjp(std::span<const double> x, double tau, ExpMapForm form,
                 std::span<const double> upstream, std::span<double> out) {
  const double r = std::sqrt(dot(x, x));
  const RadialScale rs = radial_scale(r, tau, form);
  const double norm = rs.h * r;
  std::vector<double> g(upstream.begin(), upstream.end());
  if (norm > kBallRadius) {
    // z' = R z / |z| with z = h x; pull back through the projection first.
    double zg = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) zg += rs.h * x[k] * g[k];
    zg /= norm;
    for (std::size_t k = 0; k < x.size(); ++k) {
      g[k] = (kBallRadius / norm) * (g[k] - (rs.h * x[k] / norm) * zg);
    }
  }
  const double xg = dot(x, g);
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = rs.h * g[k] + rs.dh_by_r * x[k] * xg;
}

double embedding_similarity(std::span<const double> u, std::span<const double> v,
                            const SimilarityKind& kind) {
  if (kind.mode == SimilarityMode::Cosine) return cosine_sim(u, v);
  check_same_dim(u, v);
  const auto pu = exp_map(u, kind.curvature, kind.exp_form);
  const auto pv = exp_map(v, kind.curvature, kind.exp_form);
  const double d = poincare_distance(pu, pv);
  return kind.mode == SimilarityMode::NegExpPoincare ? std::exp(-d) : -d;
}

double self_similarity(const SimilarityKind& kind) {
  return kind.mode == SimilarityMode::NegPoincare ? 0.0 : 1.0;
}

PairwiseSimilarity::PairwiseSimilarity(const RowMatrix& embeddings, const SimilarityKind& kind)
    : embeddings_(embeddings),
      kind_(kind),
      points_(embeddings.rows(), embeddings.cols()),
      sims_(embeddings.rows(), embeddings.rows()),
      point_grads_(RowMatrix::Zero(embeddings.rows(), embeddings.cols())),
      du_(static_cast<std::size_t>(embeddings.cols())),
      dv_(static_cast<std::size_t>(embeddings.cols())) {
  const Eigen::Index n = embeddings.rows();
  for (Eigen::Index i = 0; i < n; ++i) check_finite(row_span(embeddings, i));
  if (kind.hyperbolic()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto z = exp_map(row_span(embeddings, i), kind.curvature, kind.exp_form);
      std::copy(z.begin(), z.end(), row_span(points_, i).begin());
    }
  } else {
    points_ = embeddings;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    sims_(i, i) = self_similarity(kind);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double s;
      if (kind.mode == SimilarityMode::Cosine) {
        s = cosine_sim(row_span(points_, i), row_span(points_, j));
      } else {
        const double d = poincare_distance(row_span(points_, i), row_span(points_, j));
        s = kind.mode == SimilarityMode::NegExpPoincare ? std::exp(-d) : -d;
      }
      sims_(i, j) = s;
      sims_(j, i) = s;
    }
  }
}

void PairwiseSimilarity::add_gradient(Eigen::Index i, Eigen::Index j, double coeff) {
  if (coeff == 0.0 || i == j) return;
  const auto pi = row_span(points_, i);
  const auto pj = row_span(points_, j);
  double scale = coeff;
  if (kind_.mode == SimilarityMode::Cosine) {
    cosine_sim_grad(pi, pj, du_, dv_);
  } else {
    poincare_distance_grad(pi, pj, du_, dv_);
    // s = exp(-d) or s = -d
    scale = kind_.mode == SimilarityMode::NegExpPoincare ? -coeff * sims_(i, j) : -coeff;
  }
  auto gi = row_span(point_grads_, i);
  auto gj = row_span(point_grads_, j);
  for (std::size_t k = 0; k < du_.size(); ++k) {
    gi[k] += scale * du_[k];
    gj[k] += scale * dv_[k];
  }
}

RowMatrix PairwiseSimilarity::pullback() const {
  if (!kind_.hyperbolic()) return point_grads_;
  RowMatrix out(point_grads_.rows(), point_grads_.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    exp_map_vjp(row_span(embeddings_, i), kind_.curvature, kind_.exp_form,
                row_span(point_grads_, i), row_span(out, i));
  }
  return out;
}

}  // namespace hsim
