#pragma once

#include <span>
#include <string>
#include <vector>

#include "hsim/types.hpp"

namespace hsim {

enum class SimilarityMode {
  Cosine,
  NegExpPoincare,  // exp(-d) of the geodesic distance between mapped points
  NegPoincare,     // raw -d, for experimentation
};

enum class ExpMapForm {
  AsPrinted,  // tanh map followed by the 1/(1 + 2 tau |v|^2) factor
  Standard,   // tanh map only
};

struct SimilarityKind {
  SimilarityMode mode = SimilarityMode::Cosine;
  double curvature = 1.0;
  ExpMapForm exp_form = ExpMapForm::AsPrinted;

  static SimilarityKind cosine() { return {}; }
  static SimilarityKind neg_exp_poincare(double tau, ExpMapForm form = ExpMapForm::AsPrinted) {
    return {SimilarityMode::NegExpPoincare, tau, form};
  }

  bool hyperbolic() const { return mode != SimilarityMode::Cosine; }
  std::string name() const;
  static SimilarityKind parse(const std::string& name, double tau, ExpMapForm form);
};

ExpMapForm parse_exp_map_form(const std::string& name);
std::string to_string(ExpMapForm form);

inline constexpr double kMinNorm = 1e-12;
// Points whose norm reaches 1 - kBallGuard are rejected by the distance.
inline constexpr double kBallGuard = 1e-9;
// exp_map output is projected into the ball of this radius.
inline constexpr double kBallRadius = 1.0 - 1e-5;

double cosine_sim(std::span<const double> u, std::span<const double> v);

double poincare_distance(std::span<const double> u, std::span<const double> v);

std::vector<double> exp_map(std::span<const double> x, double tau,
                            ExpMapForm form = ExpMapForm::AsPrinted);

double embedding_similarity(std::span<const double> u, std::span<const double> v,
                            const SimilarityKind& kind);

// Similarity of a point with itself under `kind` (the maximum of the range).
double self_similarity(const SimilarityKind& kind);

// Gradient-carrying variants. `du`/`dv` receive the partial derivatives of the
// returned value with respect to u and v (overwritten, not accumulated).
double cosine_sim_grad(std::span<const double> u, std::span<const double> v,
                       std::span<double> du, std::span<double> dv);

// The distance is not differentiable at u == v; the zero subgradient is used
// there.
double poincare_distance_grad(std::span<const double> u, std::span<const double> v,
                              std::span<double> du, std::span<double> dv);

// Vector-Jacobian product of exp_map at x: out = J(x)^T upstream.
void exp_map_vjp(std::span<const double> x, double tau, ExpMapForm form,
                 std::span<const double> upstream, std::span<double> out);

// Pairwise similarities of a batch under one kind, with reverse-mode
// accumulation back to the un-mapped embeddings. Hyperbolic kinds map every
// row through exp_map once on construction.
class PairwiseSimilarity {
 public:
  PairwiseSimilarity(const RowMatrix& embeddings, const SimilarityKind& kind);

  Eigen::Index size() const { return sims_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return sims_(i, j); }
  const Eigen::MatrixXd& matrix() const { return sims_; }
  const RowMatrix& points() const { return points_; }

  // Adds coeff * d s_ij / d(point_i, point_j) to the point gradients.
  void add_gradient(Eigen::Index i, Eigen::Index j, double coeff);

  // Gradient with respect to the original embeddings.
  RowMatrix pullback() const;

 private:
  RowMatrix embeddings_;
  SimilarityKind kind_;
  RowMatrix points_;
  Eigen::MatrixXd sims_;
  RowMatrix point_grads_;
  std::vector<double> du_, dv_;
};

}  // namespace hsim
