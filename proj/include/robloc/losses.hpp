#pragma once

#include <Eigen/Dense>
#include <optional>

namespace robloc {

/// Clip width of a Huber penalty, in data units. Always strictly positive.
class HuberParams {
 public:
  explicit HuberParams(double h);
  double h() const { return h_; }

 private:
  double h_;
};

enum class LossFamily {
  kEntrywise,  // sum_j Phi_h(x_j)
  kNormBall,   // Phi_h(||x||)
};

/// The two loss families. The gradient of an Entrywise loss clips each
/// coordinate to [-h, h]; the gradient of a NormBall loss projects onto the
/// Euclidean ball of radius h.
struct LossKind {
  LossFamily family;
  HuberParams params;

  static LossKind entrywise(double h) { return {LossFamily::kEntrywise, HuberParams(h)}; }
  static LossKind norm_ball(double h) { return {LossFamily::kNormBall, HuberParams(h)}; }

  double clip() const { return params.h(); }
};

/// Soft sample weights, 0 <= w_i <= 1/n. The budget is the declared radius of
/// the polytope W_budget; membership is checked by in_polytope, not enforced.
class WeightVector {
 public:
  WeightVector(Eigen::VectorXd w, double budget);
  static WeightVector uniform(Eigen::Index n, double budget = 0.0);

  const Eigen::VectorXd& values() const { return w_; }
  Eigen::Index size() const { return w_.size(); }
  double budget() const { return budget_; }
  double operator[](Eigen::Index i) const { return w_[i]; }

  double total() const { return w_.sum(); }
  /// ||w - (1/n) 1||_1
  double l1_deviation() const;
  bool in_polytope(double radius, double slack = 1e-12) const;

 private:
  Eigen::VectorXd w_;
  double budget_;
};

double huber_penalty(double t, HuberParams h);
double huber_deriv(double t, HuberParams h);

/// F(x) for the given loss family.
double loss_value(const Eigen::Ref<const Eigen::VectorXd>& residual, const LossKind& kind);
/// f(x) = grad F(x).
Eigen::VectorXd loss_grad(const Eigen::Ref<const Eigen::VectorXd>& residual, const LossKind& kind);

/// Row i of the result is f(mu - y_i).
Eigen::MatrixXd transformed_residuals(const Eigen::MatrixXd& samples, const Eigen::VectorXd& mu,
                                      const LossKind& kind);

double weighted_loss(const Eigen::MatrixXd& samples, const WeightVector& w, const Eigen::VectorXd& mu,
                     const LossKind& kind);
Eigen::VectorXd weighted_loss_grad(const Eigen::MatrixXd& samples, const WeightVector& w,
                                   const Eigen::VectorXd& mu, const LossKind& kind);

struct LossMinimum {
  Eigen::VectorXd location;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = true;
};

inline constexpr double kDefaultLossTol = 1e-10;

/// Minimizer of the weighted loss. Stops once the gradient norm is at most
/// tol * max(1, sum(w) * h). Entrywise problems are split per coordinate and
/// solved by a bracketing root search on the monotone derivative; NormBall
/// problems use gradient descent with step 1/sum(w), starting from the
/// coordinate-wise median or from warm_start when given.
LossMinimum minimize_weighted_loss(const Eigen::MatrixXd& samples, const WeightVector& w,
                                   const LossKind& kind, double tol = kDefaultLossTol,
                                   const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

/// Coordinate-wise median over rows with positive weight (all rows if w is empty).
Eigen::VectorXd coordinate_median(const Eigen::MatrixXd& samples,
                                  const Eigen::VectorXd& w = Eigen::VectorXd());

}  // namespace robloc
