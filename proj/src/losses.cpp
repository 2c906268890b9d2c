#include "robloc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "robloc/errors.hpp"

namespace robloc {

HuberParams::HuberParams(double h) : h_(h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("Huber clip width must be finite and positive");
}

WeightVector::WeightVector(Eigen::VectorXd w, double budget) : w_(std::move(w)), budget_(budget) {
  if (w_.size() == 0) throw DimensionMismatch("weight vector must be non-empty");
  if (!(budget >= 0.0 && budget < 1.0)) throw DomainError("weight budget must lie in [0, 1)");
  const double cap = 1.0 / static_cast<double>(w_.size());
  for (Eigen::Index i = 0; i < w_.size(); ++i) {
    if (!std::isfinite(w_[i]) || w_[i] < 0.0 || w_[i] > cap * (1.0 + 1e-12)) {
      throw DomainError("weights must satisfy 0 <= w_i <= 1/n");
    }
  }
}

WeightVector WeightVector::uniform(Eigen::Index n, double budget) {
  return WeightVector(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)), budget);
}

double WeightVector::l1_deviation() const {
  const double u = 1.0 / static_cast<double>(w_.size());
  return (w_.array() - u).abs().sum();
}

bool WeightVector::in_polytope(double radius, double slack) const {
  const double cap = 1.0 / static_cast<double>(w_.size());
  if ((w_.array() < -slack).any() || (w_.array() > cap + slack).any()) return false;
  return l1_deviation() <= radius + slack;
}

namespace {

void require_finite(double t) {
  if (!std::isfinite(t)) throw DomainError("non-finite argument to Huber penalty");
}

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (!x.allFinite()) throw DomainError("non-finite residual");
}

}  // namespace

double huber_penalty(double t, HuberParams hp) {
  require_finite(t);
  const double h = hp.h();
  const double a = std::abs(t);
  return a <= h ? 0.5 * t * t : h * a - 0.5 * h * h;
}

double huber_deriv(double t, HuberParams hp) {
  require_finite(t);
  const double h = hp.h();
  if (t > h) return h;
  if (t < -h) return -h;
  return t;
}

double loss_value(const Eigen::Ref<const Eigen::VectorXd>& residual, const LossKind& kind) {
  require_finite(residual);
  if (kind.family == LossFamily::kNormBall) return huber_penalty(residual.norm(), kind.params);
  double total = 0.0;
  for (Eigen::Index j = 0; j < residual.size(); ++j) total += huber_penalty(residual[j], kind.params);
  return total;
}

Eigen::VectorXd loss_grad(const Eigen::Ref<const Eigen::VectorXd>& residual, const LossKind& kind) {
  require_finite(residual);
  const double h = kind.clip();
  if (kind.family == LossFamily::kEntrywise) return residual.cwiseMax(-h).cwiseMin(h);
  const double norm = residual.norm();
  if (norm <= h) return residual;
  return residual * (h / norm);
}

Eigen::MatrixXd transformed_residuals(const Eigen::MatrixXd& samples, const Eigen::VectorXd& mu,
                                      const LossKind& kind) {
  if (samples.cols() != mu.size()) throw DimensionMismatch("location dimension does not match samples");
  const double h = kind.clip();
  Eigen::MatrixXd r = (-samples).rowwise() + mu.transpose();
  if (kind.family == LossFamily::kEntrywise) return r.cwiseMax(-h).cwiseMin(h);
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double norm = r.row(i).norm();
    if (norm > h) r.row(i) *= h / norm;
  }
  return r;
}

double weighted_loss(const Eigen::MatrixXd& samples, const WeightVector& w, const Eigen::VectorXd& mu,
                     const LossKind& kind) {
  if (w.size() != samples.rows()) throw DimensionMismatch("weight length does not match sample count");
  if (mu.size() != samples.cols()) throw DimensionMismatch("location dimension does not match samples");
  require_finite(mu);
  double total = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    if (w[i] == 0.0) continue;
    total += w[i] * loss_value(mu - samples.row(i).transpose(), kind);
  }
  return total;
}

Eigen::VectorXd weighted_loss_grad(const Eigen::MatrixXd& samples, const WeightVector& w,
                                   const Eigen::VectorXd& mu, const LossKind& kind) {
  if (w.size() != samples.rows()) throw DimensionMismatch("weight length does not match sample count");
  return transformed_residuals(samples, mu, kind).transpose() * w.values();
}

Eigen::VectorXd coordinate_median(const Eigen::MatrixXd& samples, const Eigen::VectorXd& w) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w.size() == 0 || w[i] > 0.0) active.push_back(i);
  }
  if (active.empty()) throw DegenerateWeights("no rows with positive weight");
  Eigen::VectorXd med(d);
  std::vector<double> col(active.size());
  const std::size_t m = active.size();
  for (Eigen::Index j = 0; j < d; ++j) {
    for (std::size_t a = 0; a < m; ++a) col[a] = samples(active[a], j);
    std::nth_element(col.begin(), col.begin() + m / 2, col.end());
    double mid = col[m / 2];
    if (m % 2 == 0) {
      mid = 0.5 * (mid + *std::max_element(col.begin(), col.begin() + m / 2));
    }
    med[j] = mid;
  }
  return med;
}

namespace {

struct CoordinateSolution {
  double mu;
  double deriv;
  int iterations;
};

// Root of D(mu) = sum_i w_i phi_h(mu - y_i) inside [min y, max y]. D is
// monotone and piecewise linear, so Newton steps on the local piece are taken
// whenever they stay inside the bracket and bisection is used otherwise.
CoordinateSolution solve_coordinate(const std::vector<double>& ys, const std::vector<double>& ws, double h,
                                    double gtol, double start) {
  double lo = *std::min_element(ys.begin(), ys.end());
  double hi = *std::max_element(ys.begin(), ys.end());
  double mu = std::clamp(start, lo, hi);
  double best_mu = mu;
  double best_abs = std::numeric_limits<double>::infinity();
  double best_d = 0.0;
  int it = 0;
  for (; it < 400; ++it) {
    double deriv = 0.0;
    double slope = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double r = mu - ys[i];
      if (r > h) {
        deriv += ws[i] * h;
      } else if (r < -h) {
        deriv -= ws[i] * h;
      } else {
        deriv += ws[i] * r;
        slope += ws[i];
      }
    }
    if (std::abs(deriv) < best_abs) {
      best_abs = std::abs(deriv);
      best_mu = mu;
      best_d = deriv;
    }
    if (std::abs(deriv) <= gtol) break;
    if (deriv < 0.0) {
      lo = mu;
    } else {
      hi = mu;
    }
    const double floor = 4.0 * std::numeric_limits<double>::epsilon() * std::max({1.0, std::abs(lo), std::abs(hi)});
    if (hi - lo <= floor) break;
    double next = slope > 0.0 ? mu - deriv / slope : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    mu = next;
  }
  return {best_mu, best_d, it + 1};
}

}  // namespace

LossMinimum minimize_weighted_loss(const Eigen::MatrixXd& samples, const WeightVector& w, const LossKind& kind,
                                   double tol, const std::optional<Eigen::VectorXd>& warm_start) {
  if (w.size() != samples.rows()) throw DimensionMismatch("weight length does not match sample count");
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  const double mass = w.total();
  if (!(mass > 0.0)) throw DegenerateWeights("all weights are zero");
  if (!samples.allFinite()) throw DomainError("non-finite sample");
  const Eigen::Index d = samples.cols();
  if (warm_start && warm_start->size() != d) throw DimensionMismatch("warm start has wrong dimension");
  const double h = kind.clip();
  const double gtol = tol * std::max(1.0, mass * h);

  LossMinimum out;
  if (kind.family == LossFamily::kEntrywise) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      if (w[i] > 0.0) active.push_back(i);
    }
    std::vector<double> ws(active.size());
    std::vector<double> ys(active.size());
    for (std::size_t a = 0; a < active.size(); ++a) ws[a] = w[active[a]];
    const Eigen::VectorXd start = warm_start ? *warm_start : coordinate_median(samples, w.values());
    const double coord_tol = gtol / std::sqrt(static_cast<double>(d));
    out.location.resize(d);
    double sq = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (std::size_t a = 0; a < active.size(); ++a) ys[a] = samples(active[a], j);
      const CoordinateSolution sol = solve_coordinate(ys, ws, h, coord_tol, start[j]);
      out.location[j] = sol.mu;
      out.iterations = std::max(out.iterations, sol.iterations);
      sq += sol.deriv * sol.deriv;
    }
    out.grad_norm = std::sqrt(sq);
    out.converged = out.grad_norm <= gtol;
    return out;
  }

  Eigen::VectorXd mu = warm_start ? *warm_start : coordinate_median(samples, w.values());
  const double cap_real = 10.0 * std::ceil(h * h / tol);
  const long cap = static_cast<long>(std::min(cap_real, 1e6));
  Eigen::VectorXd best = mu;
  double best_norm = std::numeric_limits<double>::infinity();
  long it = 0;
  for (; it < cap; ++it) {
    const Eigen::VectorXd grad = transformed_residuals(samples, mu, kind).transpose() * w.values();
    const double gnorm = grad.norm();
    if (gnorm < best_norm) {
      best_norm = gnorm;
      best = mu;
    }
    if (gnorm <= gtol) break;
    mu -= grad / mass;
  }
  out.location = best;
  out.grad_norm = best_norm;
  out.iterations = static_cast<int>(it);
  out.converged = best_norm <= gtol;
  return out;
}

}  // namespace robloc
