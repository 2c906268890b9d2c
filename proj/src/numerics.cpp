#include "robloc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "robloc/errors.hpp"

namespace robloc {

namespace {

constexpr int kRestarts = 3;

Eigen::VectorXd random_unit(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(d);
  for (Eigen::Index i = 0; i < d; ++i) x[i] = normal(rng);
  const double norm = x.norm();
  if (norm == 0.0) {
    x.setZero();
    x[0] = 1.0;
    return x;
  }
  return x / norm;
}

}  // namespace

EigenResult top_eigenpair(const Eigen::MatrixXd& m, double tol, std::uint64_t seed) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DimensionMismatch("top_eigenpair needs a non-empty square matrix");
  if (!m.allFinite()) throw DomainError("top_eigenpair: non-finite matrix entry");
  if (!(tol > 0.0)) throw DomainError("top_eigenpair: tolerance must be positive");
  const Eigen::Index d = m.rows();
  const Eigen::MatrixXd s = 0.5 * (m + m.transpose());

  // Gershgorin discs; shifting by the lower end makes s + shift*I PSD, so the
  // iteration picks the algebraically largest eigenvalue.
  const Eigen::VectorXd radius = s.cwiseAbs().rowwise().sum() - s.diagonal().cwiseAbs();
  const double lower = (s.diagonal() - radius).minCoeff();
  const double upper = (s.diagonal() + radius).maxCoeff();
  const double bound = std::max(std::abs(lower), std::abs(upper));
  std::mt19937_64 rng(seed);
  if (bound == 0.0) return {0.0, random_unit(d, rng), true, 0};
  const double shift = std::max(0.0, -lower);

  // largest column norm is a lower bound on ||M||, so the stopping test below
  // implies residual <= tol * max(1, ||M||)
  const double col_norm = s.colwise().norm().maxCoeff();
  const int cap = 10 * static_cast<int>(d) * static_cast<int>(std::ceil(std::log(1.0 / tol)));

  EigenResult best;
  best.value = -std::numeric_limits<double>::infinity();
  for (int start = 0; start < kRestarts; ++start) {
    Eigen::VectorXd x = random_unit(d, rng);
    double value = x.dot(s * x);
    bool converged = false;
    int it = 0;
    for (; it < cap; ++it) {
      const Eigen::VectorXd sx = s * x;
      value = x.dot(sx);
      if ((sx - value * x).norm() <= tol * std::max({1.0, col_norm, std::abs(value)})) {
        converged = true;
        break;
      }
      Eigen::VectorXd next = sx + shift * x;
      const double norm = next.norm();
      if (norm == 0.0) break;
      x = next / norm;
    }
    if (converged) return {value, x, true, it};
    value = x.dot(s * x);
    if (value > best.value) best = {value, x, false, it};
  }
  return best;
}

double spectral_norm_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionMismatch("spectral_norm_diff: shape mismatch");
  const Eigen::MatrixXd diff = a - b;
  const double upper = top_eigenpair(diff, tol).value;
  const double lower = -top_eigenpair(-diff, tol).value;
  return std::max({std::abs(upper), std::abs(lower), 0.0});
}

}  // namespace robloc
