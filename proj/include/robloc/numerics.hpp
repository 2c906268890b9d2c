#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace robloc {

struct EigenResult {
  double value = 0.0;
  Eigen::VectorXd vector;  // unit norm
  bool converged = false;
  int iterations = 0;
};

/// Largest (algebraic) eigenpair of a symmetric matrix by shifted power
/// iteration. Up to three independent random starts are tried; the first one
/// whose residual ||M v - value v|| drops below tol * max(1, ||M||) is
/// returned. If none does, the start with the largest Rayleigh quotient is
/// returned with converged = false. The input is symmetrized first.
EigenResult top_eigenpair(const Eigen::MatrixXd& m, double tol = 1e-10, std::uint64_t seed = 0x9e3779b97f4a7c15ULL);

/// Largest |eigenvalue| of a - b.
double spectral_norm_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol = 1e-10);

}  // namespace robloc
