#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <vector>

namespace robloc {

/// p(v) = sum_i w_i <v, g_i>^{2k}, kept implicit through the vectors.
struct MomentPolynomial {
  int k = 1;
  Eigen::MatrixXd vectors;  // n x d, row i is g_i
  Eigen::VectorXd weights;  // n

  MomentPolynomial(int k, Eigen::MatrixXd vectors, Eigen::VectorXd weights);
  static MomentPolynomial uniform(int k, Eigen::MatrixXd vectors);

  Eigen::Index dim() const { return vectors.cols(); }
  double evaluate(const Eigen::VectorXd& v) const;
};

/// Monomial basis of degree <= 2k in d variables, graded lexicographic.
/// Built once per (d, k) and shared.
struct MonomialTable {
  int d = 0;
  int k = 0;
  std::vector<std::vector<int>> monomials;  // all of degree <= 2k
  int half_size = 0;                        // first half_size entries have degree <= k
  Eigen::MatrixXi pair_index;               // half x half -> index of the product monomial
  Eigen::VectorXd pair_count;               // how often each monomial appears in the moment matrix
  std::vector<int> top_degree;              // indices of degree exactly 2k
  Eigen::VectorXd multinomial;              // (2k)! / prod q_j! for each entry of top_degree
  Eigen::VectorXd sphere_moments;           // moments of the uniform law on the sphere
  /// Orthonormal basis of the complement of the polynomials (|v|^2 - 1) q,
  /// which every sphere-feasible moment matrix annihilates.
  Eigen::MatrixXd range_basis;
  double sphere_min_eig = 0.0;  // lambda_min of M(sphere_moments) on range_basis, > 0
  std::map<std::vector<int>, int> lookup;

  /// Linear constraints A y = b (normalization and sphere) with the factored
  /// A diag(pair_count)^{-1} A^T; filled in by monomial_table.
  struct Constraints;
  std::shared_ptr<const Constraints> constraints;

  /// -1 when the exponents are not in the table.
  int index_of(const std::vector<int>& exponents) const;
};

std::shared_ptr<const MonomialTable> monomial_table(int d, int k);

/// Degree-2k pseudo-expectation on the unit sphere, stored as its moments
/// y_q = E~[v^q] for |q| <= 2k. The moment matrix is M(y)_{ab} = y_{a+b}.
struct PseudoExpectation {
  std::shared_ptr<const MonomialTable> table;
  Eigen::VectorXd moments;

  int k() const { return table->k; }
  int d() const { return table->d; }
  Eigen::MatrixXd moment_matrix() const;
  /// E~ <v, g>^{2k}.
  double power_expectation(const Eigen::VectorXd& g) const;

  /// Largest violation of the sphere constraints E~[q (|v|^2 - 1)] = 0 and of
  /// the normalization E~[1] = 1.
  double sphere_residual() const;
  /// max(0, -lambda_min(M)).
  double psd_violation() const;

  static PseudoExpectation point_mass(const Eigen::VectorXd& v, int k);
  static PseudoExpectation uniform_sphere(int d, int k);
};

struct SdpOptions {
  double tol = 1e-9;            // relative residual tolerance
  int max_iter = 200000;
  double over_relaxation = 1.6;
  /// k = 1 is solved as the top eigenpair (the degree-2 relaxation is exact);
  /// turn off to force the splitting solver.
  bool closed_form_k1 = true;
  int max_basis = 1000;  // half-degree monomial count; d = 16, k = 3 is 969
  int max_k = 3;
};

struct SdpResult {
  double value = 0.0;
  PseudoExpectation pE;
  bool converged = false;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

/// max E~ p(v) over degree-2k pseudo-expectations on the sphere. Solved by
/// ADMM on the split M(y) = X, X PSD, with the linear constraints on y kept
/// exact in every y-step.
SdpResult max_pseudo_expectation(const MomentPolynomial& p, const SdpOptions& opt = {});

/// tau_i = max(0, E~ <v, g_i>^{2k}).
Eigen::VectorXd scores_from_pE(const PseudoExpectation& pE, const Eigen::MatrixXd& vectors);

struct Certificate {
  bool holds = false;
  double value = 0.0;
  double threshold = 0.0;  // bound^{2k}
  bool solver_converged = false;
  explicit operator bool() const { return holds; }
};

/// Whether p(v) <= (bound |v|)^{2k} has a degree-2k SoS proof modulo the
/// sphere, decided through the dual pseudo-expectation problem. A solver that
/// did not converge never certifies.
Certificate check_certificate(const MomentPolynomial& p, double bound, const SdpOptions& opt = {});

/// check_certificate on the uniform-weight polynomial of the given vectors.
Certificate certify_f_moments(const Eigen::MatrixXd& vectors, int k, double sigma, const SdpOptions& opt = {});

}  // namespace robloc
