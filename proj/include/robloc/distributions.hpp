#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <variant>

#include "robloc/dataset.hpp"
#include "robloc/losses.hpp"

namespace robloc {

/// Law of the per-coordinate magnitudes |eta_j| of a semi-product sample.
/// With shared_radial set, one magnitude m is drawn per row from the law and
/// coordinate j gets m * |z_j| with z_j standard normal, which correlates the
/// magnitudes across coordinates.
struct MagnitudeLaw {
  enum class Kind { kHalfGaussian, kHalfCauchy, kHalfStudentT, kPointMass };
  Kind kind = Kind::kHalfGaussian;
  double scale = 1.0;  // also the point-mass value
  double nu = 1.0;     // Student-t degrees of freedom
  bool shared_radial = false;

  static MagnitudeLaw half_gaussian(double scale = 1.0) { return {Kind::kHalfGaussian, scale, 1.0, false}; }
  static MagnitudeLaw half_cauchy(double scale = 1.0) { return {Kind::kHalfCauchy, scale, 1.0, false}; }
  static MagnitudeLaw half_student_t(double nu, double scale = 1.0) { return {Kind::kHalfStudentT, scale, nu, false}; }
  static MagnitudeLaw point_mass(double c) { return {Kind::kPointMass, c, 1.0, false}; }
  MagnitudeLaw shared() const {
    MagnitudeLaw out = *this;
    out.shared_radial = true;
    return out;
  }
};

struct SemiProductSpec {
  Eigen::Index d = 1;
  MagnitudeLaw magnitude;
  double alpha = 0.5;
  double rho = 1.0;

  void validate() const;
};

struct RadialLaw {
  enum class Kind { kChi, kPareto, kPointMass };
  Kind kind = Kind::kChi;
  double a = 2.0;      // Pareto tail index
  double scale = 1.0;  // Pareto minimum, or the point-mass value

  static RadialLaw chi() { return {Kind::kChi, 2.0, 1.0}; }
  static RadialLaw pareto(double a, double scale = 1.0) { return {Kind::kPareto, a, scale}; }
  static RadialLaw point_mass(double c) { return {Kind::kPointMass, 2.0, c}; }
};

/// eta = R * Sigma^{1/2} * U. The scatter is rescaled to trace d on
/// construction through normalized().
struct EllipticalSpec {
  Eigen::Index d = 1;
  Eigen::MatrixXd scatter;
  RadialLaw radial;
  double alpha = 0.5;
  double rho = 1.0;

  void validate() const;
  EllipticalSpec normalized() const;
};

/// Diagonal scatter with eigenvalues evenly spaced in [1, condition], trace d.
Eigen::MatrixXd spaced_scatter(Eigen::Index d, double condition);

Dataset sample_semi_product(const SemiProductSpec& spec, const Eigen::VectorXd& mu, Eigen::Index n,
                            std::uint64_t seed);
Dataset sample_elliptical(const EllipticalSpec& spec, const Eigen::VectorXd& mu, Eigen::Index n,
                          std::uint64_t seed);

struct ClusterShift {
  Eigen::VectorXd direction;
  double distance = 10.0;
};

/// Pushes coordinate j of every corrupted row to the positive side of the
/// centre, y_ij <- c_j + |y_ij - c_j|.
struct SignFlipCoordinate {
  Eigen::Index coordinate = 0;
};

/// Optional budget for the aligned adversary: the corruption is placed so
/// that the directional 2k-th transformed moment along v is about
/// fill * level, which keeps a filter with that guard level from firing.
struct GuardTarget {
  int k = 1;
  double level = 0.0;
  double fill = 0.95;
};

/// All corrupted rows are moved to centre + s * v, where v is the top
/// eigenvector of the clean transformed covariance at the centre and s is
/// the distance (or the guard-targeted value in [0, distance]).
struct AlignedTopEigvec {
  double distance = 10.0;
  LossKind kind = LossKind::entrywise(2.0);
  std::optional<GuardTarget> target;
};

struct ReplaceWith {
  Eigen::VectorXd point;
};

using Adversary = std::variant<ClusterShift, SignFlipCoordinate, AlignedTopEigvec, ReplaceWith>;

struct CorruptionPlan {
  double eps = 0.0;
  Adversary adversary;
  std::uint64_t seed = 0;
};

/// Number of rows an eps-plan alters in a sample of size n: floor(eps * n).
Eigen::Index corruption_count(double eps, Eigen::Index n);

/// Replaces corruption_count(eps, n) seeded-random rows. The centre used by
/// the location-aware adversaries is the true location when known and the
/// coordinate-wise median otherwise. Existing masks are kept (ORed).
Dataset corrupt(const Dataset& data, const CorruptionPlan& plan);

/// Disjoint-quarter pairing on m = floor(n/4): noise row i is y_i - y_{m+i},
/// location row i is y_{2m+i} + y_{3m+i}. A pair is corrupted if either
/// member is. Truth locations become 0 and 2 mu*.
std::pair<Dataset, Dataset> pair_transform(const Dataset& data);

/// The ceil((alpha^2/2) m)-th smallest row norm of the noise half.
double estimate_rho_elliptical(const Dataset& noise_half, double alpha);

/// Largest over coordinates of the ceil((alpha^2/2) m)-th smallest |xi_ij|.
double estimate_rho_semi_product(const Dataset& noise_half, double alpha);

/// Per coordinate, the symmetric trimmed mean of huber_deriv(xi_ij, h)^2.
Eigen::VectorXd estimate_sigma_f_diag(const Dataset& noise_half, double h, double trim);

/// Default trim fraction max(eps, 0.02).
inline double default_trim(double eps) { return eps > 0.02 ? eps : 0.02; }

/// Index (1-based) of the q-quantile order statistic among m values:
/// ceil(q * m), clamped to [1, m].
Eigen::Index order_statistic_index(double q, Eigen::Index m);

}  // namespace robloc
