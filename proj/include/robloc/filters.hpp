#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "robloc/dataset.hpp"
#include "robloc/losses.hpp"
#include "robloc/sos.hpp"

namespace robloc {

struct FilterConfig {
  LossKind kind = LossKind::entrywise(2.0);
  double sigma = 1.0;  // bound on the transformed moments, amplitude units
  int k = 1;
  double alpha = 1.0;
  double eps = 0.0;
  /// Second-moment and higher-moment guards stop at (guard_constant * sigma)^{2k}.
  double guard_constant = 100.0;
  /// C of the near-optimal guard C * max(eps log(1/eps), 1/n) / alpha^3.
  double threshold_constant = 10.0;
  double tol = kDefaultLossTol;
  std::optional<int> max_iter_override;
  SdpOptions sdp;

  void validate() const;
  /// ceil(2 eps n) + 1 unless overridden.
  int iteration_cap(Eigen::Index n) const;
};

struct TraceRecord {
  double value = 0.0;  // spectral norm, top eigenvalue or pE maximum at this pass
  Eigen::VectorXd estimate;
  double removed_good = 0.0;  // weight removed from clean rows in this pass
  double removed_bad = 0.0;   // from corrupted rows; both 0 without truth
  double tau_max = 0.0;
  bool sdp_converged = true;
};

using FilterTrace = std::vector<TraceRecord>;

struct Estimate {
  Eigen::VectorXd location;
  WeightVector final_w;
  int iterations = 0;   // loop passes, including the final guard check
  int downweights = 0;  // passes that changed the weights
  FilterTrace trace;
  bool converged = false;  // guard satisfied before the cap
  double guard_threshold = 0.0;
  double guard_value = 0.0;  // value at the last pass
};

/// sum_i w_i g_i g_i^T with g_i = f(mu - y_i).
Eigen::MatrixXd transformed_covariance(const Dataset& data, const WeightVector& w, const Eigen::VectorXd& mu,
                                       const LossKind& kind);

enum class DownweightMode { kAll, kTopBudget };

/// w_i <- w_i (1 - tau_i / tau_max), with tau_max taken over rows of positive
/// weight. kTopBudget only touches the smallest prefix (tau descending, index
/// ascending) whose weight exceeds budget. Returns nullopt when tau_max = 0.
std::optional<WeightVector> downweight(const WeightVector& w, const Eigen::VectorXd& tau, DownweightMode mode,
                                       double budget = 0.0);

Estimate filter_second_moment(const Dataset& data, const FilterConfig& cfg);
Estimate filter_higher_moment(const Dataset& data, const FilterConfig& cfg);
/// Runs on data as given; sigma_diag estimates the diagonal of E f(eta) f(eta)^T.
/// The guard is the top eigenvalue of Sigma_f - diag(sigma_diag).
Estimate filter_near_optimal(const Dataset& data, const Eigen::VectorXd& sigma_diag, const FilterConfig& cfg);

struct PairingOptions {
  std::optional<double> h_pair;  // clip used on paired data; default sqrt(2) h
  std::optional<double> trim;    // default max(eps, 0.02)
};

/// pair_transform, diagonal estimate on the noise half, near-optimal filter on
/// the location half with budget 2 eps, then halve. final_w and the trace refer
/// to the location half.
Estimate filter_near_optimal_paired(const Dataset& data, const FilterConfig& cfg, const PairingOptions& opt = {});

/// 2 rho for entrywise losses; 2 rho sqrt(k lambda_max) for norm-ball losses.
double default_sigma(const LossKind& kind, double rho, int k, double lambda_max = 1.0);

}  // namespace robloc
