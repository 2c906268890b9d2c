#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "robloc/dataset.hpp"
#include "robloc/distributions.hpp"
#include "robloc/filters.hpp"

namespace robloc {

enum class EstimatorKind { kMean, kCoordMedian, kFilter2, kFilterK, kNearOptimal };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::kMean;
  int k = 1;         // only for kFilterK
  std::string name;  // canonical spelling used in reports
};

/// "mean", "coord-median", "filter2", "filterk" (uses default_k),
/// "filterk(K)" or "near-optimal". Throws ConfigError otherwise.
EstimatorSpec parse_estimator(const std::string& name, int default_k);

enum class SigmaMode { kValue, kAuto, kDefault };

struct ExperimentConfig {
  enum class Family { kSemiProduct, kElliptical };
  Family family = Family::kSemiProduct;
  SemiProductSpec semi;
  EllipticalSpec elliptical;  // scatter is rebuilt from scatter_condition
  double scatter_condition = 1.0;

  Eigen::Index n = 1000;
  Eigen::Index d = 5;
  std::string location = "zero";  // zero | random-unit SCALE | explicit list
  std::vector<double> eps_grid{0.0};

  std::string adversary = "none";  // none | cluster | sign-flip | aligned | replace
  double adversary_distance = 10.0;
  Eigen::VectorXd adversary_direction;  // empty: all-ones
  Eigen::Index adversary_coordinate = 0;
  Eigen::VectorXd adversary_point;      // empty: location + distance e_1
  std::string adversary_target = "none";  // none | filter2 | filterk | each
  double adversary_fill = 0.95;

  std::vector<std::string> estimators{"mean"};
  int seeds = 5;
  std::uint64_t base_seed = 1;

  LossFamily loss = LossFamily::kEntrywise;
  std::optional<double> h;  // nullopt: estimated from the data
  SigmaMode sigma_mode = SigmaMode::kAuto;
  double sigma = 1.0;
  double guard_constant = 100.0;
  double threshold_constant = 10.0;
  int k = 2;
  std::optional<double> h_pair;
  std::optional<double> trim;
  double sdp_tol = 1e-9;
  std::optional<int> max_iter;
  Eigen::Index calibration_n = 20000;
  int threads = 1;
  std::string output;

  void validate() const;
  double alpha() const;
  double rho() const;
};

/// key = value lines; '#' starts a comment; eps and estimator may repeat.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);

Eigen::VectorXd true_location(const ExperimentConfig& cfg);

/// Clean sample for the given seed index; independent of eps.
Dataset sample_clean(const ExperimentConfig& cfg, int seed_index);
std::uint64_t clean_seed(const ExperimentConfig& cfg, int seed_index);
std::uint64_t corruption_seed(const ExperimentConfig& cfg, int seed_index, std::size_t eps_index);

/// Noise-scale calibration drawn once per experiment: sigma for every moment
/// order in use, computed from a large clean sample at the true location.
struct Calibration {
  std::map<int, double> sigma;  // moment order k -> sigma_k
  double h = 0.0;               // clip used when h is fixed; 0 when per-run
};

Calibration calibrate(const ExperimentConfig& cfg);

/// Clip h for one dataset: the configured value, or 2 rho^ (entrywise) /
/// 20 b (norm-ball) from the paired noise half.
double resolve_clip(const ExperimentConfig& cfg, const Dataset& data);

double resolve_sigma(const ExperimentConfig& cfg, const Calibration& cal, const LossKind& kind, int k);

/// Guard level that a targeted aligned adversary aims under, for moment order k.
double guard_level(const ExperimentConfig& cfg, const Calibration& cal, const LossKind& kind, int k);

Dataset corrupt_for(const ExperimentConfig& cfg, const Calibration& cal, const Dataset& clean, double eps,
                    std::uint64_t seed, const EstimatorSpec& target);

struct EstimatorOutcome {
  Eigen::VectorXd location;
  int iterations = 0;
  bool converged = true;
  double guard_value = std::numeric_limits<double>::quiet_NaN();
  std::optional<Estimate> estimate;  // filters only
};

EstimatorOutcome run_estimator(const EstimatorSpec& spec, const Dataset& data, const ExperimentConfig& cfg,
                               const Calibration& cal, double eps);

struct ReportRow {
  std::string estimator;
  double eps = 0.0;
  int seed = 0;
  double error = 0.0;
  int iterations = 0;
  double runtime_ms = 0.0;
  bool converged = false;
  double guard_value = 0.0;
  std::string failure;  // empty on success
};

/// Rows sorted by (estimator list order, eps, seed).
std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg);

inline constexpr const char* kCsvHeader = "estimator,eps,seed,error,iterations,runtime_ms,converged,guard_value";
void write_csv(std::ostream& os, const std::vector<ReportRow>& rows);

/// Least-squares slope of log(median error) against log(eps), eps > 0 only.
double fit_scaling_exponent(const std::vector<ReportRow>& rows, const std::string& estimator);

/// Median error per eps for one estimator.
std::map<double, double> median_errors(const std::vector<ReportRow>& rows, const std::string& estimator);

}  // namespace robloc
