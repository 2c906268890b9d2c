#include "robloc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "robloc/errors.hpp"
#include "robloc/numerics.hpp"
#include "robloc/sos.hpp"

namespace robloc {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

Eigen::VectorXd to_vector(const std::string& key, const std::string& v) {
  const auto toks = split_list(v);
  Eigen::VectorXd out(static_cast<Eigen::Index>(toks.size()));
  for (std::size_t i = 0; i < toks.size(); ++i) out[static_cast<Eigen::Index>(i)] = to_double(key, toks[i]);
  return out;
}

void check_dimension(const Eigen::VectorXd& v, Eigen::Index d, const char* what) {
  if (v.size() != 0 && v.size() != d) throw ConfigError(std::string(what) + " must have d entries");
}

LossKind loss_kind(const ExperimentConfig& cfg, double h) { return {cfg.loss, HuberParams(h)}; }

double lambda_max_of_scatter(const ExperimentConfig& cfg) {
  if (cfg.family != ExperimentConfig::Family::kElliptical) return 1.0;
  return spaced_scatter(cfg.d, cfg.scatter_condition).diagonal().maxCoeff();
}

std::vector<int> moment_orders(const ExperimentConfig& cfg) {
  std::vector<int> ks;
  for (const auto& name : cfg.estimators) {
    const EstimatorSpec s = parse_estimator(name, cfg.k);
    if (s.kind == EstimatorKind::kFilter2) ks.push_back(1);
    if (s.kind == EstimatorKind::kFilterK) ks.push_back(s.k);
  }
  if (cfg.adversary == "aligned") {
    if (cfg.adversary_target == "filter2") ks.push_back(1);
    if (cfg.adversary_target == "filterk") ks.push_back(cfg.k);
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

}  // namespace

EstimatorSpec parse_estimator(const std::string& raw, int default_k) {
  const std::string name = trim(raw);
  if (name == "mean") return {EstimatorKind::kMean, 1, name};
  if (name == "coord-median") return {EstimatorKind::kCoordMedian, 1, name};
  if (name == "filter2") return {EstimatorKind::kFilter2, 1, name};
  if (name == "near-optimal") return {EstimatorKind::kNearOptimal, 1, name};
  if (name == "filterk") {
    if (default_k < 1) throw ConfigError("k must be >= 1");
    return {EstimatorKind::kFilterK, default_k, "filterk(" + std::to_string(default_k) + ")"};
  }
  if (name.rfind("filterk(", 0) == 0 && name.back() == ')') {
    const long k = to_long("estimator", name.substr(8, name.size() - 9));
    if (k < 1 || k > 3) throw ConfigError("filterk order must be 1, 2 or 3");
    return {EstimatorKind::kFilterK, static_cast<int>(k), "filterk(" + std::to_string(k) + ")"};
  }
  throw ConfigError("unknown estimator '" + name + "'");
}

double ExperimentConfig::alpha() const { return family == Family::kSemiProduct ? semi.alpha : elliptical.alpha; }
double ExperimentConfig::rho() const { return family == Family::kSemiProduct ? semi.rho : elliptical.rho; }

void ExperimentConfig::validate() const {
  if (d < 1) throw ConfigError("d must be >= 1");
  if (n < 4) throw ConfigError("n must be >= 4");
  if (eps_grid.empty()) throw ConfigError("eps grid is empty");
  for (double e : eps_grid) {
    if (!(e >= 0.0 && e <= 0.3)) throw ConfigError("eps values must lie in [0, 0.3]");
  }
  if (estimators.empty()) throw ConfigError("no estimators");
  for (const auto& e : estimators) parse_estimator(e, k);
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (k < 1 || k > 3) throw ConfigError("k must be 1, 2 or 3");
  static const char* adversaries[] = {"none", "cluster", "sign-flip", "aligned", "replace"};
  if (std::find(std::begin(adversaries), std::end(adversaries), adversary) == std::end(adversaries)) {
    throw ConfigError("unknown adversary '" + adversary + "'");
  }
  static const char* targets[] = {"none", "filter2", "filterk", "each"};
  if (std::find(std::begin(targets), std::end(targets), adversary_target) == std::end(targets)) {
    throw ConfigError("unknown adversary target '" + adversary_target + "'");
  }
  if (adversary_coordinate < 0 || adversary_coordinate >= d) throw ConfigError("adversary coordinate out of range");
  check_dimension(adversary_direction, d, "adversary_direction");
  check_dimension(adversary_point, d, "adversary_point");
  if (h && !(*h > 0.0)) throw ConfigError("h must be positive");
  if (sigma_mode == SigmaMode::kValue && !(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(guard_constant > 0.0) || !(threshold_constant > 0.0)) throw ConfigError("constants must be positive");
  if (calibration_n < 4) throw ConfigError("calibration_n must be >= 4");
  if (!(scatter_condition >= 1.0)) throw ConfigError("scatter_condition must be >= 1");
  try {
    if (family == Family::kSemiProduct) {
      SemiProductSpec spec = semi;
      spec.d = d;
      spec.validate();
    } else {
      EllipticalSpec spec = elliptical;
      spec.d = d;
      spec.scatter = spaced_scatter(d, scatter_condition);
      spec.normalized();
    }
  } catch (const InvalidSpec& e) {
    throw ConfigError(e.what());
  }
  true_location(*this);
}

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  bool eps_seen = false;
  bool est_seen = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (key == "distribution") {
      if (v == "semi-product") {
        cfg.family = ExperimentConfig::Family::kSemiProduct;
      } else if (v == "elliptical") {
        cfg.family = ExperimentConfig::Family::kElliptical;
      } else {
        throw ConfigError("unknown distribution '" + v + "'");
      }
    } else if (key == "magnitude") {
      if (v == "gaussian") {
        cfg.semi.magnitude.kind = MagnitudeLaw::Kind::kHalfGaussian;
      } else if (v == "cauchy") {
        cfg.semi.magnitude.kind = MagnitudeLaw::Kind::kHalfCauchy;
      } else if (v == "student-t") {
        cfg.semi.magnitude.kind = MagnitudeLaw::Kind::kHalfStudentT;
      } else if (v == "point-mass") {
        cfg.semi.magnitude.kind = MagnitudeLaw::Kind::kPointMass;
      } else {
        throw ConfigError("unknown magnitude law '" + v + "'");
      }
    } else if (key == "magnitude_scale") {
      cfg.semi.magnitude.scale = to_double(key, v);
    } else if (key == "nu") {
      cfg.semi.magnitude.nu = to_double(key, v);
    } else if (key == "shared_radial") {
      cfg.semi.magnitude.shared_radial = to_bool(key, v);
    } else if (key == "radial") {
      if (v == "chi") {
        cfg.elliptical.radial.kind = RadialLaw::Kind::kChi;
      } else if (v == "pareto") {
        cfg.elliptical.radial.kind = RadialLaw::Kind::kPareto;
      } else if (v == "point-mass") {
        cfg.elliptical.radial.kind = RadialLaw::Kind::kPointMass;
      } else {
        throw ConfigError("unknown radial law '" + v + "'");
      }
    } else if (key == "radial_a") {
      cfg.elliptical.radial.a = to_double(key, v);
    } else if (key == "radial_scale") {
      cfg.elliptical.radial.scale = to_double(key, v);
    } else if (key == "scatter_condition") {
      cfg.scatter_condition = to_double(key, v);
    } else if (key == "alpha") {
      cfg.semi.alpha = cfg.elliptical.alpha = to_double(key, v);
    } else if (key == "rho") {
      cfg.semi.rho = cfg.elliptical.rho = to_double(key, v);
    } else if (key == "n") {
      cfg.n = to_long(key, v);
    } else if (key == "d") {
      cfg.d = to_long(key, v);
    } else if (key == "location") {
      cfg.location = v;
    } else if (key == "eps") {
      if (!eps_seen) cfg.eps_grid.clear();
      eps_seen = true;
      for (const auto& tok : split_list(v)) cfg.eps_grid.push_back(to_double(key, tok));
    } else if (key == "adversary") {
      cfg.adversary = v;
    } else if (key == "adversary_distance") {
      cfg.adversary_distance = to_double(key, v);
    } else if (key == "adversary_direction") {
      cfg.adversary_direction = to_vector(key, v);
    } else if (key == "adversary_coordinate") {
      cfg.adversary_coordinate = to_long(key, v);
    } else if (key == "adversary_point") {
      cfg.adversary_point = to_vector(key, v);
    } else if (key == "adversary_target") {
      cfg.adversary_target = v;
    } else if (key == "adversary_fill") {
      cfg.adversary_fill = to_double(key, v);
    } else if (key == "estimator") {
      if (!est_seen) cfg.estimators.clear();
      est_seen = true;
      cfg.estimators.push_back(v);
    } else if (key == "seeds") {
      cfg.seeds = static_cast<int>(to_long(key, v));
    } else if (key == "seed") {
      cfg.base_seed = static_cast<std::uint64_t>(to_long(key, v));
    } else if (key == "loss") {
      if (v == "entrywise") {
        cfg.loss = LossFamily::kEntrywise;
      } else if (v == "norm-ball") {
        cfg.loss = LossFamily::kNormBall;
      } else {
        throw ConfigError("unknown loss '" + v + "'");
      }
    } else if (key == "h") {
      if (v == "auto") {
        cfg.h.reset();
      } else {
        cfg.h = to_double(key, v);
      }
    } else if (key == "sigma") {
      if (v == "auto") {
        cfg.sigma_mode = SigmaMode::kAuto;
      } else if (v == "default") {
        cfg.sigma_mode = SigmaMode::kDefault;
      } else {
        cfg.sigma_mode = SigmaMode::kValue;
        cfg.sigma = to_double(key, v);
      }
    } else if (key == "guard_constant") {
      cfg.guard_constant = to_double(key, v);
    } else if (key == "threshold_constant") {
      cfg.threshold_constant = to_double(key, v);
    } else if (key == "k") {
      cfg.k = static_cast<int>(to_long(key, v));
    } else if (key == "h_pair") {
      cfg.h_pair = to_double(key, v);
    } else if (key == "trim") {
      cfg.trim = to_double(key, v);
    } else if (key == "sdp_tol") {
      cfg.sdp_tol = to_double(key, v);
    } else if (key == "max_iter") {
      cfg.max_iter = static_cast<int>(to_long(key, v));
    } else if (key == "calibration_n") {
      cfg.calibration_n = to_long(key, v);
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(to_long(key, v));
    } else if (key == "output") {
      cfg.output = v;
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  return parse_config(is);
}

Eigen::VectorXd true_location(const ExperimentConfig& cfg) {
  const auto toks = split_list(cfg.location);
  if (toks.empty() || toks[0] == "zero") return Eigen::VectorXd::Zero(cfg.d);
  if (toks[0] == "random-unit") {
    const double scale = toks.size() > 1 ? to_double("location", toks[1]) : 1.0;
    std::mt19937_64 rng(splitmix(cfg.base_seed ^ 0x10CA7104ULL));
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(cfg.d);
    for (Eigen::Index j = 0; j < cfg.d; ++j) v[j] = normal(rng);
    return scale * v / v.norm();
  }
  Eigen::VectorXd v = to_vector("location", cfg.location);
  if (v.size() != cfg.d) throw ConfigError("location must have d entries");
  return v;
}

std::uint64_t clean_seed(const ExperimentConfig& cfg, int seed_index) {
  return splitmix(cfg.base_seed * 0x100000001b3ULL + static_cast<std::uint64_t>(seed_index));
}

std::uint64_t corruption_seed(const ExperimentConfig& cfg, int seed_index, std::size_t eps_index) {
  return splitmix(clean_seed(cfg, seed_index) ^ ((eps_index + 1) * 0xc2b2ae3d27d4eb4fULL));
}

namespace {

Dataset draw(const ExperimentConfig& cfg, Eigen::Index n, std::uint64_t seed) {
  const Eigen::VectorXd mu = true_location(cfg);
  if (cfg.family == ExperimentConfig::Family::kSemiProduct) {
    SemiProductSpec spec = cfg.semi;
    spec.d = cfg.d;
    return sample_semi_product(spec, mu, n, seed);
  }
  EllipticalSpec spec = cfg.elliptical;
  spec.d = cfg.d;
  spec.scatter = spaced_scatter(cfg.d, cfg.scatter_condition);
  return sample_elliptical(spec, mu, n, seed);
}

}  // namespace

Dataset sample_clean(const ExperimentConfig& cfg, int seed_index) { return draw(cfg, cfg.n, clean_seed(cfg, seed_index)); }

double resolve_clip(const ExperimentConfig& cfg, const Dataset& data) {
  if (cfg.h) return *cfg.h;
  const Dataset noise = pair_transform(data).first;
  if (cfg.loss == LossFamily::kEntrywise) {
    const double rho = estimate_rho_semi_product(noise, cfg.alpha());
    if (!(rho > 0.0)) throw DomainError("estimated rho is zero; set h explicitly");
    return 2.0 * rho;
  }
  const double b = estimate_rho_elliptical(noise, cfg.alpha());
  if (!(b > 0.0)) throw DomainError("estimated radius is zero; set h explicitly");
  return 20.0 * b;
}

Calibration calibrate(const ExperimentConfig& cfg) {
  Calibration cal;
  if (cfg.sigma_mode != SigmaMode::kAuto) return cal;
  const std::vector<int> ks = moment_orders(cfg);
  if (ks.empty()) return cal;
  Dataset big = draw(cfg, cfg.calibration_n, splitmix(cfg.base_seed ^ 0xCA11B4A7EULL));
  cal.h = resolve_clip(cfg, big);
  const Eigen::MatrixXd g = transformed_residuals(big.samples, true_location(cfg), loss_kind(cfg, cal.h));
  for (int k : ks) {
    SdpOptions opt;
    opt.tol = cfg.sdp_tol;
    const SdpResult r = max_pseudo_expectation(MomentPolynomial::uniform(k, g), opt);
    cal.sigma[k] = std::pow(std::max(r.value, 0.0), 1.0 / (2.0 * k));
  }
  return cal;
}

double resolve_sigma(const ExperimentConfig& cfg, const Calibration& cal, const LossKind& kind, int k) {
  switch (cfg.sigma_mode) {
    case SigmaMode::kValue:
      return cfg.sigma;
    case SigmaMode::kDefault:
      return default_sigma(kind, cfg.rho(), k, lambda_max_of_scatter(cfg));
    case SigmaMode::kAuto: {
      auto it = cal.sigma.find(k);
      if (it == cal.sigma.end()) throw ConfigError("no calibration for moment order " + std::to_string(k));
      if (!(it->second > 0.0)) throw DomainError("calibrated sigma is zero");
      return it->second;
    }
  }
  return cfg.sigma;
}

double guard_level(const ExperimentConfig& cfg, const Calibration& cal, const LossKind& kind, int k) {
  return std::pow(cfg.guard_constant * resolve_sigma(cfg, cal, kind, k), 2 * k);
}

Dataset corrupt_for(const ExperimentConfig& cfg, const Calibration& cal, const Dataset& clean, double eps,
                    std::uint64_t seed, const EstimatorSpec& target) {
  if (cfg.adversary == "none" || eps == 0.0) {
    return corrupt(clean, CorruptionPlan{0.0, ReplaceWith{Eigen::VectorXd::Zero(cfg.d)}, seed});
  }
  const Eigen::VectorXd mu = true_location(cfg);
  Adversary adv;
  if (cfg.adversary == "cluster") {
    Eigen::VectorXd dir = cfg.adversary_direction.size() ? cfg.adversary_direction : Eigen::VectorXd::Ones(cfg.d);
    adv = ClusterShift{dir, cfg.adversary_distance};
  } else if (cfg.adversary == "sign-flip") {
    adv = SignFlipCoordinate{cfg.adversary_coordinate};
  } else if (cfg.adversary == "replace") {
    Eigen::VectorXd p = cfg.adversary_point;
    if (p.size() == 0) {
      p = mu;
      p[0] += cfg.adversary_distance;
    }
    adv = ReplaceWith{p};
  } else {
    const LossKind kind = loss_kind(cfg, resolve_clip(cfg, clean));
    AlignedTopEigvec a{cfg.adversary_distance, kind, std::nullopt};
    int k = 0;
    if (cfg.adversary_target == "filter2") k = 1;
    if (cfg.adversary_target == "filterk") k = cfg.k;
    if (cfg.adversary_target == "each") {
      if (target.kind == EstimatorKind::kFilter2) k = 1;
      if (target.kind == EstimatorKind::kFilterK) k = target.k;
    }
    if (k > 0) {
      Calibration local = cal;
      if (cfg.sigma_mode == SigmaMode::kAuto && !local.sigma.count(k)) {
        throw ConfigError("adversary target needs a calibrated sigma for k = " + std::to_string(k));
      }
      a.target = GuardTarget{k, guard_level(cfg, local, kind, k), cfg.adversary_fill};
    }
    adv = a;
  }
  return corrupt(clean, CorruptionPlan{eps, adv, seed});
}

EstimatorOutcome run_estimator(const EstimatorSpec& spec, const Dataset& data, const ExperimentConfig& cfg,
                               const Calibration& cal, double eps) {
  EstimatorOutcome out;
  if (spec.kind == EstimatorKind::kMean) {
    out.location = data.samples.colwise().mean().transpose();
    return out;
  }
  if (spec.kind == EstimatorKind::kCoordMedian) {
    out.location = coordinate_median(data.samples);
    return out;
  }
  const LossKind kind = loss_kind(cfg, resolve_clip(cfg, data));
  FilterConfig fc;
  fc.kind = kind;
  fc.k = spec.kind == EstimatorKind::kFilterK ? spec.k : 1;
  fc.sigma = spec.kind == EstimatorKind::kNearOptimal ? 1.0 : resolve_sigma(cfg, cal, kind, fc.k);
  fc.alpha = cfg.alpha();
  fc.eps = eps;
  fc.guard_constant = cfg.guard_constant;
  fc.threshold_constant = cfg.threshold_constant;
  fc.max_iter_override = cfg.max_iter;
  fc.sdp.tol = cfg.sdp_tol;
  if (spec.kind == EstimatorKind::kFilter2) {
    out.estimate = filter_second_moment(data, fc);
  } else if (spec.kind == EstimatorKind::kFilterK) {
    out.estimate = filter_higher_moment(data, fc);
  } else {
    out.estimate = filter_near_optimal_paired(data, fc, PairingOptions{cfg.h_pair, cfg.trim});
  }
  out.location = out.estimate->location;
  out.iterations = out.estimate->iterations;
  out.converged = out.estimate->converged;
  out.guard_value = out.estimate->guard_value;
  return out;
}

std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<EstimatorSpec> specs;
  for (const auto& e : cfg.estimators) specs.push_back(parse_estimator(e, cfg.k));
  const Calibration cal = calibrate(cfg);
  const Eigen::VectorXd mu = true_location(cfg);

  struct Cell {
    std::size_t eps_index;
    int seed;
  };
  std::vector<Cell> cells;
  for (int s = 0; s < cfg.seeds; ++s) {
    for (std::size_t e = 0; e < cfg.eps_grid.size(); ++e) cells.push_back({e, s});
  }

  std::vector<std::pair<std::size_t, ReportRow>> rows;
  std::mutex mu_rows;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      const Cell cell = cells[c];
      const double eps = cfg.eps_grid[cell.eps_index];
      const Dataset clean = sample_clean(cfg, cell.seed);
      const std::uint64_t cseed = corruption_seed(cfg, cell.seed, cell.eps_index);
      std::optional<Dataset> shared;
      std::vector<std::pair<std::size_t, ReportRow>> local;
      for (std::size_t si = 0; si < specs.size(); ++si) {
        const EstimatorSpec& spec = specs[si];
        ReportRow row;
        row.estimator = spec.name;
        row.eps = eps;
        row.seed = cell.seed;
        row.guard_value = std::numeric_limits<double>::quiet_NaN();
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const Dataset* data = nullptr;
          Dataset own;
          if (cfg.adversary_target == "each") {
            own = corrupt_for(cfg, cal, clean, eps, cseed, spec);
            data = &own;
          } else {
            if (!shared) shared = corrupt_for(cfg, cal, clean, eps, cseed, spec);
            data = &*shared;
          }
          const EstimatorOutcome o = run_estimator(spec, *data, cfg, cal, eps);
          row.error = (o.location - mu).norm();
          row.iterations = o.iterations;
          row.converged = o.converged;
          row.guard_value = o.guard_value;
        } catch (const std::exception& ex) {
          row.error = std::numeric_limits<double>::quiet_NaN();
          row.converged = false;
          row.failure = ex.what();
        }
        row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        local.emplace_back(si, std::move(row));
      }
      std::lock_guard<std::mutex> lock(mu_rows);
      for (auto& r : local) rows.push_back(std::move(r));
    }
  };
  const int nthreads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(cells.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    if (a.second.eps != b.second.eps) return a.second.eps < b.second.eps;
    return a.second.seed < b.second.seed;
  });
  std::vector<ReportRow> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.push_back(std::move(r.second));
  return out;
}

void write_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << kCsvHeader << '\n';
  char buf[512];
  for (const ReportRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6g,%d,%.10g,%d,%.3f,%d,%.10g\n", r.estimator.c_str(), r.eps, r.seed, r.error,
                  r.iterations, r.runtime_ms, r.converged ? 1 : 0, r.guard_value);
    os << buf;
  }
}

std::map<double, double> median_errors(const std::vector<ReportRow>& rows, const std::string& estimator) {
  std::map<double, std::vector<double>> groups;
  for (const ReportRow& r : rows) {
    if (r.estimator == estimator && std::isfinite(r.error)) groups[r.eps].push_back(r.error);
  }
  std::map<double, double> out;
  for (auto& [eps, errs] : groups) {
    std::sort(errs.begin(), errs.end());
    const std::size_t m = errs.size();
    out[eps] = m % 2 ? errs[m / 2] : 0.5 * (errs[m / 2 - 1] + errs[m / 2]);
  }
  return out;
}

double fit_scaling_exponent(const std::vector<ReportRow>& rows, const std::string& estimator) {
  std::map<double, int> counts;
  for (const ReportRow& r : rows) {
    if (r.estimator == estimator && r.eps > 0.0 && std::isfinite(r.error)) ++counts[r.eps];
  }
  std::vector<double> xs;
  std::vector<double> ys;
  const auto med = median_errors(rows, estimator);
  for (const auto& [eps, c] : counts) {
    if (c < 5) continue;
    const double m = med.at(eps);
    if (!(m > 0.0)) throw DomainError("median error is zero; log-log fit undefined");
    xs.push_back(std::log(eps));
    ys.push_back(std::log(m));
  }
  if (xs.size() < 3) throw InvalidSpec("scaling fit needs at least 3 eps > 0 values with 5 seeds each");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace robloc
