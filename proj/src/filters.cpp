#include "robloc/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "robloc/distributions.hpp"
#include "robloc/errors.hpp"
#include "robloc/numerics.hpp"

namespace robloc {

void FilterConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidSpec("sigma must be positive");
  if (k < 1) throw InvalidSpec("k must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidSpec("alpha must lie in (0, 1]");
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidSpec("eps must lie in [0, 1)");
  if (!(guard_constant > 0.0)) throw InvalidSpec("guard constant must be positive");
  if (!(threshold_constant > 0.0)) throw InvalidSpec("threshold constant must be positive");
  if (!(tol > 0.0)) throw InvalidSpec("tolerance must be positive");
  if (max_iter_override && *max_iter_override < 1) throw InvalidSpec("iteration cap must be >= 1");
}

int FilterConfig::iteration_cap(Eigen::Index n) const {
  if (max_iter_override) return *max_iter_override;
  return static_cast<int>(std::ceil(2.0 * eps * static_cast<double>(n) - 1e-9)) + 1;
}

Eigen::MatrixXd transformed_covariance(const Dataset& data, const WeightVector& w, const Eigen::VectorXd& mu,
                                       const LossKind& kind) {
  if (w.size() != data.n()) throw DimensionMismatch("weight length does not match sample count");
  const Eigen::MatrixXd g = transformed_residuals(data.samples, mu, kind);
  return g.transpose() * w.values().asDiagonal() * g;
}

std::optional<WeightVector> downweight(const WeightVector& w, const Eigen::VectorXd& tau, DownweightMode mode,
                                       double budget) {
  const Eigen::Index n = w.size();
  if (tau.size() != n) throw DimensionMismatch("one score per weight required");
  if (!tau.allFinite() || (tau.array() < 0.0).any()) throw DomainError("scores must be finite and non-negative");
  double tau_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] > 0.0) tau_max = std::max(tau_max, tau[i]);
  }
  if (!(tau_max > 0.0)) return std::nullopt;

  Eigen::VectorXd out = w.values();
  auto apply = [&](Eigen::Index i) { out[i] = w[i] * std::max(0.0, (tau_max - tau[i]) / tau_max); };
  if (mode == DownweightMode::kAll) {
    for (Eigen::Index i = 0; i < n; ++i) apply(i);
  } else {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return tau[a] > tau[b]; });
    double cum = 0.0;
    for (Eigen::Index i : order) {
      apply(i);
      cum += w[i];
      if (cum > budget) break;
    }
  }
  return WeightVector(std::move(out), w.budget());
}

namespace {

struct PassResult {
  double value = 0.0;
  bool stop = false;
  Eigen::VectorXd tau;
  bool sdp_converged = true;
};

double clamp_budget(double b) { return std::min(b, std::nextafter(1.0, 0.0)); }

template <class Step>
Estimate run_filter(const Dataset& data, const FilterConfig& cfg, double threshold, DownweightMode mode,
                    Step&& step) {
  cfg.validate();
  const Eigen::Index n = data.n();
  if (n == 0) throw DegenerateWeights("empty dataset");
  const bool have_mask = data.truth && data.truth->corrupted.size() == static_cast<std::size_t>(n);
  const int cap = cfg.iteration_cap(n);
  const double budget = clamp_budget(2.0 * cfg.eps);

  WeightVector w = WeightVector::uniform(n, budget);
  std::optional<Eigen::VectorXd> warm;
  Estimate est{Eigen::VectorXd(), w, 0, 0, {}, false, threshold, 0.0};
  for (int pass = 1; pass <= cap; ++pass) {
    const LossMinimum lm = minimize_weighted_loss(data.samples, w, cfg.kind, cfg.tol, warm);
    warm = lm.location;
    const Eigen::MatrixXd g = transformed_residuals(data.samples, lm.location, cfg.kind);
    const PassResult r = step(g, w);

    TraceRecord rec;
    rec.value = r.value;
    rec.estimate = lm.location;
    rec.sdp_converged = r.sdp_converged;
    est.location = lm.location;
    est.iterations = pass;
    est.guard_value = r.value;
    if (r.stop) {
      est.converged = true;
      est.trace.push_back(std::move(rec));
      break;
    }
    if (pass == cap) {
      est.trace.push_back(std::move(rec));
      break;
    }
    std::optional<WeightVector> next = downweight(w, r.tau, mode, budget);
    if (!next) {
      est.trace.push_back(std::move(rec));
      break;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] > 0.0) rec.tau_max = std::max(rec.tau_max, r.tau[i]);
    }
    if (have_mask) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double removed = w[i] - (*next)[i];
        (data.truth->corrupted[i] ? rec.removed_bad : rec.removed_good) += removed;
      }
    }
    est.trace.push_back(std::move(rec));
    w = std::move(*next);
    ++est.downweights;
  }
  est.final_w = w;
  return est;
}

}  // namespace

Estimate filter_second_moment(const Dataset& data, const FilterConfig& cfg) {
  const double threshold = std::pow(cfg.guard_constant * cfg.sigma, 2);
  return run_filter(data, cfg, threshold, DownweightMode::kAll, [&](const Eigen::MatrixXd& g, const WeightVector& w) {
    const Eigen::MatrixXd cov = g.transpose() * w.values().asDiagonal() * g;
    const EigenResult top = top_eigenpair(cov, 1e-10);
    PassResult r;
    r.value = std::max(0.0, top.value);
    r.stop = r.value <= threshold;
    if (!r.stop) r.tau = (g * top.vector).array().square();
    return r;
  });
}

Estimate filter_higher_moment(const Dataset& data, const FilterConfig& cfg) {
  const double threshold = std::pow(cfg.guard_constant * cfg.sigma, 2 * cfg.k);
  return run_filter(data, cfg, threshold, DownweightMode::kAll, [&](const Eigen::MatrixXd& g, const WeightVector& w) {
    const SdpResult sdp = max_pseudo_expectation(MomentPolynomial(cfg.k, g, w.values()), cfg.sdp);
    PassResult r;
    r.value = sdp.value;
    r.sdp_converged = sdp.converged;
    r.stop = sdp.converged && sdp.value <= threshold;
    if (!r.stop) r.tau = scores_from_pE(sdp.pE, g);
    return r;
  });
}

Estimate filter_near_optimal(const Dataset& data, const Eigen::VectorXd& sigma_diag, const FilterConfig& cfg) {
  if (sigma_diag.size() != data.d()) throw DimensionMismatch("diagonal estimate has wrong dimension");
  if (!sigma_diag.allFinite() || (sigma_diag.array() < 0.0).any()) throw DomainError("diagonal estimate must be >= 0");
  const double n = static_cast<double>(data.n());
  const double e = cfg.eps;
  const double rate = e > 0.0 ? std::max(e * std::log(1.0 / e), 1.0 / n) : 1.0 / n;
  const double threshold = cfg.threshold_constant * rate / std::pow(cfg.alpha, 3);
  const Eigen::MatrixXd target = sigma_diag.asDiagonal();
  return run_filter(data, cfg, threshold, DownweightMode::kTopBudget,
                    [&](const Eigen::MatrixXd& g, const WeightVector& w) {
                      const Eigen::MatrixXd cov = g.transpose() * w.values().asDiagonal() * g;
                      // top algebraic eigenvalue: downweighting can only lower
                      // Sigma_f, so the negative side is not a violation
                      const EigenResult top = top_eigenpair(cov - target, 1e-10);
                      PassResult r;
                      r.value = top.value;
                      r.stop = r.value <= threshold;
                      if (!r.stop) r.tau = (g * top.vector).array().square();
                      return r;
                    });
}

Estimate filter_near_optimal_paired(const Dataset& data, const FilterConfig& cfg, const PairingOptions& opt) {
  cfg.validate();
  auto [noise, loc] = pair_transform(data);
  const double h_pair = opt.h_pair ? *opt.h_pair : std::sqrt(2.0) * cfg.kind.clip();
  const double trim = opt.trim ? *opt.trim : default_trim(cfg.eps);
  const Eigen::VectorXd diag = estimate_sigma_f_diag(noise, h_pair, trim);
  FilterConfig inner = cfg;
  inner.kind = LossKind{cfg.kind.family, HuberParams(h_pair)};
  inner.eps = std::min(2.0 * cfg.eps, clamp_budget(1.0));
  Estimate est = filter_near_optimal(loc, diag, inner);
  est.location /= 2.0;
  for (TraceRecord& rec : est.trace) rec.estimate /= 2.0;
  return est;
}

double default_sigma(const LossKind& kind, double rho, int k, double lambda_max) {
  if (!(rho > 0.0) || k < 1 || !(lambda_max > 0.0)) throw DomainError("default_sigma needs rho > 0, k >= 1, lambda > 0");
  if (kind.family == LossFamily::kEntrywise) return 2.0 * rho;
  return 2.0 * rho * std::sqrt(static_cast<double>(k) * lambda_max);
}

}  // namespace robloc
