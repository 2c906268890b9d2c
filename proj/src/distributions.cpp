#include "robloc/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "robloc/errors.hpp"
#include "robloc/numerics.hpp"

namespace robloc {

namespace {

void check_location(const Eigen::VectorXd& mu, Eigen::Index d) {
  if (mu.size() != d) throw DimensionMismatch("location has wrong dimension");
  if (!mu.allFinite()) throw DomainError("location must be finite");
}

double draw_magnitude(const MagnitudeLaw& law, std::mt19937_64& rng) {
  switch (law.kind) {
    case MagnitudeLaw::Kind::kHalfGaussian:
      return law.scale * std::abs(std::normal_distribution<double>()(rng));
    case MagnitudeLaw::Kind::kHalfCauchy:
      return law.scale * std::abs(std::cauchy_distribution<double>()(rng));
    case MagnitudeLaw::Kind::kHalfStudentT:
      return law.scale * std::abs(std::student_t_distribution<double>(law.nu)(rng));
    case MagnitudeLaw::Kind::kPointMass:
      return law.scale;
  }
  return 0.0;
}

double draw_radius(const RadialLaw& law, Eigen::Index d, std::mt19937_64& rng) {
  switch (law.kind) {
    case RadialLaw::Kind::kChi:
      return std::sqrt(std::chi_squared_distribution<double>(static_cast<double>(d))(rng));
    case RadialLaw::Kind::kPareto: {
      // inverse CDF; 1 - u lies in (0, 1]
      const double u = std::uniform_real_distribution<double>()(rng);
      return law.scale * std::pow(1.0 - u, -1.0 / law.a);
    }
    case RadialLaw::Kind::kPointMass:
      return law.scale;
  }
  return 0.0;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
  if (es.info() != Eigen::Success) throw InvalidSpec("scatter eigen-decomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double top = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-10 * top) throw InvalidSpec("scatter matrix is not positive semidefinite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Directional 2k-th moment of f(-s v) along v.
double aligned_moment(const Eigen::VectorXd& v, double s, const LossKind& kind, int k) {
  const Eigen::VectorXd g = loss_grad(-s * v, kind);
  return std::pow(v.dot(g), 2 * k);
}

}  // namespace

void SemiProductSpec::validate() const {
  if (d < 1) throw InvalidSpec("dimension must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidSpec("alpha must lie in (0, 1]");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidSpec("rho must be positive");
  if (!(magnitude.scale >= 0.0) || !std::isfinite(magnitude.scale)) throw InvalidSpec("magnitude scale must be >= 0");
  if (magnitude.kind == MagnitudeLaw::Kind::kHalfStudentT && !(magnitude.nu > 0.0)) {
    throw InvalidSpec("Student-t degrees of freedom must be positive");
  }
}

void EllipticalSpec::validate() const {
  if (d < 1) throw InvalidSpec("dimension must be positive");
  if (scatter.rows() != d || scatter.cols() != d) throw InvalidSpec("scatter must be d x d");
  if (!scatter.allFinite()) throw InvalidSpec("scatter must be finite");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidSpec("alpha must lie in (0, 1]");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidSpec("rho must be positive");
  if (radial.kind == RadialLaw::Kind::kPareto && !(radial.a > 0.0 && radial.scale > 0.0)) {
    throw InvalidSpec("Pareto radial law needs a > 0 and scale > 0");
  }
  if (radial.kind == RadialLaw::Kind::kPointMass && !(radial.scale >= 0.0)) {
    throw InvalidSpec("point-mass radius must be >= 0");
  }
}

EllipticalSpec EllipticalSpec::normalized() const {
  validate();
  EllipticalSpec out = *this;
  const double tr = scatter.trace();
  if (!(tr > 0.0)) throw InvalidSpec("scatter must have positive trace");
  out.scatter = scatter * (static_cast<double>(d) / tr);
  return out;
}

Eigen::MatrixXd spaced_scatter(Eigen::Index d, double condition) {
  if (d < 1 || !(condition >= 1.0)) throw InvalidSpec("spaced_scatter needs d >= 1 and condition >= 1");
  Eigen::VectorXd diag = Eigen::VectorXd::LinSpaced(d, 1.0, condition);
  if (d == 1) diag[0] = 1.0;
  diag *= static_cast<double>(d) / diag.sum();
  return diag.asDiagonal();
}

Dataset sample_semi_product(const SemiProductSpec& spec, const Eigen::VectorXd& mu, Eigen::Index n,
                            std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw InvalidSpec("sample count must be positive");
  check_location(mu, spec.d);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal;
  Dataset data;
  data.samples.resize(n, spec.d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shared = spec.magnitude.shared_radial ? draw_magnitude(spec.magnitude, rng) : 0.0;
    for (Eigen::Index j = 0; j < spec.d; ++j) {
      const double mag = spec.magnitude.shared_radial ? shared * std::abs(normal(rng)) : draw_magnitude(spec.magnitude, rng);
      const double sign = coin(rng) ? 1.0 : -1.0;
      data.samples(i, j) = mu[j] + sign * mag;
    }
  }
  data.truth = Truth{mu, std::vector<bool>(static_cast<std::size_t>(n), false), "semi-product"};
  return data;
}

Dataset sample_elliptical(const EllipticalSpec& spec_in, const Eigen::VectorXd& mu, Eigen::Index n,
                          std::uint64_t seed) {
  const EllipticalSpec spec = spec_in.normalized();
  if (n < 1) throw InvalidSpec("sample count must be positive");
  check_location(mu, spec.d);
  const Eigen::MatrixXd root = psd_sqrt(spec.scatter);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Dataset data;
  data.samples.resize(n, spec.d);
  Eigen::VectorXd z(spec.d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = draw_radius(spec.radial, spec.d, rng);
    double norm = 0.0;
    while (norm == 0.0) {
      for (Eigen::Index j = 0; j < spec.d; ++j) z[j] = normal(rng);
      norm = z.norm();
    }
    data.samples.row(i) = (mu + r * (root * (z / norm))).transpose();
  }
  data.truth = Truth{mu, std::vector<bool>(static_cast<std::size_t>(n), false), "elliptical"};
  return data;
}

Eigen::Index corruption_count(double eps, Eigen::Index n) {
  if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("eps must lie in [0, 1)");
  return static_cast<Eigen::Index>(std::floor(eps * static_cast<double>(n) + 1e-9));
}

Dataset corrupt(const Dataset& data, const CorruptionPlan& plan) {
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  const Eigen::Index count = corruption_count(plan.eps, n);
  Dataset out = data;
  if (!out.truth) {
    out.truth = Truth{Eigen::VectorXd(), std::vector<bool>(static_cast<std::size_t>(n), false), "unknown"};
  }
  if (out.truth->corrupted.size() != static_cast<std::size_t>(n)) out.truth->corrupted.assign(n, false);
  if (count == 0) return out;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(plan.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<Eigen::Index> chosen(order.begin(), order.begin() + count);

  const Eigen::VectorXd centre = data.truth && data.truth->location.size() == d ? data.truth->location
                                                                                 : coordinate_median(data.samples);

  std::visit(
      [&](const auto& adv) {
        using T = std::decay_t<decltype(adv)>;
        if constexpr (std::is_same_v<T, ClusterShift>) {
          if (adv.direction.size() != d) throw DimensionMismatch("cluster direction has wrong dimension");
          const double norm = adv.direction.norm();
          if (!(norm > 0.0)) throw InvalidSpec("cluster direction must be non-zero");
          const Eigen::RowVectorXd shift = (adv.distance / norm) * adv.direction.transpose();
          for (Eigen::Index i : chosen) out.samples.row(i) += shift;
        } else if constexpr (std::is_same_v<T, SignFlipCoordinate>) {
          if (adv.coordinate < 0 || adv.coordinate >= d) throw InvalidSpec("sign-flip coordinate out of range");
          const Eigen::Index j = adv.coordinate;
          for (Eigen::Index i : chosen) out.samples(i, j) = centre[j] + std::abs(out.samples(i, j) - centre[j]);
        } else if constexpr (std::is_same_v<T, ReplaceWith>) {
          if (adv.point.size() != d) throw DimensionMismatch("replacement point has wrong dimension");
          for (Eigen::Index i : chosen) out.samples.row(i) = adv.point.transpose();
        } else {
          const Eigen::MatrixXd g = transformed_residuals(data.samples, centre, adv.kind);
          const Eigen::MatrixXd cov = g.transpose() * g / static_cast<double>(n);
          Eigen::VectorXd v = top_eigenpair(cov, 1e-10, plan.seed ^ 0x5bd1e995ULL).vector;
          Eigen::Index big = 0;
          v.cwiseAbs().maxCoeff(&big);
          if (v[big] < 0.0) v = -v;
          double s = adv.distance;
          if (adv.target) {
            const GuardTarget& t = *adv.target;
            if (t.k < 1) throw InvalidSpec("guard target order must be >= 1");
            std::vector<bool> picked(static_cast<std::size_t>(n), false);
            for (Eigen::Index i : chosen) picked[i] = true;
            double clean = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
              if (!picked[i]) clean += std::pow(g.row(i).dot(v), 2 * t.k);
            }
            const double frac = static_cast<double>(count) / static_cast<double>(n);
            clean /= static_cast<double>(n);
            const double goal = t.fill * t.level;
            auto moment = [&](double x) { return clean + frac * aligned_moment(v, x, adv.kind, t.k); };
            if (moment(0.0) >= goal) {
              s = 0.0;
            } else if (moment(adv.distance) > goal) {
              double lo = 0.0;
              double hi = adv.distance;
              for (int it = 0; it < 200 && hi - lo > 1e-12 * adv.distance; ++it) {
                const double mid = 0.5 * (lo + hi);
                (moment(mid) > goal ? hi : lo) = mid;
              }
              s = lo;
            }
          }
          const Eigen::RowVectorXd point = (centre + s * v).transpose();
          for (Eigen::Index i : chosen) out.samples.row(i) = point;
        }
      },
      plan.adversary);

  for (Eigen::Index i : chosen) out.truth->corrupted[i] = true;
  return out;
}

std::pair<Dataset, Dataset> pair_transform(const Dataset& data) {
  const Eigen::Index n = data.n();
  if (n < 4) throw InvalidSpec("pair_transform needs at least 4 samples");
  const Eigen::Index m = n / 4;
  Dataset noise;
  Dataset loc;
  noise.samples = data.samples.middleRows(0, m) - data.samples.middleRows(m, m);
  loc.samples = data.samples.middleRows(2 * m, m) + data.samples.middleRows(3 * m, m);
  if (data.truth) {
    const Truth& t = *data.truth;
    std::vector<bool> nm(static_cast<std::size_t>(m), false);
    std::vector<bool> lm(static_cast<std::size_t>(m), false);
    if (t.corrupted.size() == static_cast<std::size_t>(n)) {
      for (Eigen::Index i = 0; i < m; ++i) {
        nm[i] = t.corrupted[i] || t.corrupted[m + i];
        lm[i] = t.corrupted[2 * m + i] || t.corrupted[3 * m + i];
      }
    }
    const Eigen::Index d = data.d();
    const bool known = t.location.size() == d;
    noise.truth = Truth{Eigen::VectorXd::Zero(d), nm, "pair-noise"};
    loc.truth = Truth{known ? Eigen::VectorXd(2.0 * t.location) : Eigen::VectorXd(), lm, "pair-location"};
  }
  return {std::move(noise), std::move(loc)};
}

Eigen::Index order_statistic_index(double q, Eigen::Index m) {
  const double raw = std::ceil(q * static_cast<double>(m) - 1e-9);
  return std::clamp<Eigen::Index>(static_cast<Eigen::Index>(raw), 1, m);
}

double estimate_rho_elliptical(const Dataset& noise_half, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in (0, 1]");
  const Eigen::Index m = noise_half.n();
  if (m == 0) throw InvalidSpec("empty noise half");
  std::vector<double> norms(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) norms[i] = noise_half.samples.row(i).norm();
  const Eigen::Index idx = order_statistic_index(0.5 * alpha * alpha, m) - 1;
  std::nth_element(norms.begin(), norms.begin() + idx, norms.end());
  return norms[idx];
}

double estimate_rho_semi_product(const Dataset& noise_half, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in (0, 1]");
  const Eigen::Index m = noise_half.n();
  if (m == 0) throw InvalidSpec("empty noise half");
  const Eigen::Index idx = order_statistic_index(0.5 * alpha * alpha, m) - 1;
  double best = 0.0;
  std::vector<double> col(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < noise_half.d(); ++j) {
    for (Eigen::Index i = 0; i < m; ++i) col[i] = std::abs(noise_half.samples(i, j));
    std::nth_element(col.begin(), col.begin() + idx, col.end());
    best = std::max(best, col[idx]);
  }
  return best;
}

Eigen::VectorXd estimate_sigma_f_diag(const Dataset& noise_half, double h, double trim) {
  if (!(trim >= 0.0 && trim < 0.25)) throw DomainError("trim must lie in [0, 0.25)");
  const HuberParams hp(h);
  const Eigen::Index m = noise_half.n();
  const Eigen::Index d = noise_half.d();
  if (m == 0) throw InvalidSpec("empty noise half");
  const Eigen::Index cut = static_cast<Eigen::Index>(std::floor(trim * static_cast<double>(m) + 1e-9));
  Eigen::VectorXd out(d);
  std::vector<double> col(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double f = huber_deriv(noise_half.samples(i, j), hp);
      col[i] = f * f;
    }
    std::sort(col.begin(), col.end());
    double total = 0.0;
    for (Eigen::Index i = cut; i < m - cut; ++i) total += col[i];
    out[j] = total / static_cast<double>(m - 2 * cut);
  }
  return out;
}

}  // namespace robloc
