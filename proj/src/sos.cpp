#include "robloc/sos.hpp"

#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <mutex>
#include <utility>

#include "robloc/errors.hpp"
#include "robloc/numerics.hpp"

namespace robloc {

struct MonomialTable::Constraints {
  Eigen::SparseMatrix<double> a;  // rows: E~1 = 1, then one sphere row per |q| <= 2k-2
  Eigen::VectorXd b;
  Eigen::LLT<Eigen::MatrixXd> kkt;  // A D^{-1} A^T
};

MomentPolynomial::MomentPolynomial(int k_, Eigen::MatrixXd vectors_, Eigen::VectorXd weights_)
    : k(k_), vectors(std::move(vectors_)), weights(std::move(weights_)) {
  if (k < 1) throw InvalidSpec("moment order k must be >= 1");
  if (weights.size() != vectors.rows()) throw DimensionMismatch("one weight per vector required");
  if (vectors.cols() < 1) throw DimensionMismatch("vectors must have positive dimension");
  if (!vectors.allFinite() || !weights.allFinite()) throw DomainError("non-finite moment polynomial data");
  if ((weights.array() < 0.0).any()) throw DomainError("weights must be non-negative");
}

MomentPolynomial MomentPolynomial::uniform(int k, Eigen::MatrixXd vectors) {
  const Eigen::Index n = vectors.rows();
  if (n == 0) throw DimensionMismatch("no vectors");
  return MomentPolynomial(k, std::move(vectors), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

double MomentPolynomial::evaluate(const Eigen::VectorXd& v) const {
  if (v.size() != dim()) throw DimensionMismatch("point has wrong dimension");
  return weights.dot((vectors * v).array().pow(2 * k).matrix());
}

int MonomialTable::index_of(const std::vector<int>& exponents) const {
  auto it = lookup.find(exponents);
  return it == lookup.end() ? -1 : it->second;
}

namespace {

// All exponent vectors of total degree deg, in lexicographically decreasing order.
void exponents_of_degree(int d, int deg, std::vector<int>& cur, int j, std::vector<std::vector<int>>& out) {
  if (j == d - 1) {
    cur[j] = deg;
    out.push_back(cur);
    return;
  }
  for (int e = deg; e >= 0; --e) {
    cur[j] = e;
    exponents_of_degree(d, deg - e, cur, j + 1, out);
  }
  cur[j] = 0;
}

double sphere_moment(const std::vector<int>& q) {
  int total = 0;
  double logv = 0.0;
  for (int e : q) {
    if (e % 2) return 0.0;
    total += e;
    logv += std::lgamma(0.5 * e + 0.5) - std::lgamma(0.5);
  }
  const double half_d = 0.5 * static_cast<double>(q.size());
  logv += std::lgamma(half_d) - std::lgamma(half_d + 0.5 * total);
  return std::exp(logv);
}

std::shared_ptr<const MonomialTable> build_table(int d, int k) {
  auto t = std::make_shared<MonomialTable>();
  t->d = d;
  t->k = k;
  std::vector<int> cur(static_cast<std::size_t>(d), 0);
  for (int deg = 0; deg <= 2 * k; ++deg) {
    if (deg == k + 1) t->half_size = static_cast<int>(t->monomials.size());
    exponents_of_degree(d, deg, cur, 0, t->monomials);
  }
  const int total = static_cast<int>(t->monomials.size());
  for (int i = 0; i < total; ++i) t->lookup.emplace(t->monomials[i], i);

  const int half = t->half_size;
  t->pair_index.resize(half, half);
  t->pair_count = Eigen::VectorXd::Zero(total);
  std::vector<int> sum(static_cast<std::size_t>(d));
  for (int a = 0; a < half; ++a) {
    for (int b = 0; b < half; ++b) {
      for (int j = 0; j < d; ++j) sum[j] = t->monomials[a][j] + t->monomials[b][j];
      const int idx = t->lookup.at(sum);
      t->pair_index(a, b) = idx;
      t->pair_count[idx] += 1.0;
    }
  }

  double fact2k = std::tgamma(2.0 * k + 1.0);
  std::vector<double> mult;
  for (int i = 0; i < total; ++i) {
    int deg = 0;
    double denom = 1.0;
    for (int e : t->monomials[i]) {
      deg += e;
      denom *= std::tgamma(e + 1.0);
    }
    if (deg == 2 * k) {
      t->top_degree.push_back(i);
      mult.push_back(fact2k / denom);
    }
  }
  t->multinomial = Eigen::Map<Eigen::VectorXd>(mult.data(), static_cast<Eigen::Index>(mult.size()));

  t->sphere_moments.resize(total);
  for (int i = 0; i < total; ++i) t->sphere_moments[i] = sphere_moment(t->monomials[i]);

  // sphere rows: for every q with |q| <= 2k-2, sum_j y_{q+2e_j} - y_q = 0
  auto c = std::make_shared<MonomialTable::Constraints>();
  std::vector<Eigen::Triplet<double>> trip;
  trip.emplace_back(0, 0, 1.0);
  int row = 1;
  for (int i = 0; i < total; ++i) {
    int deg = 0;
    for (int e : t->monomials[i]) deg += e;
    if (deg > 2 * k - 2) continue;
    trip.emplace_back(row, i, -1.0);
    std::vector<int> up = t->monomials[i];
    for (int j = 0; j < d; ++j) {
      up[j] += 2;
      trip.emplace_back(row, t->lookup.at(up), 1.0);
      up[j] -= 2;
    }
    ++row;
  }
  c->a.resize(row, total);
  c->a.setFromTriplets(trip.begin(), trip.end());
  c->b = Eigen::VectorXd::Zero(row);
  c->b[0] = 1.0;
  const Eigen::VectorXd dinv = t->pair_count.cwiseInverse();
  const Eigen::SparseMatrix<double> ad = c->a * dinv.asDiagonal();
  c->kkt.compute(Eigen::MatrixXd(ad * c->a.transpose()));
  if (c->kkt.info() != Eigen::Success) throw InvalidSpec("sphere constraint system is singular");
  t->constraints = c;

  // null directions (|v|^2 - 1) q for |q| <= k-2, as coefficient vectors
  std::vector<Eigen::VectorXd> null_dirs;
  for (int i = 0; i < half; ++i) {
    int deg = 0;
    for (int e : t->monomials[i]) deg += e;
    if (deg > k - 2) continue;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(half);
    v[i] = -1.0;
    std::vector<int> up = t->monomials[i];
    for (int j = 0; j < d; ++j) {
      up[j] += 2;
      v[t->lookup.at(up)] += 1.0;
      up[j] -= 2;
    }
    null_dirs.push_back(v);
  }
  const Eigen::Index r = static_cast<Eigen::Index>(null_dirs.size());
  if (r == 0) {
    t->range_basis = Eigen::MatrixXd::Identity(half, half);
  } else {
    Eigen::MatrixXd nm(half, r);
    for (Eigen::Index j = 0; j < r; ++j) nm.col(j) = null_dirs[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(nm).householderQ();
    t->range_basis = q.rightCols(half - r);
  }

  PseudoExpectation unif{t, t->sphere_moments};
  const Eigen::MatrixXd reduced = t->range_basis.transpose() * unif.moment_matrix() * t->range_basis;
  t->sphere_min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(reduced, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  if (!(t->sphere_min_eig > 0.0)) throw InvalidSpec("uniform sphere moments are not strictly feasible");
  return t;
}

// Row-wise evaluation of the degree-2k monomials at g, weighted by the multinomials.
Eigen::VectorXd top_monomials(const MonomialTable& t, const Eigen::Ref<const Eigen::RowVectorXd>& g,
                              Eigen::MatrixXd& powers) {
  const int two_k = 2 * t.k;
  for (int j = 0; j < t.d; ++j) {
    powers(j, 0) = 1.0;
    for (int e = 1; e <= two_k; ++e) powers(j, e) = powers(j, e - 1) * g[j];
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(t.top_degree.size()));
  for (std::size_t s = 0; s < t.top_degree.size(); ++s) {
    const std::vector<int>& q = t.monomials[t.top_degree[s]];
    double v = t.multinomial[static_cast<Eigen::Index>(s)];
    for (int j = 0; j < t.d; ++j) {
      if (q[j]) v *= powers(j, q[j]);
    }
    out[static_cast<Eigen::Index>(s)] = v;
  }
  return out;
}

Eigen::MatrixXd build_moment_matrix(const MonomialTable& t, const Eigen::VectorXd& y) {
  const int half = t.half_size;
  Eigen::MatrixXd m(half, half);
  for (int b = 0; b < half; ++b) {
    for (int a = 0; a < half; ++a) m(a, b) = y[t.pair_index(a, b)];
  }
  return m;
}

Eigen::VectorXd adjoint(const MonomialTable& t, const Eigen::MatrixXd& x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.monomials.size()));
  const int half = t.half_size;
  for (int b = 0; b < half; ++b) {
    for (int a = 0; a < half; ++a) out[t.pair_index(a, b)] += x(a, b);
  }
  return out;
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& x) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (x + x.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double min_eig(const Eigen::MatrixXd& x) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(x, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

// Mix toward the uniform sphere moments just enough to make M(y) PSD.
// Both endpoints satisfy the linear constraints, so the mix does too.
Eigen::VectorXd repair(const MonomialTable& t, const Eigen::VectorXd& y) {
  const double lmin = min_eig(t.range_basis.transpose() * build_moment_matrix(t, y) * t.range_basis);
  if (lmin >= 0.0) return y;
  const double theta = -lmin / (t.sphere_min_eig - lmin);
  return (1.0 - theta) * y + theta * t.sphere_moments;
}

}  // namespace

std::shared_ptr<const MonomialTable> monomial_table(int d, int k) {
  if (d < 1 || k < 1) throw InvalidSpec("monomial table needs d >= 1 and k >= 1");
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const MonomialTable>> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({d, k});
    if (it != cache.end()) return it->second;
  }
  auto t = build_table(d, k);
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(std::make_pair(d, k), std::move(t)).first->second;
}

Eigen::MatrixXd PseudoExpectation::moment_matrix() const { return build_moment_matrix(*table, moments); }

double PseudoExpectation::power_expectation(const Eigen::VectorXd& g) const {
  if (g.size() != d()) throw DimensionMismatch("vector has wrong dimension");
  Eigen::MatrixXd powers(d(), 2 * k() + 1);
  const Eigen::VectorXd mono = top_monomials(*table, g.transpose(), powers);
  double total = 0.0;
  for (std::size_t s = 0; s < table->top_degree.size(); ++s) {
    total += mono[static_cast<Eigen::Index>(s)] * moments[table->top_degree[s]];
  }
  return total;
}

double PseudoExpectation::sphere_residual() const {
  const auto& c = *table->constraints;
  return (c.a * moments - c.b).cwiseAbs().maxCoeff();
}

double PseudoExpectation::psd_violation() const { return std::max(0.0, -min_eig(moment_matrix())); }

PseudoExpectation PseudoExpectation::point_mass(const Eigen::VectorXd& v_in, int k) {
  const double norm = v_in.norm();
  if (!(norm > 0.0)) throw DomainError("point mass needs a non-zero vector");
  const Eigen::VectorXd v = v_in / norm;
  auto t = monomial_table(static_cast<int>(v.size()), k);
  Eigen::VectorXd y(static_cast<Eigen::Index>(t->monomials.size()));
  for (std::size_t i = 0; i < t->monomials.size(); ++i) {
    double val = 1.0;
    for (int j = 0; j < t->d; ++j) {
      if (t->monomials[i][j]) val *= std::pow(v[j], t->monomials[i][j]);
    }
    y[static_cast<Eigen::Index>(i)] = val;
  }
  return {t, y};
}

PseudoExpectation PseudoExpectation::uniform_sphere(int d, int k) {
  auto t = monomial_table(d, k);
  return {t, t->sphere_moments};
}

SdpResult max_pseudo_expectation(const MomentPolynomial& p, const SdpOptions& opt) {
  const int d = static_cast<int>(p.dim());
  const int k = p.k;
  if (k > opt.max_k) throw InvalidSpec("moment order exceeds the configured cap");
  double basis = 1.0;
  for (int i = 1; i <= k; ++i) basis = basis * (d + i) / i;
  if (basis > opt.max_basis) throw InvalidSpec("monomial basis too large");

  SdpResult res;
  if (k == 1 && opt.closed_form_k1) {
    const Eigen::MatrixXd cov = p.vectors.transpose() * p.weights.asDiagonal() * p.vectors;
    const EigenResult top = top_eigenpair(cov, std::min(opt.tol, 1e-10));
    res.pE = PseudoExpectation::point_mass(top.vector, 1);
    res.value = std::max(0.0, top.vector.dot(cov * top.vector));
    res.converged = top.converged;
    res.iterations = top.iterations;
    return res;
  }

  auto table = monomial_table(d, k);
  const MonomialTable& t = *table;
  const auto& cons = *t.constraints;
  const Eigen::Index total = static_cast<Eigen::Index>(t.monomials.size());

  Eigen::VectorXd c = Eigen::VectorXd::Zero(total);
  {
    Eigen::MatrixXd powers(d, 2 * k + 1);
    for (Eigen::Index i = 0; i < p.vectors.rows(); ++i) {
      if (p.weights[i] == 0.0) continue;
      const Eigen::VectorXd mono = top_monomials(t, p.vectors.row(i), powers);
      for (std::size_t s = 0; s < t.top_degree.size(); ++s) {
        c[t.top_degree[s]] += p.weights[i] * mono[static_cast<Eigen::Index>(s)];
      }
    }
  }
  const double scale = c.cwiseAbs().maxCoeff();
  res.pE = PseudoExpectation{table, t.sphere_moments};
  if (!(scale > 0.0)) {
    res.converged = true;
    return res;
  }
  const Eigen::VectorXd cs = c / scale;

  const Eigen::VectorXd dinv = t.pair_count.cwiseInverse();
  const int half = t.half_size;
  Eigen::VectorXd y = t.sphere_moments;
  Eigen::MatrixXd x = build_moment_matrix(t, y);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(half, half);
  double rho = 1.0;
  const double relax = opt.over_relaxation;

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const Eigen::VectorXd yu = (adjoint(t, x - u) + cs / rho).cwiseProduct(dinv);
    const Eigen::VectorXd lam = cons.kkt.solve(cons.a * yu - cons.b);
    y = yu - dinv.cwiseProduct(cons.a.transpose() * lam);

    const Eigen::MatrixXd my = build_moment_matrix(t, y);
    const Eigen::MatrixXd mh = relax * my + (1.0 - relax) * x;
    const Eigen::MatrixXd x_old = x;
    x = project_psd(mh + u);
    u += mh - x;

    const double prim = (my - x).norm();
    const double dual = rho * (x - x_old).norm();
    res.primal_residual = prim;
    res.dual_residual = dual;
    const double eps_p = opt.tol * std::max({1.0, my.norm(), x.norm()});
    const double eps_d = opt.tol * std::max(1.0, rho * u.norm());
    if (prim <= eps_p && dual <= eps_d) {
      res.converged = true;
      break;
    }
    if (it % 20 == 19) {
      if (prim > 10.0 * dual) {
        rho *= 2.0;
        u /= 2.0;
      } else if (dual > 10.0 * prim) {
        rho /= 2.0;
        u *= 2.0;
      }
    }
  }
  res.iterations = std::min(it + 1, opt.max_iter);
  y = repair(t, y);
  res.pE = PseudoExpectation{table, y};
  res.value = scale * cs.dot(y);
  return res;
}

Eigen::VectorXd scores_from_pE(const PseudoExpectation& pE, const Eigen::MatrixXd& vectors) {
  if (vectors.cols() != pE.d()) throw DimensionMismatch("vectors have wrong dimension");
  const MonomialTable& t = *pE.table;
  Eigen::VectorXd top(static_cast<Eigen::Index>(t.top_degree.size()));
  for (std::size_t s = 0; s < t.top_degree.size(); ++s) top[static_cast<Eigen::Index>(s)] = pE.moments[t.top_degree[s]];
  Eigen::MatrixXd powers(t.d, 2 * t.k + 1);
  Eigen::VectorXd tau(vectors.rows());
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    tau[i] = std::max(0.0, top.dot(top_monomials(t, vectors.row(i), powers)));
  }
  return tau;
}

Certificate check_certificate(const MomentPolynomial& p, double bound, const SdpOptions& opt) {
  if (!(bound > 0.0) || !std::isfinite(bound)) throw DomainError("certificate bound must be positive");
  const SdpResult r = max_pseudo_expectation(p, opt);
  Certificate out;
  out.value = r.value;
  out.threshold = std::pow(bound, 2 * p.k);
  out.solver_converged = r.converged;
  out.holds = r.converged && r.value <= out.threshold * (1.0 + 1e-6);
  return out;
}

Certificate certify_f_moments(const Eigen::MatrixXd& vectors, int k, double sigma, const SdpOptions& opt) {
  return check_certificate(MomentPolynomial::uniform(k, vectors), sigma, opt);
}

}  // namespace robloc
