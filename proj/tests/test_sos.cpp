#include <doctest.h>

#include <cmath>
#include <random>

#include "robloc/distributions.hpp"
#include "robloc/errors.hpp"
#include "robloc/losses.hpp"
#include "robloc/numerics.hpp"
#include "robloc/sos.hpp"
#include "test_support.hpp"

using namespace robloc;

namespace {

MomentPolynomial random_poly(int k, int d, int n, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = testsupport::random_matrix(n, d, rng);
  std::uniform_real_distribution<double> uw(0.1, 1.0);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = uw(rng) / n;
  return MomentPolynomial(k, g, w);
}

double grid_max(const MomentPolynomial& p, int samples, std::mt19937_64& rng) {
  double best = 0.0;
  for (int s = 0; s < samples; ++s) best = std::max(best, p.evaluate(testsupport::random_unit(p.dim(), rng)));
  return best;
}

}  // namespace

TEST_SUITE("sos") {
  TEST_CASE("moment polynomial basics") {
    std::mt19937_64 rng(1);
    const MomentPolynomial p = random_poly(2, 3, 10, rng);
    for (int rep = 0; rep < 50; ++rep) {
      const Eigen::VectorXd v = testsupport::random_matrix(3, 1, rng).col(0);
      CHECK(p.evaluate(v) >= 0.0);
      CHECK(p.evaluate(2.5 * v) == doctest::Approx(std::pow(2.5, 4) * p.evaluate(v)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(MomentPolynomial(0, Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(2)), InvalidSpec);
    CHECK_THROWS_AS(MomentPolynomial(1, Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(3)), DimensionMismatch);
  }

  TEST_CASE("monomial table") {
    const auto t = monomial_table(2, 2);
    // degree <= 4 in 2 variables: 15 monomials, 6 of degree <= 2
    CHECK(t->monomials.size() == 15);
    CHECK(t->half_size == 6);
    CHECK(t->index_of({0, 0}) == 0);
    CHECK(t->index_of({5, 0}) == -1);
    CHECK(monomial_table(2, 2).get() == t.get());
    // graded order
    for (std::size_t i = 1; i < t->monomials.size(); ++i) {
      const int a = t->monomials[i - 1][0] + t->monomials[i - 1][1];
      const int b = t->monomials[i][0] + t->monomials[i][1];
      CHECK(a <= b);
    }
  }

  TEST_CASE("k=1 matches top eigenvalue") {
    Eigen::MatrixXd g(2, 2);
    g << std::sqrt(3.0), 0.0, 0.0, 1.0;
    const MomentPolynomial p(1, g, Eigen::VectorXd::Ones(2));
    const SdpResult r = max_pseudo_expectation(p);
    CHECK(r.converged);
    const Eigen::MatrixXd cov = g.transpose() * g;
    CHECK(std::abs(r.value - top_eigenpair(cov).value) < 1e-6);
    CHECK(std::abs(r.value - 3.0) < 1e-6);
  }

  TEST_CASE("k=2 single vector") {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, 3);
    g(0, 0) = 1.0;
    const SdpResult r = max_pseudo_expectation(MomentPolynomial(2, g, Eigen::VectorXd::Ones(1)));
    CHECK(r.converged);
    CHECK(std::abs(r.value - 1.0) < 1e-5);
  }

  TEST_CASE("k=2 d=2 dominates a dense grid") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 10; ++rep) {
      const MomentPolynomial p = random_poly(2, 2, 6, rng);
      const SdpResult r = max_pseudo_expectation(p);
      CHECK(r.value >= grid_max(p, 10000, rng) - 1e-6);
    }
  }

  TEST_CASE("scores from a point mass") {
    std::mt19937_64 rng(3);
    const Eigen::VectorXd v0 = testsupport::random_unit(3, rng);
    const Eigen::MatrixXd g = testsupport::random_matrix(8, 3, rng);
    for (int k : {1, 2, 3}) {
      const PseudoExpectation pe = PseudoExpectation::point_mass(v0, k);
      const Eigen::VectorXd tau = scores_from_pE(pe, g);
      for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK(tau[i] == doctest::Approx(std::pow(g.row(i).dot(v0), 2 * k)).epsilon(1e-10));
      }
      CHECK(pe.sphere_residual() < 1e-12);
    }
    const Eigen::VectorXd zero = scores_from_pE(PseudoExpectation::point_mass(v0, 2), Eigen::MatrixXd::Zero(2, 3));
    CHECK(zero.norm() == 0.0);
  }

  TEST_CASE("weighted scores equal the pE value") {
    std::mt19937_64 rng(4);
    for (int k : {1, 2}) {
      const MomentPolynomial p = random_poly(k, 3, 12, rng);
      SdpOptions opt;
      opt.closed_form_k1 = false;
      const SdpResult r = max_pseudo_expectation(p, opt);
      const Eigen::VectorXd tau = scores_from_pE(r.pE, p.vectors);
      CHECK(std::abs(p.weights.dot(tau) - r.value) <= 1e-6 * std::max(1.0, r.value));
      CHECK((tau.array() >= 0.0).all());
    }
  }

  TEST_CASE("certificate examples") {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, 2);
    g(0, 0) = 1.0;
    const MomentPolynomial p(2, g, Eigen::VectorXd::Ones(1));
    const Certificate yes = check_certificate(p, 1.0);
    CHECK(static_cast<bool>(yes));
    CHECK(yes.solver_converged);
    CHECK_FALSE(static_cast<bool>(check_certificate(p, 0.5)));
    CHECK_THROWS_AS(check_certificate(p, 0.0), DomainError);

    CHECK(static_cast<bool>(certify_f_moments(Eigen::MatrixXd::Zero(5, 3), 2, 0.1)));

    Eigen::MatrixXd pm = Eigen::MatrixXd::Zero(2, 3);
    pm(0, 0) = 1.7;
    pm(1, 0) = -1.7;
    const Certificate edge = certify_f_moments(pm, 1, 1.7);
    CHECK(static_cast<bool>(edge));
    CHECK(edge.value == doctest::Approx(1.7 * 1.7).epsilon(1e-8));
  }

  TEST_CASE("rademacher sample certifies at 4 rho") {
    SemiProductSpec s;
    s.d = 3;
    s.magnitude = MagnitudeLaw::point_mass(1.0);
    const Dataset data = sample_semi_product(s, Eigen::VectorXd::Zero(3), 10000, 12);
    const Eigen::MatrixXd g = transformed_residuals(data.samples, Eigen::VectorXd::Zero(3), LossKind::entrywise(2.0));
    const Certificate c = certify_f_moments(g, 2, 4.0);
    CHECK(static_cast<bool>(c));
    CHECK(c.value <= std::pow(4.0, 4));
  }

  TEST_CASE("clean elliptical sample certifies at the default sigma") {
    const Eigen::Index d = 4;
    const double rho = 1.0;
    EllipticalSpec e;
    e.d = d;
    e.scatter = spaced_scatter(d, 2.0);
    e.radial = RadialLaw::chi();
    const Dataset data = sample_elliptical(e, Eigen::VectorXd::Zero(d), 5000, 8);
    const double h = 20.0 * rho * std::sqrt(static_cast<double>(d));
    const Eigen::MatrixXd g = transformed_residuals(data.samples, Eigen::VectorXd::Zero(d), LossKind::norm_ball(h));
    const double lambda = e.normalized().scatter.diagonal().maxCoeff();
    for (int k : {1, 2}) {
      const double sigma = 2.0 * rho * std::sqrt(k * lambda);
      CHECK(static_cast<bool>(certify_f_moments(g, k, sigma)));
    }
  }

  TEST_CASE("all-zero polynomial") {
    const SdpResult r = max_pseudo_expectation(MomentPolynomial::uniform(2, Eigen::MatrixXd::Zero(4, 3)));
    CHECK(r.converged);
    CHECK(r.value == 0.0);
  }

  TEST_CASE("size caps") {
    SdpOptions opt;
    CHECK_THROWS_AS(max_pseudo_expectation(MomentPolynomial::uniform(4, Eigen::MatrixXd::Ones(2, 2)), opt),
                    InvalidSpec);
    // d = 20, k = 3 has 1771 half-degree monomials: rejected before any table is built
    CHECK_THROWS_AS(max_pseudo_expectation(MomentPolynomial::uniform(3, Eigen::MatrixXd::Ones(2, 20)), opt),
                    InvalidSpec);
    opt.max_basis = 10;
    CHECK_THROWS_AS(max_pseudo_expectation(MomentPolynomial::uniform(2, Eigen::MatrixXd::Ones(2, 4)), opt),
                    InvalidSpec);
  }

  TEST_CASE("iteration cap reports non-convergence and never certifies") {
    std::mt19937_64 rng(5);
    const MomentPolynomial p = random_poly(2, 4, 20, rng);
    SdpOptions opt;
    opt.max_iter = 3;
    const SdpResult r = max_pseudo_expectation(p, opt);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations <= 3);
    const Certificate c = check_certificate(p, 1e6, opt);
    CHECK_FALSE(c.solver_converged);
    CHECK_FALSE(static_cast<bool>(c));
  }

  TEST_CASE("property: relaxation dominance") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 15; ++rep) {
      const int d = 2 + rep % 3;
      const int k = 1 + rep % 2;
      const MomentPolynomial p = random_poly(k, d, 10, rng);
      SdpOptions opt;
      opt.closed_form_k1 = false;
      const SdpResult r = max_pseudo_expectation(p, opt);
      for (int s = 0; s < 500; ++s) CHECK(r.value >= p.evaluate(testsupport::random_unit(d, rng)) - 1e-6);
    }
  }

  TEST_CASE("property: k=1 exactness against Jacobi oracle") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 20; ++rep) {
      const int d = 2 + rep % 7;
      const MomentPolynomial p = random_poly(1, d, 3 * d, rng);
      const Eigen::MatrixXd cov = p.vectors.transpose() * p.weights.asDiagonal() * p.vectors;
      const double oracle = testsupport::jacobi_max_eigenvalue(cov);
      CHECK(std::abs(max_pseudo_expectation(p).value - oracle) < 1e-6);
      if (d <= 5) {
        SdpOptions opt;
        opt.closed_form_k1 = false;
        CHECK(std::abs(max_pseudo_expectation(p, opt).value - oracle) < 1e-6);
      }
    }
  }

  TEST_CASE("property: feasibility of converged pE") {
    std::mt19937_64 rng(8);
    int checked = 0;
    for (int rep = 0; rep < 12; ++rep) {
      const int d = 2 + rep % 3;
      const int k = rep % 3 == 2 ? 3 : 1 + rep % 2;
      const MomentPolynomial p = random_poly(k, d, 8, rng);
      SdpOptions opt;
      opt.closed_form_k1 = false;
      const SdpResult r = max_pseudo_expectation(p, opt);
      if (!r.converged) continue;
      ++checked;
      CHECK(r.pE.psd_violation() <= 1e-8);
      CHECK(r.pE.sphere_residual() <= 1e-7);
      // consistency: entries indexed by monomial pairs with equal products agree
      const Eigen::MatrixXd m = r.pE.moment_matrix();
      const auto& t = *r.pE.table;
      for (int a = 0; a < t.half_size; ++a)
        for (int b = 0; b < t.half_size; ++b)
          for (int c = 0; c < t.half_size; ++c)
            for (int e = 0; e < t.half_size; ++e)
              if (t.pair_index(a, b) == t.pair_index(c, e)) CHECK(std::abs(m(a, b) - m(c, e)) <= 1e-8);
      CHECK(m(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
    }
    CHECK(checked >= 10);
  }

  TEST_CASE("property: optimum scales as c^{2k}") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 6; ++rep) {
      const int k = 1 + rep % 2;
      const MomentPolynomial p = random_poly(k, 3, 10, rng);
      const double c = 0.5 + rep;
      const MomentPolynomial q(k, c * p.vectors, p.weights);
      SdpOptions opt;
      opt.closed_form_k1 = false;
      const double a = max_pseudo_expectation(p, opt).value;
      const double b = max_pseudo_expectation(q, opt).value;
      CHECK(std::abs(b / (std::pow(c, 2 * k) * a) - 1.0) <= 1e-6);
    }
  }

  TEST_CASE("uniform sphere pE is feasible") {
    for (int k : {1, 2, 3}) {
      const PseudoExpectation u = PseudoExpectation::uniform_sphere(3, k);
      CHECK(u.sphere_residual() < 1e-12);
      CHECK(u.psd_violation() < 1e-12);
    }
  }
}
