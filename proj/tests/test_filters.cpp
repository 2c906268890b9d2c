#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "robloc/distributions.hpp"
#include "robloc/errors.hpp"
#include "robloc/experiment.hpp"
#include "robloc/filters.hpp"
#include "robloc/numerics.hpp"
#include "test_support.hpp"

using namespace robloc;

namespace {

Dataset gaussian(Eigen::Index d, Eigen::Index n, std::uint64_t seed, const Eigen::VectorXd& mu) {
  SemiProductSpec s;
  s.d = d;
  s.magnitude = MagnitudeLaw::half_gaussian();
  return sample_semi_product(s, mu, n, seed);
}

Dataset cauchy(Eigen::Index d, Eigen::Index n, std::uint64_t seed) {
  SemiProductSpec s;
  s.d = d;
  s.magnitude = MagnitudeLaw::half_cauchy();
  return sample_semi_product(s, Eigen::VectorXd::Zero(d), n, seed);
}

// sqrt of the top eigenvalue of the clean transformed covariance at the truth
double oracle_sigma(const Dataset& clean, const LossKind& kind) {
  const Eigen::MatrixXd c =
      transformed_covariance(clean, WeightVector::uniform(clean.n()), clean.truth->location, kind);
  return std::sqrt(testsupport::jacobi_max_eigenvalue(c));
}

ExperimentConfig config_from(const char* text) {
  std::istringstream is(text);
  return parse_config(is);
}

int hard_cap(double eps, Eigen::Index n) { return static_cast<int>(std::ceil(2.0 * eps * n - 1e-9)) + 1; }

FilterConfig filter_cfg(const LossKind& kind, double sigma, double eps, double guard) {
  FilterConfig cfg;
  cfg.kind = kind;
  cfg.sigma = sigma;
  cfg.eps = eps;
  cfg.guard_constant = guard;
  return cfg;
}

}  // namespace

TEST_SUITE("filters") {
  TEST_CASE("transformed covariance examples") {
    Dataset zero;
    zero.samples = Eigen::MatrixXd::Constant(5, 2, 1.0);
    CHECK(transformed_covariance(zero, WeightVector::uniform(5), Eigen::VectorXd::Ones(2), LossKind::entrywise(1.0))
              .norm() == 0.0);

    const double h = 1.5;
    Dataset two;
    two.samples.resize(2, 1);
    two.samples << -h - 1.0, h + 1.0;
    const Eigen::MatrixXd c =
        transformed_covariance(two, WeightVector::uniform(2), Eigen::VectorXd::Zero(1), LossKind::entrywise(h));
    CHECK(c(0, 0) == doctest::Approx(h * h));

    const Dataset g = gaussian(3, 20, 1, Eigen::VectorXd::Zero(3));
    CHECK(transformed_covariance(g, WeightVector(Eigen::VectorXd::Zero(20), 0.5), Eigen::VectorXd::Zero(3),
                                 LossKind::entrywise(1.0))
              .norm() == 0.0);
    CHECK_THROWS_AS(
        transformed_covariance(g, WeightVector::uniform(19), Eigen::VectorXd::Zero(3), LossKind::entrywise(1.0)),
        DimensionMismatch);
  }

  TEST_CASE("transformed covariance is PSD and bounded") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 30; ++rep) {
      const Eigen::Index d = 2 + rep % 4;
      const Dataset data = cauchy(d, 60, static_cast<std::uint64_t>(rep));
      const double h = 0.5 + rep % 3;
      const LossKind kind = rep % 2 ? LossKind::norm_ball(h) : LossKind::entrywise(h);
      const Eigen::MatrixXd c =
          transformed_covariance(data, WeightVector::uniform(60), testsupport::random_matrix(d, 1, rng).col(0), kind);
      const auto ev = testsupport::jacobi_eigen(c).values;
      CHECK(ev.front() >= -1e-12);
      const double bound = rep % 2 ? h * h : h * h * static_cast<double>(d);
      CHECK(ev.back() <= bound * (1 + 1e-12));
    }
  }

  TEST_CASE("downweight examples") {
    const WeightVector w3 = WeightVector::uniform(3);
    const auto all_zero = downweight(w3, Eigen::VectorXd::Constant(3, 2.0), DownweightMode::kAll);
    REQUIRE(all_zero);
    CHECK(all_zero->values().norm() == 0.0);

    Eigen::VectorXd tau(3);
    tau << 1, 0, 0;
    const auto one = downweight(w3, tau, DownweightMode::kAll);
    REQUIRE(one);
    CHECK((*one)[0] == 0.0);
    CHECK((*one)[1] == doctest::Approx(1.0 / 3.0));
    CHECK((*one)[2] == doctest::Approx(1.0 / 3.0));

    // n=5, eps=0.1: smallest N with N/5 > 0.2 is 2
    const WeightVector w5 = WeightVector::uniform(5);
    Eigen::VectorXd t5(5);
    t5 << 1, 5, 2, 4, 3;
    const auto top = downweight(w5, t5, DownweightMode::kTopBudget, 2 * 0.1);
    REQUIRE(top);
    int touched = 0;
    for (Eigen::Index i = 0; i < 5; ++i) touched += (*top)[i] != w5[i];
    CHECK(touched == 2);
    CHECK((*top)[1] == 0.0);
    CHECK((*top)[3] == doctest::Approx(0.2 * (1.0 - 4.0 / 5.0)));

    CHECK_FALSE(downweight(w5, Eigen::VectorXd::Zero(5), DownweightMode::kAll));
    CHECK_THROWS_AS(downweight(w5, -t5, DownweightMode::kAll), DomainError);
  }

  TEST_CASE("downweight ties break by index") {
    const WeightVector w = WeightVector::uniform(4);
    const auto out = downweight(w, Eigen::VectorXd::Constant(4, 1.0), DownweightMode::kTopBudget, 0.3);
    REQUIRE(out);
    CHECK((*out)[0] == 0.0);
    CHECK((*out)[1] == 0.0);
    CHECK((*out)[2] == 0.25);
    CHECK((*out)[3] == 0.25);
  }

  TEST_CASE("property: downweight is monotone and zeroes the argmax") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
      const Eigen::Index n = 5 + rep % 20;
      Eigen::VectorXd wv(n), tau(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        wv[i] = u(rng) / static_cast<double>(n);
        tau[i] = u(rng);
      }
      const WeightVector w(wv, 0.9);
      const auto mode = rep % 2 ? DownweightMode::kAll : DownweightMode::kTopBudget;
      const auto out = downweight(w, tau, mode, 0.2);
      REQUIRE(out);
      CHECK((out->values().array() <= w.values().array()).all());
      CHECK((out->values().array() >= 0.0).all());
      Eigen::Index arg = 0;
      tau.maxCoeff(&arg);
      CHECK((*out)[arg] == 0.0);
    }
  }

  TEST_CASE("second-moment filter on clean gaussian") {
    const Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(10, -1.0, 1.0);
    const Dataset data = gaussian(10, 5000, 4, mu);
    const Estimate est = filter_second_moment(data, filter_cfg(LossKind::entrywise(2.0), 2.0, 0.1, 100.0));
    CHECK(est.downweights == 0);
    CHECK(est.iterations == 1);
    CHECK(est.converged);
    CHECK((est.location - mu).norm() <= 0.2);
    CHECK(est.guard_value <= est.guard_threshold);
  }

  TEST_CASE("second-moment filter removes a cauchy cluster") {
    const LossKind kind = LossKind::entrywise(2.0);
    const Dataset clean = cauchy(10, 5000, 5);
    Eigen::VectorXd dir = Eigen::VectorXd::Ones(10);
    const Dataset data = corrupt(clean, CorruptionPlan{0.1, ClusterShift{dir, 10.0}, 6});
    const Estimate est = filter_second_moment(data, filter_cfg(kind, oracle_sigma(clean, kind), 0.1, 1.5));
    double bad_final = 0.0, bad_initial = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.truth->corrupted[i]) {
        bad_final += est.final_w[i];
        bad_initial += 1.0 / static_cast<double>(data.n());
      }
    }
    CHECK(est.downweights > 0);
    CHECK(bad_final <= 0.5 * bad_initial);
    CHECK(est.iterations <= hard_cap(0.1, data.n()));
  }

  TEST_CASE("higher-moment filter with k=1 matches the second-moment filter") {
    const LossKind kind = LossKind::entrywise(2.0);
    const Dataset clean = gaussian(4, 400, 7, Eigen::VectorXd::Zero(4));
    const Dataset data = corrupt(clean, CorruptionPlan{0.1, ClusterShift{Eigen::VectorXd::Ones(4), 6.0}, 8});
    FilterConfig cfg = filter_cfg(kind, oracle_sigma(clean, kind), 0.1, 1.2);
    cfg.k = 1;
    const Estimate a = filter_second_moment(data, cfg);
    for (bool closed : {true, false}) {
      cfg.sdp.closed_form_k1 = closed;
      const Estimate b = filter_higher_moment(data, cfg);
      REQUIRE(a.trace.size() == b.trace.size());
      CHECK(a.downweights > 0);
      for (std::size_t t = 0; t < a.trace.size(); ++t) {
        CHECK(std::abs(a.trace[t].value - b.trace[t].value) <= 1e-6 * std::max(1.0, a.trace[t].value));
        CHECK((a.trace[t].estimate - b.trace[t].estimate).norm() <= 1e-6);
      }
      CHECK((a.final_w.values() - b.final_w.values()).cwiseAbs().maxCoeff() * data.n() <= 1e-6);
    }
  }

  TEST_CASE("k=1 pE scores match second-moment scores") {
    const Dataset data = gaussian(3, 200, 9, Eigen::VectorXd::Zero(3));
    const LossKind kind = LossKind::entrywise(1.5);
    const Eigen::MatrixXd g = transformed_residuals(data.samples, Eigen::VectorXd::Zero(3), kind);
    const WeightVector w = WeightVector::uniform(200);
    const EigenResult top = top_eigenpair(g.transpose() * w.values().asDiagonal() * g);
    SdpOptions opt;
    opt.closed_form_k1 = false;
    const SdpResult sdp = max_pseudo_expectation(MomentPolynomial(1, g, w.values()), opt);
    CHECK(std::abs(sdp.value - top.value) <= 1e-6);
    const Eigen::VectorXd tau_e = (g * top.vector).array().square();
    CHECK((scores_from_pE(sdp.pE, g) - tau_e).cwiseAbs().maxCoeff() <= 1e-6);
  }

  TEST_CASE("higher-moment filter certifies clean rademacher data") {
    SemiProductSpec s;
    s.d = 4;
    s.magnitude = MagnitudeLaw::point_mass(1.0);
    const Dataset data = sample_semi_product(s, Eigen::VectorXd::Zero(4), 4000, 10);
    FilterConfig cfg = filter_cfg(LossKind::entrywise(2.0), 4.0, 0.05, 1.0);
    cfg.k = 2;
    const Estimate est = filter_higher_moment(data, cfg);
    CHECK(est.downweights == 0);
    CHECK(est.converged);
    CHECK(est.guard_value <= std::pow(4.0, 4));
  }

  TEST_CASE("higher-moment filter beats the second-moment filter on elliptical data") {
    const ExperimentConfig cfg = config_from(R"(
      distribution = elliptical
      radial = chi
      scatter_condition = 4
      alpha = 0.5
      d = 6
      n = 10000
      eps = 0.05
      adversary = aligned
      adversary_distance = 50
      adversary_target = each
      adversary_fill = 0.95
      estimator = filter2
      estimator = filterk(2)
      seeds = 10
      loss = norm-ball
      h = 60
      sigma = auto
      guard_constant = 4
    )");
    const auto rows = run_experiment(cfg);
    const auto f2 = median_errors(rows, "filter2");
    const auto fk = median_errors(rows, "filterk(2)");
    CHECK(fk.at(0.05) <= f2.at(0.05));
  }

  TEST_CASE("near-optimal pipeline on clean gaussian") {
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(10, 0.5);
    const Dataset data = gaussian(10, 20000, 11, mu);
    FilterConfig cfg = filter_cfg(LossKind::entrywise(2.0), 1.0, 0.05, 100.0);
    cfg.alpha = 0.68;
    cfg.threshold_constant = 1.0;
    const Estimate est = filter_near_optimal_paired(data, cfg);
    CHECK(est.converged);
    CHECK((est.location - mu).norm() <= 0.15);
    CHECK(est.iterations <= hard_cap(0.1, data.n() / 4));
  }

  TEST_CASE("near-optimal filter at eps=0 uses the 1/n floor") {
    const Dataset data = gaussian(3, 400, 12, Eigen::VectorXd::Zero(3));
    FilterConfig cfg = filter_cfg(LossKind::entrywise(2.0), 1.0, 0.0, 100.0);
    cfg.alpha = 0.5;
    const Estimate est = filter_near_optimal(data, Eigen::VectorXd::Ones(3), cfg);
    CHECK(est.guard_threshold == doctest::Approx(cfg.threshold_constant / 400.0 / std::pow(0.5, 3)));
    CHECK(est.iterations == 1);
    CHECK_THROWS_AS(filter_near_optimal(data, Eigen::VectorXd::Ones(2), cfg), DimensionMismatch);
  }

  TEST_CASE("near-optimal beats the second-moment filter at eps 0.1") {
    const ExperimentConfig cfg = config_from(R"(
      distribution = semi-product
      magnitude = gaussian
      alpha = 0.68
      d = 10
      n = 20000
      eps = 0.02, 0.05, 0.1
      adversary = aligned
      adversary_distance = 50
      adversary_target = filter2
      adversary_fill = 0.9
      estimator = filter2
      estimator = near-optimal
      seeds = 20
      h = 4
      sigma = auto
      guard_constant = 2
      threshold_constant = 1
    )");
    const auto rows = run_experiment(cfg);
    CHECK(median_errors(rows, "near-optimal").at(0.1) <= 0.7 * median_errors(rows, "filter2").at(0.1));
  }

  TEST_CASE("empty data and invalid configs") {
    Dataset empty;
    empty.samples.resize(0, 2);
    CHECK_THROWS_AS(filter_second_moment(empty, FilterConfig{}), DegenerateWeights);
    FilterConfig bad;
    bad.sigma = -1.0;
    CHECK_THROWS_AS(filter_second_moment(gaussian(2, 10, 1, Eigen::VectorXd::Zero(2)), bad), InvalidSpec);
    bad = FilterConfig{};
    bad.k = 0;
    CHECK_THROWS_AS(filter_higher_moment(gaussian(2, 10, 1, Eigen::VectorXd::Zero(2)), bad), InvalidSpec);
    FilterConfig cap;
    cap.eps = 0.1;
    CHECK(cap.iteration_cap(100) == 21);
    cap.max_iter_override = 3;
    CHECK(cap.iteration_cap(100) == 3);
  }

  TEST_CASE("property: weights feasible, monotone, and capped across filters") {
    const LossKind kind = LossKind::entrywise(2.0);
    int runs = 0;
    int filtered[3] = {0, 0, 0};
    for (int seed = 0; seed < 6; ++seed) {
      const double eps = seed % 2 ? 0.1 : 0.15;
      const Dataset clean = gaussian(3, 300, 100 + seed, Eigen::VectorXd::Zero(3));
      const Dataset data = corrupt(clean, CorruptionPlan{eps, ClusterShift{Eigen::VectorXd::Ones(3), 8.0}, 200ULL + seed});
      FilterConfig cfg = filter_cfg(kind, oracle_sigma(clean, kind), eps, 1.5);
      cfg.k = 2;
      cfg.alpha = 0.68;
      cfg.threshold_constant = 1.0;
      for (int which = 0; which < 3; ++which) {
        auto run = [&](const FilterConfig& c) {
          if (which == 0) return filter_second_moment(data, c);
          if (which == 1) return filter_higher_moment(data, c);
          return filter_near_optimal(data, estimate_sigma_f_diag(clean, 2.0, 0.02), c);
        };
        const Estimate full = run(cfg);
        ++runs;
        filtered[which] += full.downweights > 0;
        const Eigen::Index n = data.n();
        CHECK(full.iterations <= hard_cap(eps, n));
        CHECK(static_cast<int>(full.trace.size()) == full.iterations);
        CHECK((full.final_w.values().array() >= 0.0).all());
        CHECK((full.final_w.values().array() <= 1.0 / static_cast<double>(n)).all());
        if (full.converged) CHECK(full.final_w.l1_deviation() <= 2.0 * eps + 1.0 / static_cast<double>(n) + 1e-12);
        // replaying with shorter caps exposes every intermediate weight vector
        Eigen::VectorXd prev = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
        for (int t = 1; t <= full.iterations; ++t) {
          FilterConfig c = cfg;
          c.max_iter_override = t;
          const Estimate part = run(c);
          CHECK((part.final_w.values().array() <= prev.array()).all());
          CHECK((part.final_w.values().array() >= 0.0).all());
          prev = part.final_w.values();
        }
        CHECK((prev - full.final_w.values()).norm() == 0.0);
        // the estimate is the minimizer for the final weights
        const LossMinimum lm = minimize_weighted_loss(data.samples, full.final_w, kind);
        CHECK((lm.location - full.location).norm() <= 1e-6);
      }
    }
    CHECK(runs == 18);
    for (int f : filtered) CHECK(f >= 3);
  }

  TEST_CASE("property: zero-iteration runs satisfy the guard") {
    const LossKind kind = LossKind::entrywise(2.0);
    for (int seed = 0; seed < 10; ++seed) {
      const Dataset data = gaussian(5, 1000, 300 + seed, Eigen::VectorXd::Zero(5));
      const Estimate est = filter_second_moment(data, filter_cfg(kind, 1.0, 0.05, 100.0));
      REQUIRE(est.downweights == 0);
      const Eigen::MatrixXd c = transformed_covariance(data, est.final_w, est.location, kind);
      const double top = testsupport::jacobi_max_eigenvalue(c);
      CHECK(std::abs(top - est.guard_value) <= 1e-8);
      CHECK(top <= std::pow(100.0 * 1.0, 2));
    }
  }

  TEST_CASE("property: translation equivariance") {
    const LossKind kind = LossKind::entrywise(2.0);
    std::mt19937_64 rng(13);
    for (int seed = 0; seed < 4; ++seed) {
      const Dataset clean = cauchy(4, 800, 400 + seed);
      const Dataset data = corrupt(clean, CorruptionPlan{0.1, ClusterShift{Eigen::VectorXd::Ones(4), 8.0}, 9});
      const Eigen::VectorXd c = 5.0 * testsupport::random_matrix(4, 1, rng).col(0);
      Dataset moved = data;
      moved.samples.rowwise() += c.transpose();
      moved.truth->location += c;
      FilterConfig cfg = filter_cfg(kind, oracle_sigma(clean, kind), 0.1, 1.5);
      cfg.k = 2;
      cfg.alpha = 0.5;
      cfg.threshold_constant = 1.0;
      const double tol = 1e-7;
      CHECK((filter_second_moment(moved, cfg).location - filter_second_moment(data, cfg).location - c).norm() <= tol);
      CHECK((filter_higher_moment(moved, cfg).location - filter_higher_moment(data, cfg).location - c).norm() <= tol);
      CHECK((filter_near_optimal_paired(moved, cfg).location - filter_near_optimal_paired(data, cfg).location - c)
                .norm() <= tol);
    }
  }

  TEST_CASE("default sigma") {
    CHECK(default_sigma(LossKind::entrywise(1.0), 1.5, 1) == doctest::Approx(3.0));
    CHECK(default_sigma(LossKind::norm_ball(1.0), 1.0, 2, 2.0) == doctest::Approx(4.0));
    CHECK_THROWS_AS(default_sigma(LossKind::entrywise(1.0), 0.0, 1), DomainError);
  }
}
