// Apache License, Version 2.0, refer to LICENSE.txt

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <doctest.h>

#include "biaslens/core_math.hpp"
#include "biaslens/error.hpp"
#include "oracles.hpp"

using namespace biaslens;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("log_sum_exp is shift invariant and rejects degenerate input") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 9);
    for (double& x : v) x = g(rng);
    const double c = g(rng) * 10.0;
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    CHECK(log_sum_exp(shifted) == doctest::Approx(log_sum_exp(v) + c).epsilon(1e-12));
  }
  CHECK(log_sum_exp(std::vector<double>{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(std::vector<double>{ninf, 0.0}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), Error);
  CHECK_THROWS_AS(log_sum_exp(std::vector<double>{ninf, ninf}), Error);
}

TEST_CASE("exp_normalize sums to one") {
  std::vector<double> w{-1000.0, -1001.0, -999.5};
  exp_normalize(w);
  CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) <= 1e-15);
  CHECK(w[2] > w[0]);
}

TEST_CASE("NIW prior validation") {
  NiwPrior p = NiwPrior::isotropic(2, 1.0, 4.0, 1.0);
  CHECK_NOTHROW(p.validate());
  p.nu0 = 3.0;  // must exceed dim + 1
  CHECK_THROWS_AS(p.validate(), Error);
  p = NiwPrior::isotropic(2, 1.0, 4.0, 1.0);
  p.psi0(0, 0) = -1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = NiwPrior::isotropic(2, 0.0, 4.0, 1.0);
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("NIW update: hand-computed posterior of a 1-D sample") {
  // prior mu0=0, kappa0=1, nu0=3, psi0=1; data {1, 3}
  NiwPrior prior{vec({0.0}), 1.0, 3.0, Matrix::Identity(1, 1)};
  GaussianStats st(1);
  st.add(vec({1.0}));
  st.add(vec({3.0}));
  // kappa_n=3, nu_n=5, mu_n=4/3, S=2, psi_n = 1 + 2 + (1*2/3)*4 = 17/3
  const StudentTParams t = niw_posterior(prior, st);
  CHECK(t.dof == doctest::Approx(5.0));
  CHECK(t.location(0) == doctest::Approx(4.0 / 3.0));
  CHECK(t.scale(0, 0) == doctest::Approx((17.0 / 3.0) * 4.0 / (3.0 * 5.0)));
}

TEST_CASE("prior predictive with no data") {
  NiwPrior prior = NiwPrior::isotropic(2, 2.0, 5.0, 3.0);
  const StudentTParams t = niw_posterior(prior, GaussianStats(2));
  CHECK(t.dof == doctest::Approx(4.0));
  CHECK(t.location.norm() == doctest::Approx(0.0));
  CHECK(t.scale(0, 0) == doctest::Approx(3.0 * 3.0 / (2.0 * 4.0)));
  CHECK(t.scale(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("conjugate update is order invariant") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  const NiwPrior prior = NiwPrior::isotropic(3, 1.5, 6.0, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vector> xs;
    for (int i = 0; i < 12; ++i) xs.push_back(vec({g(rng), 3.0 * g(rng), g(rng) + 5.0}));
    GaussianStats fwd(3);
    GaussianStats rev(3);
    for (const auto& x : xs) fwd.add(x);
    for (auto it = xs.rbegin(); it != xs.rend(); ++it) rev.add(*it);
    std::shuffle(xs.begin(), xs.end(), rng);
    GaussianStats shuf(3);
    for (const auto& x : xs) shuf.add(x);
    const StudentTParams a = niw_posterior(prior, fwd);
    for (const GaussianStats* other : {&rev, &shuf}) {
      const StudentTParams b = niw_posterior(prior, *other);
      CHECK((a.location - b.location).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((a.scale - b.scale).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(a.dof == b.dof);
    }
  }
}

TEST_CASE("slicing the statistics equals updating on the sliced data") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  const NiwPrior prior = NiwPrior::isotropic(4, 2.0, 8.0, 1.5);
  GaussianStats full(4);
  GaussianStats part(2);
  for (int i = 0; i < 20; ++i) {
    const Vector x = vec({g(rng), g(rng), g(rng), g(rng)});
    full.add(x);
    part.add(vec({x(1), x(3)}));
  }
  const std::vector<int> coords{1, 3};
  const StudentTParams a = niw_posterior(prior, full, coords);
  const StudentTParams b = niw_posterior(prior.slice(coords), part);
  CHECK(a.dof == doctest::Approx(b.dof));
  CHECK((a.location - b.location).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.scale - b.scale).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(niw_posterior(prior, full, std::vector<int>{}), Error);
}

TEST_CASE("1-D Student-t predictive matches numerical integration over (mu, sigma^2)") {
  for (const oracle::NigCase& c : oracle::nig_cases()) {
    NiwPrior prior{vec({c.mu0}), c.kappa0, c.nu0, Matrix::Constant(1, 1, c.psi0)};
    GaussianStats st(1);
    for (double x : c.data) st.add(vec({x}));
    const StudentTParams t = niw_posterior(prior, st);
    const double mu_n = oracle::posterior_mean_1d(c);
    CHECK(t.location(0) == doctest::Approx(mu_n).epsilon(1e-12));
    for (double x : {mu_n - 3.0, mu_n - 0.5, mu_n, mu_n + 0.25, mu_n + 2.0}) {
      const double closed = std::exp(student_t_log_pdf(vec({x}), t));
      const double numeric = oracle::niw_1d_predictive(x, c);
      CHECK(closed == doctest::Approx(numeric).epsilon(1e-4));
      CHECK(std::abs(closed - numeric) < 1e-4);
    }
  }
}

TEST_CASE("Student-t density is maximal at its location") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  const NiwPrior prior = NiwPrior::isotropic(3, 1.0, 6.0, 1.0);
  GaussianStats st(3);
  for (int i = 0; i < 9; ++i) st.add(vec({g(rng), g(rng), g(rng)}));
  const StudentTDensity d(niw_posterior(prior, st));
  const double at_mode = d.log_pdf(d.params().location);
  for (int i = 0; i < 200; ++i) {
    const Vector off = d.params().location + 0.3 * vec({g(rng), g(rng), g(rng)});
    CHECK(d.log_pdf(off) < at_mode);
  }
}

TEST_CASE("batched density equals pointwise density") {
  const NiwPrior prior = NiwPrior::isotropic(2, 1.0, 5.0, 2.0);
  GaussianStats st(2);
  st.add(vec({0.3, -0.2}));
  const StudentTParams params = niw_posterior(prior, st);
  const StudentTDensity d(params);
  Matrix pts(2, 4);
  pts << 0.0, 1.0, -2.0, 0.5, 0.0, 0.3, 1.0, -4.0;
  std::vector<double> out(4);
  d.log_pdf_columns(pts, out);
  for (int j = 0; j < 4; ++j) {
    CHECK(out[static_cast<std::size_t>(j)] == doctest::Approx(student_t_log_pdf(pts.col(j), params)).epsilon(1e-12));
  }
}

TEST_CASE("categorical predictive") {
  DirichletState s(3, 1.0);
  s.observe(2);
  s.observe(1);
  // Persian (index 2) after {Persian, Mexican} with alpha = 1: (1+1)/(3+2)
  CHECK(categorical_predictive(s, 2) == doctest::Approx(0.4));
  CHECK(categorical_predictive(s, 0) == doctest::Approx(0.2));
  CHECK_THROWS_AS(categorical_predictive(s, 3), Error);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + trial % 7;
    DirichletState d(k, 0.01 + trial * 0.1);
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    for (int i = 0; i < trial; ++i) d.observe(pick(rng));
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += categorical_predictive(d, c);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}
