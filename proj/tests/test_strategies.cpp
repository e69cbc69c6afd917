#include <doctest.h>

#include <cmath>

#include "riskflow/contribution.hpp"
#include "riskflow/core.hpp"
#include "riskflow/market.hpp"
#include "riskflow/strategies.hpp"

using namespace riskflow;
using namespace riskflow::strategies;

TEST_CASE("vol-managed policy is the inverse-variance rule") {
  market::SabrParams mp;
  mp.f0 = 1.0;
  mp.s = 0.2;
  mp.alpha = 0.5;
  mp.beta_exp = 1.0;
  const TimeGrid grid = make_time_grid(1.0, 16);
  market::SabrEnsemble se = market::simulate_sabr(mp, grid, 512, 51);

  VolManagedSpec spec;
  spec.c_hat = 0.05;
  Policy policy = vol_managed_policy(spec, se.paths);
  PolicyTable table = materialize(policy, se.paths);
  for (std::size_t p = 0; p < 32; ++p)
    for (std::size_t k = 0; k < 16; ++k) {
      const double vol = se.paths.value(p, k, 1);
      CHECK(table.at(p, k, 0) == doctest::Approx(0.05 / (vol * vol)).epsilon(1e-12));
    }

  VolManagedSpec doubled;
  doubled.c_hat = 0.05;
  // doubling sigma quarters the policy
  CHECK(0.05 / (0.4 * 0.4) == doctest::Approx(0.25 * 0.05 / (0.2 * 0.2)).epsilon(1e-12));

  VolManagedSpec bad;
  bad.c_hat = -1.0;
  CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
}

TEST_CASE("vol-managed contribution equals its budget pointwise at zero drift") {
  market::SabrParams mp;
  mp.f0 = 1.0;
  mp.s = 0.25;
  mp.alpha = 0.4;
  mp.beta_exp = 1.0;  // c = u sigma^2 F^2, the local GBM form
  const TimeGrid grid = make_time_grid(1.0, 16);
  market::SabrEnsemble se = market::simulate_sabr(mp, grid, 512, 52);

  VolManagedSpec spec;
  spec.c_hat = 0.05;
  Policy policy = vol_managed_policy(spec, se.paths);
  contribution::ContributionProcess cp = sabr_marginal(policy, se, mp);
  for (std::size_t p = 0; p < se.paths.n_paths; ++p)
    for (std::size_t k = 0; k < 16; ++k) {
      const double s = se.paths.value(p, k, 0);
      const double vol = se.paths.value(p, k, 1);
      const double beta = (spec.c_hat * s / vol) * (spec.c_hat * s / vol);
      CHECK(cp.k_at(p, k, 0) == doctest::Approx(beta).epsilon(1e-12));
    }
}

TEST_CASE("vol-managed long-term gap shrinks at zero drift") {
  market::SabrParams mp;
  mp.f0 = 1.0;
  mp.s = 0.2;
  mp.alpha = 0.3;
  mp.beta_exp = 1.0;
  const TimeGrid grid = make_time_grid(10.0, 320);
  market::SabrEnsemble se = market::simulate_sabr(mp, grid, 2000, 53);
  VolManagedSpec spec;
  spec.c_hat = 0.04;
  std::vector<double> theta(grid.n_steps, 0.0);  // zero drift: zero market price of risk
  LongTermCheck check = vol_managed_long_term(se.paths, spec, theta);
  REQUIRE(check.times.size() == 3);
  for (double rhs : check.rhs) CHECK(rhs == 0.0);
  // X_t/t is a martingale divided by t: the gap decays with the horizon
  CHECK(check.gap.back() < check.gap.front());
}

TEST_CASE("sabr marginal closed forms") {
  market::SabrParams mp;
  mp.f0 = 1.2;
  mp.s = 0.3;
  mp.alpha = 0.4;
  mp.beta_exp = 0.0;  // c = u sigma^2, price-free
  const TimeGrid grid = make_time_grid(1.0, 8);
  market::SabrEnsemble se = market::simulate_sabr(mp, grid, 256, 54);
  Policy u = Policy::constant({2.0, 0.0});
  contribution::ContributionProcess cp = sabr_marginal(u, se, mp);
  for (std::size_t p = 0; p < se.paths.n_paths; ++p)
    for (std::size_t k = 0; k < 8; ++k) {
      const double vol = se.paths.value(p, k, 1);
      CHECK(cp.c_at(p, k, 0) == doctest::Approx(2.0 * vol * vol).epsilon(1e-12));
    }
}

TEST_CASE("parity policy has pointwise-constant contribution") {
  market::SabrParams mp;
  mp.f0 = 1.0;
  mp.s = 0.3;
  mp.alpha = 0.3;
  mp.beta_exp = 0.7;
  const double lambda = 0.02;
  const TimeGrid grid = make_time_grid(1.0, 32);
  market::SabrEnsemble se = market::simulate_sabr(mp, grid, 2048, 55);
  REQUIRE(se.absorbed_fraction == 0.0);

  Policy parity = sabr_policy(SabrPolicyCase::parity, lambda, mp, se);
  contribution::ContributionProcess cp = sabr_marginal(parity, se, mp);
  for (std::size_t p = 0; p < se.paths.n_paths; ++p)
    for (std::size_t k = 0; k < 32; ++k)
      CHECK(cp.k_at(p, k, 0) == doctest::Approx(lambda / grid.horizon).epsilon(1e-12));
  CHECK(pointwise_dispersion(cp, 0) <= 1e-20);
}

TEST_CASE("parity and h-projection coincide in the normal model without hidden volatility") {
  market::SabrParams mp;
  mp.f0 = 1.0;
  mp.s = 0.1;
  mp.alpha = 0.0;
  mp.beta_exp = 0.0;  // F = f0 + s B1: both policies reduce to sqrt(lambda/T)/s
  const double lambda = 0.01;
  const TimeGrid grid = make_time_grid(1.0, 16);
  market::SabrEnsemble se = market::simulate_sabr(mp, grid, 1024, 56);
  REQUIRE(se.absorbed_fraction == 0.0);

  PolicyTable parity = materialize(sabr_policy(SabrPolicyCase::parity, lambda, mp, se), se.paths);
  PolicyTable proj =
      materialize(sabr_policy(SabrPolicyCase::h_projection, lambda, mp, se), se.paths);
  const double expected = std::sqrt(lambda / grid.horizon) / mp.s;
  for (std::size_t p = 0; p < se.paths.n_paths; ++p)
    for (std::size_t k = 0; k < 16; ++k) {
      CHECK(parity.at(p, k, 0) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(proj.at(p, k, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("single-period policy matches the sample variance of the terminal forward") {
  market::SabrParams mp;
  mp.f0 = 1.0;
  mp.s = 0.25;
  mp.alpha = 0.3;
  mp.beta_exp = 1.0;
  const double lambda = 0.03;
  const TimeGrid grid = make_time_grid(1.0, 16);
  market::SabrEnsemble se = market::simulate_sabr(mp, grid, 4096, 57);

  Policy naive = sabr_policy(SabrPolicyCase::single_period, lambda, mp, se);
  PolicyTable table = materialize(naive, se.paths);
  std::vector<double> terminal(se.paths.n_paths);
  for (std::size_t p = 0; p < se.paths.n_paths; ++p) terminal[p] = se.paths.value(p, 16, 0);
  const double var = variance_and_stderr(terminal).mean;
  CHECK(table.at(0, 0, 0) == doctest::Approx(std::sqrt(lambda / var)).epsilon(1e-12));
  CHECK(table.at(100, 7, 0) == table.at(0, 0, 0));
}

TEST_CASE("mean-variance policy structure") {
  MvParams params;

  SUBCASE("risk premium coefficient at baseline") {
    CHECK((params.b - params.r) / params.sigma_sq == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("no risky position without a risk premium") {
    MvParams flat = params;
    flat.b = flat.r;
    auto [m0, m1] = mv_policy(flat, 0.3, 1.2);
    CHECK(m1 == 0.0);
    CHECK(m0 == 1.2);
    CHECK(mv_expected_terminal(flat) == doctest::Approx(std::exp(0.06)).epsilon(1e-12));
  }

  SUBCASE("feedback zero crossing at the discounted target") {
    const double t = 0.4;
    auto [m0, m1] = mv_policy(params, t, params.target(t));
    CHECK(m1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m0 == doctest::Approx(params.target(t)).epsilon(1e-12));
  }

  SUBCASE("expected terminal wealth solves the wealth ODE") {
    const double theta_sq = params.theta_sq();
    const double expected =
        params.x0 * std::exp(params.r * params.horizon) +
        (std::exp(theta_sq * params.horizon) - 1.0) / (2.0 * params.tau);
    CHECK(mv_expected_terminal(params) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(mv_expected_terminal(params) == doctest::Approx(1.1485919820412648).epsilon(1e-12));
  }

  SUBCASE("validation") {
    MvParams bad = params;
    bad.sigma_sq = 0.0;
    CHECK_THROWS_AS(bad.validate(), invalid_argument_error);
  }
}

TEST_CASE("mean-variance risk contribution coefficients") {
  MvParams params;
  MvContribution k = mv_risk_contribution(params, 0.5, 1.0);
  CHECK(k.k0_x2 == doctest::Approx(0.44).epsilon(1e-12));
  CHECK(k.k1_x2 == doctest::Approx(-0.48).epsilon(1e-12));

  MvParams flat = params;
  flat.b = flat.r;
  const double kappa = mv_expected_terminal(flat) + flat.x0;
  for (double x : {0.5, 1.0, 2.0}) {
    MvContribution fk = mv_risk_contribution(flat, 0.5, x);
    CHECK(fk.k1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fk.k0 == doctest::Approx(flat.r * x * (2.0 * x - kappa)).epsilon(1e-10));
  }
}

TEST_CASE("exact mean-variance simulation hits the closed-form mean") {
  MvParams params;
  const TimeGrid grid = make_time_grid(1.0, 64);
  MvSimulation sim = mv_simulate(params, grid, 20000, 58);
  CHECK(std::fabs(sim.terminal_mean.mean - mv_expected_terminal(params)) <=
        3.0 * sim.terminal_mean.stderr_);
  CHECK(sim.wealth.size() == 20000 * 65);
  for (std::size_t p = 0; p < 16; ++p) CHECK(sim.wealth[p * 65] == params.x0);
}

TEST_CASE("figure 2 table structure") {
  MvParams params;
  std::vector<double> xs;
  for (int i = 0; i <= 20; ++i) xs.push_back(-1.0 + 0.2 * static_cast<double>(i));
  auto table = figure2_table(params, 0.5, xs, {0.5, 2.0}, {0.5, 2.0});
  REQUIRE(!table.empty());
  CHECK(table.front().sweep == "baseline");

  for (const auto& entry : table) {
    CHECK(entry.k0_x2 > 0.0);
    CHECK(entry.k1_x2 < 0.0);
    CHECK(entry.k0_x2 == table.front().k0_x2);
    CHECK(entry.k1_x2 == table.front().k1_x2);
    CHECK(entry.x.size() == xs.size());
  }

  // baseline K1 is a downward parabola with two real roots, negative outside
  const auto& base = table.front();
  CHECK(std::isfinite(base.k1_root_lo));
  CHECK(std::isfinite(base.k1_root_hi));
  CHECK(base.k1_root_lo < base.k1_root_hi);
  MvContribution tail = mv_risk_contribution(params, 0.5, base.k1_root_hi + 1.0);
  CHECK(tail.k1 < 0.0);
  MvContribution mid =
      mv_risk_contribution(params, 0.5, 0.5 * (base.k1_root_lo + base.k1_root_hi));
  CHECK(mid.k1 > 0.0);
}
