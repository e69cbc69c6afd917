#include <doctest.h>

#include <cmath>

#include "riskflow/core.hpp"
#include "riskflow/market.hpp"

using namespace riskflow;
using namespace riskflow::market;

TEST_CASE("gbm with zero volatility follows the drift ODE") {
  GbmParams params;
  params.s0 = Eigen::VectorXd::Constant(1, 2.0);
  params.drift = Eigen::VectorXd::Constant(1, 0.1);
  params.sigma = Eigen::MatrixXd::Zero(1, 1);
  const TimeGrid grid = make_time_grid(1.0, 8);
  PathEnsemble e = simulate_gbm(params, grid, 4, 1);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t k = 0; k <= 8; ++k)
      CHECK(e.value(p, k, 0) == doctest::Approx(2.0 * std::exp(0.1 * grid.node(k))).epsilon(1e-12));
}

TEST_CASE("gbm terminal moments") {
  GbmParams params;
  params.s0 = Eigen::VectorXd::Constant(1, 1.5);
  params.drift = Eigen::VectorXd::Constant(1, 0.07);
  params.sigma = Eigen::MatrixXd::Constant(1, 1, 0.3);
  const TimeGrid grid = make_time_grid(1.0, 64);
  PathEnsemble e = simulate_gbm(params, grid, 50000, 2);

  std::vector<double> terminal(e.n_paths);
  for (std::size_t p = 0; p < e.n_paths; ++p) terminal[p] = e.value(p, 64, 0);
  Estimate mean = mean_and_stderr(terminal);
  CHECK(std::fabs(mean.mean - 1.5 * std::exp(0.07)) <= 3.0 * mean.stderr_);
  Estimate var = variance_and_stderr(terminal);
  const double analytic = 1.5 * 1.5 * std::exp(2.0 * 0.07) * (std::exp(0.09) - 1.0);
  CHECK(std::fabs(var.mean - analytic) <= 3.0 * var.stderr_);
}

TEST_CASE("zero-drift gbm is a martingale") {
  GbmParams params;
  params.s0 = Eigen::VectorXd::Constant(1, 1.0);
  params.drift = Eigen::VectorXd::Zero(1);
  params.sigma = Eigen::MatrixXd::Constant(1, 1, 0.25);
  PathEnsemble e = simulate_gbm(params, make_time_grid(1.0, 32), 50000, 3);
  std::vector<double> terminal(e.n_paths);
  for (std::size_t p = 0; p < e.n_paths; ++p) terminal[p] = e.value(p, 32, 0);
  Estimate mean = mean_and_stderr(terminal);
  CHECK(std::fabs(mean.mean - 1.0) <= 3.0 * mean.stderr_);
}

TEST_CASE("simulation is deterministic in the seed") {
  GbmParams params;
  params.s0 = Eigen::VectorXd::Constant(2, 1.0);
  params.drift = Eigen::VectorXd::Constant(2, 0.05);
  params.sigma = Eigen::MatrixXd::Identity(2, 2) * 0.2;
  const TimeGrid grid = make_time_grid(1.0, 16);
  PathEnsemble a = simulate_gbm(params, grid, 512, 42);
  PathEnsemble b = simulate_gbm(params, grid, 512, 42);
  CHECK(a.values == b.values);
  CHECK(a.increments == b.increments);
  PathEnsemble c = simulate_gbm(params, grid, 512, 43);
  CHECK(a.values != c.values);
}

TEST_CASE("gbm parameter validation") {
  GbmParams params;
  params.s0 = Eigen::VectorXd::Constant(1, -1.0);
  params.drift = Eigen::VectorXd::Zero(1);
  params.sigma = Eigen::MatrixXd::Constant(1, 1, 0.2);
  CHECK_THROWS_AS(params.validate(), invalid_argument_error);
  params.s0(0) = 1.0;
  CHECK_NOTHROW(params.validate());
  CHECK(params.non_degenerate());
  params.sigma(0, 0) = 0.0;
  CHECK_FALSE(params.non_degenerate());
}

TEST_CASE("sabr degenerates to driftless gbm when alpha is zero and beta is one") {
  SabrParams params;
  params.f0 = 1.0;
  params.s = 0.2;
  params.alpha = 0.0;
  params.beta_exp = 1.0;
  const TimeGrid grid = make_time_grid(1.0, 32);
  SabrEnsemble se = simulate_sabr(params, grid, 20000, 5);
  CHECK(se.absorbed_fraction == 0.0);
  for (std::size_t k = 0; k <= 32; ++k) CHECK(se.paths.value(7, k, 1) == doctest::Approx(0.2));
  std::vector<double> terminal(se.paths.n_paths);
  for (std::size_t p = 0; p < se.paths.n_paths; ++p) terminal[p] = se.paths.value(p, 32, 0);
  Estimate mean = mean_and_stderr(terminal);
  CHECK(std::fabs(mean.mean - 1.0) <= 3.0 * mean.stderr_);
}

TEST_CASE("sabr volatility track is an exact exponential martingale") {
  SabrParams params;
  params.s = 0.3;
  params.alpha = 0.6;
  params.beta_exp = 1.0;
  const TimeGrid grid = make_time_grid(1.0, 16);
  SabrEnsemble se = simulate_sabr(params, grid, 50000, 6);
  for (std::size_t k : {4UL, 8UL, 16UL}) {
    std::vector<double> vol(se.paths.n_paths);
    for (std::size_t p = 0; p < se.paths.n_paths; ++p) vol[p] = se.paths.value(p, k, 1);
    Estimate mean = mean_and_stderr(vol);
    CHECK(std::fabs(mean.mean - 0.3) <= 3.0 * mean.stderr_);
  }
}

TEST_CASE("sabr driver correlation at rho zero") {
  SabrParams params;
  params.alpha = 0.4;
  params.rho = 0.0;
  const TimeGrid grid = make_time_grid(1.0, 8);
  SabrEnsemble se = simulate_sabr(params, grid, 20000, 7);
  // correlate the two driver increments over the first step
  std::vector<double> prod(se.paths.n_paths);
  for (std::size_t p = 0; p < se.paths.n_paths; ++p)
    prod[p] = se.paths.increment(p, 0, 0) * se.paths.increment(p, 0, 1);
  Estimate corr = mean_and_stderr(prod);
  CHECK(std::fabs(corr.mean) <= 3.0 * corr.stderr_);
}

TEST_CASE("sabr forward stays a supermartingale under absorption") {
  SabrParams params;
  params.f0 = 0.05;
  params.s = 0.6;
  params.alpha = 0.3;
  params.beta_exp = 0.5;
  const TimeGrid grid = make_time_grid(1.0, 64);
  SabrEnsemble se = simulate_sabr(params, grid, 20000, 8);
  std::vector<double> terminal(se.paths.n_paths);
  for (std::size_t p = 0; p < se.paths.n_paths; ++p)
    terminal[p] = se.paths.value(p, 64, 0);
  Estimate mean = mean_and_stderr(terminal);
  CHECK(mean.mean <= 0.05 + 3.0 * mean.stderr_);
  // absorbed paths stay at zero for good
  for (std::size_t p = 0; p < se.paths.n_paths; ++p) {
    bool dead = false;
    for (std::size_t k = 0; k <= 64; ++k) {
      const double f = se.paths.value(p, k, 0);
      if (dead) CHECK(f == 0.0);
      if (f == 0.0) dead = true;
    }
  }
}

TEST_CASE("sabr parameter validation") {
  SabrParams params;
  params.beta_exp = 1.5;
  CHECK_THROWS_AS(params.validate(), invalid_argument_error);
  params.beta_exp = 0.5;
  params.rho = 1.0;
  CHECK_THROWS_AS(params.validate(), invalid_argument_error);
}

TEST_CASE("bond path") {
  BondParams flat{0.0, 3.0};
  const TimeGrid grid = make_time_grid(1.0, 4);
  auto path = bond_path(flat, grid);
  for (double v : path) CHECK(v == 3.0);

  BondParams params{0.06, 1.0};
  auto growth = bond_path(params, grid);
  CHECK(growth.front() == 1.0);
  CHECK(growth.back() == doctest::Approx(std::exp(0.06)).epsilon(1e-12));
}
