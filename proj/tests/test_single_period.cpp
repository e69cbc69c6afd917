#include <doctest.h>

#include <cmath>

#include "riskflow/core.hpp"
#include "riskflow/single_period.hpp"

using namespace riskflow;
using namespace riskflow::single_period;

namespace {

Eigen::MatrixXd example_cov() {
  Eigen::MatrixXd cov(3, 3);
  cov << 0.09, 0.048, 0.0225,
         0.048, 0.04, 0.009,
         0.0225, 0.009, 0.0225;
  return cov;
}

}  // namespace

TEST_CASE("market validation") {
  CHECK_NOTHROW(SinglePeriodMarket(example_cov()));
  Eigen::MatrixXd asym = example_cov();
  asym(0, 1) += 1e-6;
  CHECK_THROWS_AS(SinglePeriodMarket{asym}, invalid_argument_error);
  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  CHECK_THROWS_AS(SinglePeriodMarket{indefinite}, invalid_argument_error);
  CHECK_THROWS_AS(BudgetVector(Eigen::VectorXd::Zero(2)), invalid_argument_error);
}

TEST_CASE("std risk on identity and the example matrix") {
  SinglePeriodMarket identity(Eigen::MatrixXd::Identity(3, 3));
  Eigen::VectorXd equal = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  CHECK(std_risk(identity, equal) == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));

  SinglePeriodMarket market(example_cov());
  // sqrt(sum of all entries / 9)
  CHECK(std_risk(market, equal) == doctest::Approx(0.18604061683167766).epsilon(1e-12));
  CHECK(std_risk(market, Eigen::VectorXd::Zero(3)) == 0.0);
}

TEST_CASE("marginal and total contributions") {
  SinglePeriodMarket market(example_cov());
  Eigen::VectorXd equal = Eigen::VectorXd::Constant(3, 1.0 / 3.0);

  Eigen::VectorXd mc = marginal_contribution_sp(market, equal, Measure::variance);
  CHECK(mc(0) == doctest::Approx(0.0535).epsilon(1e-12));
  CHECK(mc(1) == doctest::Approx(0.0970 / 3.0).epsilon(1e-12));
  CHECK(mc(2) == doctest::Approx(0.018).epsilon(1e-12));

  Eigen::VectorXd mc_std = marginal_contribution_sp(market, equal, Measure::std_dev);
  const double sigma = std_risk(market, equal);
  for (int i = 0; i < 3; ++i) CHECK(mc_std(i) == doctest::Approx(mc(i) / sigma).epsilon(1e-12));

  Eigen::VectorXd k = risk_contribution_sp(market, equal, Measure::variance);
  for (int i = 0; i < 3; ++i) CHECK(k(i) == doctest::Approx(mc(i) / 3.0).epsilon(1e-12));
  CHECK(k.sum() == doctest::Approx(equal.transpose() * example_cov() * equal).epsilon(1e-12));

  CHECK_THROWS_AS(marginal_contribution_sp(market, Eigen::VectorXd::Zero(3), Measure::std_dev),
                  invalid_argument_error);
}

TEST_CASE("ratio identity between variance and std contributions") {
  SinglePeriodMarket market(example_cov());
  Eigen::VectorXd w(3);
  w << 0.2, 0.5, 0.3;
  Eigen::VectorXd kv = risk_contribution_sp(market, w, Measure::variance);
  Eigen::VectorXd ks = risk_contribution_sp(market, w, Measure::std_dev);
  for (int i = 1; i < 3; ++i)
    CHECK(kv(i) / kv(0) == doctest::Approx(ks(i) / ks(0)).epsilon(1e-12));
}

TEST_CASE("min variance weights") {
  SinglePeriodMarket identity(Eigen::MatrixXd::Identity(4, 4));
  Eigen::VectorXd w = min_variance_weights(identity);
  for (int i = 0; i < 4; ++i) CHECK(w(i) == doctest::Approx(0.25).epsilon(1e-12));

  SinglePeriodMarket market(example_cov());
  Eigen::VectorXd mv = min_variance_weights(market);
  CHECK(mv(0) < 0.0);
  CHECK(mv.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mv(0) == doctest::Approx(-0.355083459787557).epsilon(1e-8));
  CHECK(mv(1) == doctest::Approx(0.614567526555387).epsilon(1e-8));
  CHECK(mv(2) == doctest::Approx(0.740515933232170).epsilon(1e-8));
}

TEST_CASE("risk budgeting solver") {
  SinglePeriodMarket identity(Eigen::MatrixXd(0.04 * Eigen::MatrixXd::Identity(3, 3)));
  RiskBudgetResult sym = risk_parity_weights(identity);
  CHECK(sym.converged);
  for (int i = 0; i < 3; ++i) CHECK(sym.weights(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-10));

  SinglePeriodMarket market(example_cov());
  RiskBudgetResult rp = risk_parity_weights(market);
  CHECK(rp.converged);
  CHECK(rp.foc_residual <= 1e-10);
  CHECK(rp.weights(0) == doctest::Approx(0.196861939889447).epsilon(1e-8));
  CHECK(rp.weights(1) == doctest::Approx(0.324440834636683).epsilon(1e-8));
  CHECK(rp.weights(2) == doctest::Approx(0.478697225473870).epsilon(1e-8));

  Eigen::VectorXd k = risk_contribution_sp(market, rp.weights, Measure::std_dev);
  for (int i = 1; i < 3; ++i) CHECK(k(i) == doctest::Approx(k(0)).epsilon(1e-8));

  // sigma ordering against min-variance and equal weights
  const double s_rp = std_risk(market, rp.weights);
  CHECK(std_risk(market, min_variance_weights(market)) <= s_rp);
  CHECK(s_rp <= std_risk(market, Eigen::VectorXd::Constant(3, 1.0 / 3.0)));
}

TEST_CASE("budget scaling and uniqueness") {
  SinglePeriodMarket market(example_cov());
  Eigen::VectorXd beta(3);
  beta << 0.2, 0.3, 0.5;
  RiskBudgetResult base = risk_budget_weights(market, BudgetVector(beta));
  RiskBudgetResult scaled = risk_budget_weights(market, BudgetVector(4.0 * beta));
  for (int i = 0; i < 3; ++i) {
    CHECK(scaled.raw_shares(i) == doctest::Approx(2.0 * base.raw_shares(i)).epsilon(1e-8));
    CHECK(scaled.weights(i) == doctest::Approx(base.weights(i)).epsilon(1e-8));
  }

  RiskBudgetOptions from_uniform;
  from_uniform.start = Eigen::VectorXd::Constant(3, 1.0);
  RiskBudgetOptions from_beta;
  from_beta.start = beta;
  RiskBudgetResult a = risk_budget_weights(market, BudgetVector(beta), from_uniform);
  RiskBudgetResult b = risk_budget_weights(market, BudgetVector(beta), from_beta);
  for (int i = 0; i < 3; ++i) CHECK(a.weights(i) == doctest::Approx(b.weights(i)).epsilon(1e-8));

  RiskBudgetOptions starved;
  starved.max_iterations = 1;
  CHECK_THROWS_AS(risk_budget_weights(market, BudgetVector(beta), starved), convergence_error);
}

TEST_CASE("heuristic loss") {
  SinglePeriodMarket market(example_cov());
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  RiskBudgetResult rp = risk_parity_weights(market);
  CHECK(heuristic_loss(market, rp.weights, BudgetVector(beta)) <= 1e-12);

  SinglePeriodMarket identity(Eigen::MatrixXd::Identity(3, 3));
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1(0) = 1.0;
  CHECK(heuristic_loss(identity, e1, BudgetVector(beta)) > 0.0);
  CHECK(heuristic_loss(market, Eigen::VectorXd::Constant(3, 1.0 / 3.0), BudgetVector(beta)) > 0.0);
}

TEST_CASE("euler residual") {
  SinglePeriodMarket scalar(Eigen::MatrixXd::Constant(1, 1, 4.0));
  Eigen::VectorXd w2 = Eigen::VectorXd::Constant(1, 2.0);
  CHECK(euler_residual(scalar, w2, Measure::std_dev) <= 1e-12);

  SinglePeriodMarket market(example_cov());
  Eigen::VectorXd equal = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  CHECK(euler_residual(market, equal, Measure::std_dev) <= 1e-10);
  CHECK(euler_residual(market, equal, Measure::variance) <= 1e-10);
}
