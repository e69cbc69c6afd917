#pragma once

// Single-period risk measures, (marginal) risk contributions, Euler
// aggregation and risk-parity / risk-budgeting solvers over a covariance
// matrix of prices.
//
// Convention note: the budgeting objective is J(x) = -sum_i beta_i log x_i
// + x'Lx, whose first-order condition is x_i (Lx)_i = beta_i / 2.  Reported
// risk contributions use the marginal Lx (the half-derivative of the
// variance), so contributions sum to x'Lx.

#include <Eigen/Dense>

#include "riskflow/core.hpp"

namespace riskflow::single_period {

enum class Measure { std_dev, variance };

struct SinglePeriodMarket {
  Eigen::MatrixXd covariance;

  // Validates symmetry (1e-12) and strict positive definiteness.
  explicit SinglePeriodMarket(Eigen::MatrixXd cov);
  std::size_t n_assets() const { return static_cast<std::size_t>(covariance.rows()); }
};

struct BudgetVector {
  Eigen::VectorXd beta;  // strictly positive
  explicit BudgetVector(Eigen::VectorXd b);
};

double std_risk(const SinglePeriodMarket& market, const Eigen::VectorXd& w);

Eigen::VectorXd marginal_contribution_sp(const SinglePeriodMarket& market, const Eigen::VectorXd& w,
                                         Measure measure);

Eigen::VectorXd risk_contribution_sp(const SinglePeriodMarket& market, const Eigen::VectorXd& w,
                                     Measure measure);

// w = L^-1 1 / (1' L^-1 1)
Eigen::VectorXd min_variance_weights(const SinglePeriodMarket& market);

struct RiskBudgetOptions {
  double foc_tolerance = 1e-10;  // on max_i |x_i (Lx)_i - beta_i/2|
  std::size_t max_iterations = 500;
  Eigen::VectorXd start;  // optional; default sqrt(beta_i)/sqrt(L_ii)
};

struct RiskBudgetResult {
  Eigen::VectorXd raw_shares;  // x*, strictly positive
  Eigen::VectorXd weights;     // x*/sum(x*)
  double foc_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Damped Newton on grad J = -beta./x + 2Lx with a positivity-preserving
// backtracking line search; cyclic coordinate descent as a fallback.
RiskBudgetResult risk_budget_weights(const SinglePeriodMarket& market, const BudgetVector& budget,
                                     const RiskBudgetOptions& opts = {});

// Risk parity = equal budget 1/d per asset.
RiskBudgetResult risk_parity_weights(const SinglePeriodMarket& market,
                                     const RiskBudgetOptions& opts = {});

// J(w) = sum_{i,j} (k_i/beta_i - k_j/beta_j)^2 with std-measure contributions.
double heuristic_loss(const SinglePeriodMarket& market, const Eigen::VectorXd& w,
                      const BudgetVector& budget);

// |sum_i k_i - rho(w)| for the chosen measure.
double euler_residual(const SinglePeriodMarket& market, const Eigen::VectorXd& w, Measure measure);

}  // namespace riskflow::single_period
