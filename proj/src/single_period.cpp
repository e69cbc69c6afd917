#include "riskflow/single_period.hpp"

#include <cmath>

namespace riskflow::single_period {

SinglePeriodMarket::SinglePeriodMarket(Eigen::MatrixXd cov) : covariance(std::move(cov)) {
  if (covariance.rows() == 0 || covariance.rows() != covariance.cols())
    throw invalid_argument_error("SinglePeriodMarket: covariance must be square and non-empty");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw invalid_argument_error("SinglePeriodMarket: covariance not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw invalid_argument_error("SinglePeriodMarket: covariance not positive definite");
}

BudgetVector::BudgetVector(Eigen::VectorXd b) : beta(std::move(b)) {
  if (beta.size() == 0 || (beta.array() <= 0.0).any())
    throw invalid_argument_error("BudgetVector: budget entries must be strictly positive");
}

double std_risk(const SinglePeriodMarket& market, const Eigen::VectorXd& w) {
  return std::sqrt(w.dot(market.covariance * w));
}

Eigen::VectorXd marginal_contribution_sp(const SinglePeriodMarket& market, const Eigen::VectorXd& w,
                                         Measure measure) {
  Eigen::VectorXd lw = market.covariance * w;
  if (measure == Measure::variance) return lw;
  const double sigma = std::sqrt(w.dot(lw));
  if (sigma == 0.0)
    throw invalid_argument_error("marginal_contribution_sp: std measure undefined at w = 0");
  return lw / sigma;
}

Eigen::VectorXd risk_contribution_sp(const SinglePeriodMarket& market, const Eigen::VectorXd& w,
                                     Measure measure) {
  return w.cwiseProduct(marginal_contribution_sp(market, w, measure));
}

Eigen::VectorXd min_variance_weights(const SinglePeriodMarket& market) {
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(market.covariance.rows());
  Eigen::VectorXd x = market.covariance.llt().solve(ones);
  return x / x.sum();
}

namespace {

double foc_residual(const Eigen::MatrixXd& L, const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
  return (x.cwiseProduct(L * x) - 0.5 * beta).cwiseAbs().maxCoeff();
}

double objective(const Eigen::MatrixXd& L, const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
  return -beta.dot(x.array().log().matrix()) + x.dot(L * x);
}

// One sweep of cyclic coordinate descent; each coordinate solves the scalar
// quadratic 2 L_ii x^2 + 2 r x - beta = 0 with r = (Lx)_i - L_ii x_i.
void coordinate_sweep(const Eigen::MatrixXd& L, Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
  const Eigen::Index d = x.size();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lii = L(i, i);
    const double r = L.row(i).dot(x) - lii * x(i);
    x(i) = (-r + std::sqrt(r * r + 2.0 * lii * beta(i))) / (2.0 * lii);
  }
}

}  // namespace

RiskBudgetResult risk_budget_weights(const SinglePeriodMarket& market, const BudgetVector& budget,
                                     const RiskBudgetOptions& opts) {
  const Eigen::MatrixXd& L = market.covariance;
  const Eigen::VectorXd& beta = budget.beta;
  if (beta.size() != L.rows())
    throw invalid_argument_error("risk_budget_weights: budget dimension mismatch");

  Eigen::VectorXd x;
  if (opts.start.size() == L.rows() && (opts.start.array() > 0.0).all())
    x = opts.start;
  else
    x = (beta.array() / L.diagonal().array()).sqrt().matrix();

  RiskBudgetResult result;
  double res = foc_residual(L, x, beta);
  std::size_t it = 0;
  std::size_t stalls = 0;
  for (; it < opts.max_iterations && res > opts.foc_tolerance; ++it) {
    // Newton step on grad = -beta./x + 2Lx, hess = diag(beta./x^2) + 2L
    Eigen::VectorXd grad = -(beta.array() / x.array()).matrix() + 2.0 * (L * x);
    Eigen::MatrixXd hess = 2.0 * L;
    hess.diagonal() += (beta.array() / x.array().square()).matrix();
    Eigen::VectorXd step = hess.ldlt().solve(-grad);

    double alpha = 1.0;
    while (((x + alpha * step).array() <= 0.0).any()) alpha *= 0.5;
    const double j0 = objective(L, x, beta);
    Eigen::VectorXd cand = x + alpha * step;
    std::size_t bt = 0;
    while (objective(L, cand, beta) > j0 - 1e-4 * alpha * (-grad.dot(step)) && bt < 60) {
      alpha *= 0.5;
      cand = x + alpha * step;
      ++bt;
    }
    const double cand_res = foc_residual(L, cand, beta);
    if (cand_res < res) {
      x = cand;
      res = cand_res;
      stalls = 0;
    } else {
      // Newton stalled; fall back to a coordinate-descent sweep
      coordinate_sweep(L, x, beta);
      res = foc_residual(L, x, beta);
      if (++stalls > 50) break;
    }
  }
  // polish with coordinate sweeps if Newton left residual above tolerance
  for (; it < opts.max_iterations && res > opts.foc_tolerance; ++it) {
    coordinate_sweep(L, x, beta);
    res = foc_residual(L, x, beta);
  }

  result.raw_shares = x;
  result.weights = x / x.sum();
  result.foc_residual = res;
  result.iterations = it;
  result.converged = res <= opts.foc_tolerance;
  if (!result.converged)
    throw convergence_error("risk_budget_weights: iteration cap exceeded", res);
  return result;
}

RiskBudgetResult risk_parity_weights(const SinglePeriodMarket& market, const RiskBudgetOptions& opts) {
  const double d = static_cast<double>(market.n_assets());
  return risk_budget_weights(
      market, BudgetVector(Eigen::VectorXd::Constant(market.covariance.rows(), 1.0 / d)), opts);
}

double heuristic_loss(const SinglePeriodMarket& market, const Eigen::VectorXd& w,
                      const BudgetVector& budget) {
  Eigen::VectorXd k = risk_contribution_sp(market, w, Measure::std_dev);
  Eigen::VectorXd ratio = k.cwiseQuotient(budget.beta);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < ratio.size(); ++i)
    for (Eigen::Index j = 0; j < ratio.size(); ++j) {
      const double diff = ratio(i) - ratio(j);
      loss += diff * diff;
    }
  return loss;
}

double euler_residual(const SinglePeriodMarket& market, const Eigen::VectorXd& w, Measure measure) {
  const Eigen::VectorXd k = risk_contribution_sp(market, w, measure);
  const double total =
      measure == Measure::std_dev ? std_risk(market, w) : w.dot(market.covariance * w);
  return std::fabs(k.sum() - total);
}

}  // namespace riskflow::single_period
