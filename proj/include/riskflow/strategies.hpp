#pragma once

// Closed-form policies and risk contributions for three worked examples:
// volatility-managed portfolios, SABR budgets at four information levels,
// and the continuous-time mean-variance feedback policy.

#include <Eigen/Dense>

#include "riskflow/budgeting.hpp"
#include "riskflow/contribution.hpp"
#include "riskflow/core.hpp"
#include "riskflow/market.hpp"

namespace riskflow::strategies {

// ---------------------------------------------------------------------------
// Volatility-managed portfolio.  Ensembles carry (S, sigma) as assets (0, 1);
// only asset 0 is traded.

struct VolManagedSpec {
  double c_hat = 1.0;   // exposure scale, > 0
  double u_max = 1e6;   // share cap

  void validate() const;
};

// u_t = c_hat / sigma_t^2 on asset 0, capped at u_max.
Policy vol_managed_policy(const VolManagedSpec& spec, const PathEnsemble& ensemble);

// beta_t = (c_hat S_t / sigma_t)^2, the budget the policy above realizes at
// zero drift.
budgeting::BudgetProcess vol_managed_budget(const VolManagedSpec& spec);

struct LongTermCheck {
  std::vector<double> times;  // checkpoints T/4, T/2, T
  std::vector<double> lhs;    // E[X_t / t]
  std::vector<double> rhs;    // E[(1/t) sum beta^{1/2} theta ds]
  std::vector<double> gap;    // E|difference|
};

// Long-horizon drift of the vol-managed wealth against the time average of
// beta^{1/2} theta; theta is the per-step market price of risk.
LongTermCheck vol_managed_long_term(const PathEnsemble& ensemble, const VolManagedSpec& spec,
                                    const std::vector<double>& theta);

// ---------------------------------------------------------------------------
// SABR budgets (rho = 0).  Policies act on asset 0 (the forward F).

enum class SabrPolicyCase { parity, h_projection, deterministic, single_period };

// c = u sigma_t^2 F_t^{2 beta_exp} on asset 0 (local closed form).
contribution::ContributionProcess sabr_marginal(const Policy& policy,
                                                const market::SabrEnsemble& ensemble,
                                                const market::SabrParams& params);

// The four closed-form policies with total risk lambda:
//   parity:        u = sqrt(lambda/T) / (sigma_t F_t^b), zero once absorbed
//   h_projection:  u = sqrt(lambda/T) / (s Fbar_t^b), Fbar = E[F_t | B1 path]
//                  estimated by equal-probability binning of the running B1
//   deterministic: u(t)^2 E[sigma^2 F^{2b}]_t = lambda/T per node
//   single_period: u^2 Var(F_T) = lambda
Policy sabr_policy(SabrPolicyCase c, double lambda, const market::SabrParams& params,
                   const market::SabrEnsemble& ensemble);

// Variance of the pointwise contribution k over (path, step); the dispersion
// statistic ordering the four cases.
double pointwise_dispersion(const contribution::ContributionProcess& contrib, std::size_t asset);

// ---------------------------------------------------------------------------
// Continuous-time mean-variance (two assets: bond, stock)

struct MvParams {
  double r = 0.06;          // bond rate
  double b = 0.12;          // stock drift
  double sigma_sq = 0.0225; // sigma sigma', > 0
  double tau = 1.0;         // risk tolerance, > 0
  double x0 = 1.0;          // initial wealth, > 0
  double horizon = 1.0;     // T

  void validate() const;
  double theta_sq() const { return (b - r) * (b - r) / sigma_sq; }
  // discounted wealth target D_t; M1 = ((b-r)/sigma_sq) (D_t - X)
  double target(double t) const;
};

// Money allocation (M0, M1) of the linear feedback policy.
std::pair<double, double> mv_policy(const MvParams& params, double t, double x);

// E[X_T] = x0 e^{rT} + (e^{theta^2 T} - 1)/(2 tau), from the wealth ODE.
double mv_expected_terminal(const MvParams& params);

struct MvContribution {
  double k0 = 0.0;  // bond risk contribution at (t, x)
  double k1 = 0.0;  // stock risk contribution at (t, x)
  double k0_x2 = 0.0;  // X^2 coefficient of K0: 2r(sigma_sq + b - r)/sigma_sq
  double k1_x2 = 0.0;  // X^2 coefficient of K1: (r^2 - b^2)/sigma_sq
};

// Money-manner contribution of the MV portfolio by substituting the policy
// into the explicit formula with drift (r, b) and diffusion rows (0, sigma).
MvContribution mv_risk_contribution(const MvParams& params, double t, double x);

struct MvSimulation {
  std::vector<double> wealth;  // [p*(N+1)+k]
  Estimate terminal_mean;
  Estimate terminal_variance;
};

// Exact simulation: Y = D - X is a geometric Brownian motion, so X is
// sampled without discretization bias.
MvSimulation mv_simulate(const MvParams& params, const TimeGrid& grid, std::size_t n_paths,
                         std::uint64_t seed);

struct Figure2Entry {
  std::string sweep;    // "baseline", "x0", "tau"
  double param_value = 0.0;
  double k0_x2 = 0.0;
  double k1_x2 = 0.0;
  double k1_root_lo = 0.0;  // K1 zero crossings (K1 < 0 in the tails)
  double k1_root_hi = 0.0;
  std::vector<double> x;
  std::vector<double> k0;
  std::vector<double> k1;
};

std::vector<Figure2Entry> figure2_table(const MvParams& params, double t,
                                        const std::vector<double>& x_values,
                                        const std::vector<double>& x0_sweep,
                                        const std::vector<double>& tau_sweep);

}  // namespace riskflow::strategies
