#pragma once

// Investment values, terminal variance, the marginal risk contribution
// process c, risk contributions k = u .* c, masked marginal-measure
// estimates and the finite-difference Gateaux oracle.
//
// Convention: c is scaled so that Var(X_T) = E int_0^T u'c dt holds
// exactly; the marginal risk measure of the theory maps to mu <-> 2c dt dP.

#include <Eigen/Dense>

#include "riskflow/core.hpp"
#include "riskflow/market.hpp"

namespace riskflow::contribution {

// Evaluates the shares row of a policy at (path, step) without
// materializing a full table; clamps to the policy cap.
void eval_policy_row(const Policy& policy, const PathEnsemble& ensemble, std::size_t path,
                     std::size_t step, double* out);

struct InvestmentResult {
  double x0 = 0.0;
  std::vector<double> wealth;  // [(p*(N+1)+k)] wealth X at node k
  Estimate terminal_mean;
  Estimate terminal_variance;

  double at(std::size_t p, std::size_t k, std::size_t n_steps) const {
    return wealth[p * (n_steps + 1) + k];
  }
};

// X_{k+1} = X_k + sum_i u_i(t_k) (S_i(t_{k+1}) - S_i(t_k))
InvestmentResult investment_value(const Policy& policy, const PathEnsemble& ensemble, double x0);

// Terminal X_T samples only (no wealth paths kept).
std::vector<double> terminal_gains(const Policy& policy, const PathEnsemble& ensemble);

Estimate terminal_variance(const Policy& policy, const PathEnsemble& ensemble, double x0);

struct ContributionProcess {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  std::size_t n_assets = 0;
  std::vector<double> c;  // [(p*N+k)*d + a]
  std::vector<double> k;  // u .* c
  double mean_terminal_gain = 0.0;  // E[M_T] shared scalar of the two-pass estimate

  double c_at(std::size_t p, std::size_t s, std::size_t a) const {
    return c[(p * n_steps + s) * n_assets + a];
  }
  double k_at(std::size_t p, std::size_t s, std::size_t a) const {
    return k[(p * n_steps + s) * n_assets + a];
  }
};

// Streaming form: fn(path, step, c_row, u_row) is invoked for every
// (path, step) with the marginal contribution row of the centered
// explicit formula  c = 2 Diag(S) b M_t + Diag(S) ss' Diag(S) u
//                      - Diag(S) b E[M_T],   M = X - x0.
// E[M_T] is estimated in a first pass over the full ensemble.
void stream_marginal_contribution(const Policy& policy, const PathEnsemble& ensemble,
                                  const market::GbmParams& params,
                                  const std::function<void(std::size_t path, std::size_t step,
                                                           const double* c_row, const double* u_row)>& fn);

ContributionProcess explicit_marginal_contribution(const Policy& policy, const PathEnsemble& ensemble,
                                                   const market::GbmParams& params, double x0);

enum class Manner { share, money, weight };

// Money/weight manners require a self-financing portfolio
// (X_t = u_t' S_t within 1e-8 relative on every node).
ContributionProcess risk_contribution_variants(const Policy& policy, const PathEnsemble& ensemble,
                                               const market::GbmParams& params, double x0,
                                               Manner manner);

// MC estimate of E sum_k u(t_k)'c(t_k) dt.
Estimate aggregate_risk(const Policy& policy, const PathEnsemble& ensemble,
                        const market::GbmParams& params, double x0);
Estimate aggregate_risk(const PolicyTable& policy, const ContributionProcess& contribution,
                        const TimeGrid& grid);

// ---------------------------------------------------------------------------
// Predictable masks

// Writes {0,1} per asset; a predictable generator reads nodes <= step only.
using MaskGenerator =
    std::function<void(const PathEnsemble&, std::size_t path, std::size_t step, std::uint8_t* out)>;

struct PredictableMask {
  std::size_t n_assets = 0;
  MaskGenerator gen;

  static PredictableMask all(std::size_t n_assets);
  static PredictableMask none(std::size_t n_assets);
  // 1 on [t_lo, t_hi) for every asset
  static PredictableMask time_window(std::size_t n_assets, const TimeGrid& grid, double t_lo, double t_hi);
};

// Left-endpoint measurability audit on a small sub-ensemble.
bool audit_mask(const PredictableMask& mask, const PathEnsemble& ensemble);

// Per-asset E int 1_E .* c dt; throws invalid_mask_error if the mask fails
// the measurability audit.
std::vector<Estimate> marginal_measure(const Policy& policy, const PathEnsemble& ensemble,
                                       const market::GbmParams& params, const PredictableMask& mask);
std::vector<Estimate> marginal_measure(const ContributionProcess& contribution,
                                       const PathEnsemble& ensemble, const PredictableMask& mask);

// ---------------------------------------------------------------------------
// Oracles and cross-checks

// Central difference [Var(X^{u+hv}) - Var(X^{u-hv})]/(2h) on common random
// numbers; equals twice the sample covariance of (X_T^u, X_T^v) exactly.
double gateaux_oracle(const Policy& u, const Policy& v, const PathEnsemble& ensemble, double x0,
                      double h);

// E int v'c^u dt; equals Cov(X_T^u, X_T^v) for martingale dynamics and
// Var(X_T^u) at v = u.
Estimate covariance_via_contribution(const Policy& u, const Policy& v, const PathEnsemble& ensemble,
                                     const market::GbmParams& params, double x0);

struct ContinuityCheck {
  double lhs = 0.0;    // |E int 1_E' c^{du} dt|
  double bound = 0.0;  // K ||du||_inf with K estimated from the ensemble
  bool holds = false;
};

ContinuityCheck contribution_continuity_check(const Policy& u, const Policy& u_perturbed,
                                              const PathEnsemble& ensemble,
                                              const market::GbmParams& params,
                                              const PredictableMask& mask);

void export_contribution_csv(const ContributionProcess& contribution, const PolicyTable& policy,
                             const TimeGrid& grid, const std::string& path);

}  // namespace riskflow::contribution
