#pragma once

// Continuous-time risk budgeting: find u with u .* c^u = beta, class-averaged
// over an information class (constant, deterministic-in-time, state-binned
// feedback, or fully pointwise), plus budget projection, the auxiliary
// embedded objective and the embedding fixed-point search.

#include <Eigen/Dense>

#include "riskflow/contribution.hpp"
#include "riskflow/core.hpp"
#include "riskflow/market.hpp"

namespace riskflow::budgeting {

// ---------------------------------------------------------------------------
// Budgets.  Mirrors Policy kinds; beta must be strictly positive wherever it
// is defined.

using BudgetRule = std::function<void(double t, const double* state, double* beta_out)>;

struct BudgetProcess {
  PolicyKind kind = PolicyKind::constant;
  std::size_t n_assets = 0;
  std::vector<double> data;  // constant: d; deterministic: N*d; raw: P*N*d
  BudgetRule rule;           // feedback only

  static BudgetProcess constant(std::vector<double> beta);
  static BudgetProcess deterministic(std::size_t n_assets, std::vector<double> per_step);
  static BudgetProcess feedback(std::size_t n_assets, BudgetRule rule);
  static BudgetProcess raw(std::size_t n_assets, std::vector<double> table);
};

// Throws invalid_argument_error on non-positive entries.
void eval_budget_row(const BudgetProcess& budget, const PathEnsemble& ensemble, std::size_t path,
                     std::size_t step, double* out);

// ---------------------------------------------------------------------------
// Information classes.  Each class is a refinement of the previous one;
// feedback bins the chosen state coordinate into equal-probability bins
// per node.

enum class InfoKind { constant, deterministic_time, feedback, full };

struct InformationClass {
  InfoKind kind = InfoKind::constant;
  std::size_t n_bins = 32;      // feedback only
  std::size_t state_asset = 0;  // which asset value to bin on

  bool coarser_or_equal(const InformationClass& other) const;
};

// Partition of (path, step) into measurable cells of an information class.
struct CellMap {
  InfoKind kind = InfoKind::constant;
  std::size_t n_cells = 1;
  std::size_t n_steps = 0;
  std::size_t n_bins = 1;
  std::size_t state_asset = 0;
  std::vector<double> edges;  // feedback: (n_bins - 1) quantile edges per node

  std::size_t cell(const PathEnsemble& ensemble, std::size_t path, std::size_t step) const;
};

CellMap make_cell_map(const InformationClass& info, const PathEnsemble& ensemble);

// Cell averages of beta over the class, in cell-major/asset-minor layout.
std::vector<double> average_budget(const BudgetProcess& budget, const CellMap& cells,
                                   const PathEnsemble& ensemble);

struct BudgetSolution {
  Policy policy;               // raw table over the ensemble
  std::vector<double> coeffs;  // class coefficients, [cell*d + a]
  CellMap cells;
  double residual_max = 0.0;  // class-averaged |u.*c - beta|, sup norm
  double residual_l2 = 0.0;
  double objective = 0.0;  // E int -beta'log u dt + Var(X_T)/2
  std::size_t iterations = 0;
  bool converged = false;
};

struct BudgetSolveOptions {
  double tolerance = 1e-8;  // relative, on the class-averaged residual
  std::size_t max_iterations = 200;
  std::vector<double> start;  // optional coefficients [cell*d + a]
  bool throw_on_failure = true;
};

// Zero-drift pointwise solve: c is local there, so each (path, step) reduces
// to the d-dimensional system u .* (Diag(S) ss' Diag(S) u) = beta, solved by
// Newton to 1e-10.
BudgetSolution solve_budget_pointwise(const market::GbmParams& params, const PathEnsemble& ensemble,
                                      const BudgetProcess& budget, const TimeGrid& grid);

using LocalCovariance = std::function<void(const PathEnsemble&, std::size_t path, std::size_t step,
                                           Eigen::MatrixXd& cov_out)>;

// Pointwise zero-drift solve with a state-dependent instantaneous covariance
// on the leading budget.n_assets traded assets (e.g. stochastic volatility
// read off a non-traded track).  Points with a singular local system
// (absorbed paths) receive zero shares and are skipped in the residual.
BudgetSolution solve_budget_pointwise_local(const PathEnsemble& ensemble,
                                            const BudgetProcess& budget,
                                            const LocalCovariance& local_cov, const TimeGrid& grid);

// Class-restricted iterative solve with c recomputed (shared E[M_T]) each
// iteration; positivity is preserved by multiplicative damped updates.
BudgetSolution solve_budget_iterative(const market::GbmParams& params, const PathEnsemble& ensemble,
                                      const BudgetProcess& budget, const InformationClass& info,
                                      const BudgetSolveOptions& opts = {});

// Norms of the class-averaged u .* c - beta over (cell, asset).
std::pair<double, double> budget_residual(const PolicyTable& policy,
                                          const contribution::ContributionProcess& contrib,
                                          const BudgetProcess& budget, const InformationClass& info,
                                          const PathEnsemble& ensemble);

// Conditional average of beta over the coarser class's cells; to_class must
// be coarser than (or equal to) from_class.
BudgetProcess project_budget(const BudgetProcess& budget, const InformationClass& from_class,
                             const InformationClass& to_class, const PathEnsemble& ensemble);

// J_gamma(u) = E[ int -beta'log u dt + gamma*(u o S)_T + (u o S)_T^2 ]
double auxiliary_objective(const Policy& policy, double gamma, const PathEnsemble& ensemble,
                           const BudgetProcess& budget, double x0);

struct EmbeddingOptions {
  double gamma_tolerance = 1e-6;
  std::size_t max_outer = 50;
  double damping = 1.0;  // gamma step damping in (0, 1]
  BudgetSolveOptions inner;
  InformationClass info;
};

struct EmbeddingResult {
  double gamma = 0.0;
  BudgetSolution solution;
  std::size_t outer_iterations = 0;
  bool converged = false;
};

// Outer fixed point gamma <- -2 E[(u_gamma o S)_T], inner solves with the
// gamma-modified marginal; the fixed point reproduces the direct solution.
EmbeddingResult embedding_search(const market::GbmParams& params, const PathEnsemble& ensemble,
                                 const BudgetProcess& budget, const EmbeddingOptions& opts = {});

// sum_i E int (-beta_i log u_i + beta_i log beta_i) dt
double kl_divergence(const BudgetProcess& budget, const Policy& policy, const PathEnsemble& ensemble);

}  // namespace riskflow::budgeting
