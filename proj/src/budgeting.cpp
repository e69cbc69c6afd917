#include "riskflow/budgeting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace riskflow::budgeting {

// ---------------------------------------------------------------------------
// Budget processes

BudgetProcess BudgetProcess::constant(std::vector<double> beta) {
  BudgetProcess b;
  b.kind = PolicyKind::constant;
  b.n_assets = beta.size();
  b.data = std::move(beta);
  return b;
}

BudgetProcess BudgetProcess::deterministic(std::size_t n_assets, std::vector<double> per_step) {
  if (n_assets == 0 || per_step.size() % n_assets != 0)
    throw invalid_argument_error("BudgetProcess::deterministic: table size must be N*d");
  BudgetProcess b;
  b.kind = PolicyKind::deterministic;
  b.n_assets = n_assets;
  b.data = std::move(per_step);
  return b;
}

BudgetProcess BudgetProcess::feedback(std::size_t n_assets, BudgetRule rule) {
  BudgetProcess b;
  b.kind = PolicyKind::feedback;
  b.n_assets = n_assets;
  b.rule = std::move(rule);
  return b;
}

BudgetProcess BudgetProcess::raw(std::size_t n_assets, std::vector<double> table) {
  BudgetProcess b;
  b.kind = PolicyKind::raw;
  b.n_assets = n_assets;
  b.data = std::move(table);
  return b;
}

void eval_budget_row(const BudgetProcess& budget, const PathEnsemble& ensemble, std::size_t path,
                     std::size_t step, double* out) {
  const std::size_t d = budget.n_assets;
  switch (budget.kind) {
    case PolicyKind::constant:
      if (budget.data.size() != d) throw invalid_argument_error("bad constant budget");
      std::copy(budget.data.begin(), budget.data.end(), out);
      break;
    case PolicyKind::deterministic: {
      if (budget.data.size() != ensemble.grid.n_steps * d)
        throw invalid_argument_error("deterministic budget shape mismatch");
      std::copy(budget.data.begin() + step * d, budget.data.begin() + (step + 1) * d, out);
      break;
    }
    case PolicyKind::feedback:
      if (!budget.rule) throw invalid_argument_error("feedback budget without rule");
      budget.rule(ensemble.grid.node(step), ensemble.node_values(path, step), out);
      break;
    case PolicyKind::raw: {
      const std::size_t N = ensemble.grid.n_steps;
      if (budget.data.size() != ensemble.n_paths * N * d)
        throw invalid_argument_error("raw budget shape mismatch");
      std::copy(budget.data.begin() + (path * N + step) * d,
                budget.data.begin() + (path * N + step + 1) * d, out);
      break;
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    if (!(out[a] > 0.0)) throw invalid_argument_error("budget entries must be strictly positive");
}

// ---------------------------------------------------------------------------
// Information classes

namespace {

int info_rank(InfoKind k) {
  switch (k) {
    case InfoKind::constant: return 0;
    case InfoKind::deterministic_time: return 1;
    case InfoKind::feedback: return 2;
    case InfoKind::full: return 3;
  }
  return 3;
}

}  // namespace

bool InformationClass::coarser_or_equal(const InformationClass& other) const {
  return info_rank(kind) <= info_rank(other.kind);
}

std::size_t CellMap::cell(const PathEnsemble& ensemble, std::size_t path, std::size_t step) const {
  switch (kind) {
    case InfoKind::constant:
      return 0;
    case InfoKind::deterministic_time:
      return step;
    case InfoKind::feedback: {
      const double x = ensemble.value(path, step, state_asset);
      const double* lo = edges.data() + step * (n_bins - 1);
      std::size_t bin = static_cast<std::size_t>(std::upper_bound(lo, lo + n_bins - 1, x) - lo);
      return step * n_bins + bin;
    }
    case InfoKind::full:
      return path * n_steps + step;
  }
  return 0;
}

CellMap make_cell_map(const InformationClass& info, const PathEnsemble& ensemble) {
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  CellMap map;
  map.kind = info.kind;
  map.n_steps = N;
  map.state_asset = info.state_asset;
  switch (info.kind) {
    case InfoKind::constant:
      map.n_cells = 1;
      break;
    case InfoKind::deterministic_time:
      map.n_cells = N;
      break;
    case InfoKind::feedback: {
      if (info.n_bins < 1) throw invalid_argument_error("make_cell_map: n_bins must be >= 1");
      if (info.state_asset >= ensemble.n_assets)
        throw invalid_argument_error("make_cell_map: state_asset out of range");
      map.n_bins = info.n_bins;
      map.n_cells = N * info.n_bins;
      map.edges.assign(N * (info.n_bins - 1), 0.0);
      std::vector<double> column(P);
      for (std::size_t k = 0; k < N; ++k) {
        for (std::size_t p = 0; p < P; ++p) column[p] = ensemble.value(p, k, info.state_asset);
        std::sort(column.begin(), column.end());
        // equal-probability bins via empirical quantile edges
        for (std::size_t b = 1; b < info.n_bins; ++b) {
          const std::size_t idx = std::min(P - 1, b * P / info.n_bins);
          map.edges[k * (info.n_bins - 1) + b - 1] = column[idx];
        }
      }
      break;
    }
    case InfoKind::full:
      map.n_cells = P * N;
      break;
  }
  return map;
}

std::vector<double> average_budget(const BudgetProcess& budget, const CellMap& cells,
                                   const PathEnsemble& ensemble) {
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = budget.n_assets;
  std::vector<double> sums(cells.n_cells * d, 0.0);
  std::vector<std::size_t> counts(cells.n_cells, 0);
  std::vector<double> beta(d);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t k = 0; k < N; ++k) {
      eval_budget_row(budget, ensemble, p, k, beta.data());
      const std::size_t m = cells.cell(ensemble, p, k);
      for (std::size_t a = 0; a < d; ++a) sums[m * d + a] += beta[a];
      ++counts[m];
    }
  for (std::size_t m = 0; m < cells.n_cells; ++m) {
    if (counts[m] == 0) continue;
    for (std::size_t a = 0; a < d; ++a) sums[m * d + a] /= static_cast<double>(counts[m]);
  }
  return sums;
}

// ---------------------------------------------------------------------------
// Pointwise zero-drift solve

namespace {

// Newton on F(u) = u .* (A u) - beta with positive start and positivity-
// preserving damping; A is SPD.
void solve_point(const Eigen::MatrixXd& a_mat, const Eigen::VectorXd& beta, Eigen::VectorXd& u) {
  const Eigen::Index d = beta.size();
  for (Eigen::Index i = 0; i < d; ++i) u(i) = std::sqrt(beta(i) / a_mat(i, i));
  for (int it = 0; it < 80; ++it) {
    Eigen::VectorXd au = a_mat * u;
    Eigen::VectorXd f = u.cwiseProduct(au) - beta;
    const double res = f.cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, beta.cwiseAbs().maxCoeff());
    if (res <= 1e-12 * scale) break;
    Eigen::MatrixXd jac = u.asDiagonal() * a_mat;
    jac.diagonal() += au;
    Eigen::VectorXd step = jac.partialPivLu().solve(-f);
    double alpha = 1.0;
    while (((u + alpha * step).array() <= 0.0).any()) alpha *= 0.5;
    u += alpha * step;
  }
}

double objective_value(const Policy& policy, const PathEnsemble& ensemble,
                       const BudgetProcess& budget) {
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const double dt = ensemble.grid.dt;
  std::vector<double> gains(P, 0.0);
  std::vector<double> u(d), beta(d);
  double barrier = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    double g = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      contribution::eval_policy_row(policy, ensemble, p, k, u.data());
      eval_budget_row(budget, ensemble, p, k, beta.data());
      for (std::size_t a = 0; a < d; ++a) barrier -= beta[a] * std::log(u[a]) * dt;
      const double* s0 = ensemble.node_values(p, k);
      const double* s1 = ensemble.node_values(p, k + 1);
      for (std::size_t a = 0; a < d; ++a) g += u[a] * (s1[a] - s0[a]);
    }
    gains[p] = g;
  }
  barrier /= static_cast<double>(P);
  return barrier + 0.5 * variance_and_stderr(gains).mean;
}

}  // namespace

BudgetSolution solve_budget_pointwise(const market::GbmParams& params, const PathEnsemble& ensemble,
                                      const BudgetProcess& budget, const TimeGrid& grid) {
  params.validate();
  if (params.drift.cwiseAbs().maxCoeff() != 0.0)
    throw invalid_argument_error("solve_budget_pointwise: requires zero drift");
  if (!params.non_degenerate())
    throw degenerate_market_error("solve_budget_pointwise: singular instantaneous covariance");
  if (budget.n_assets != ensemble.n_assets)
    throw invalid_argument_error("solve_budget_pointwise: budget/ensemble asset count mismatch");
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const Eigen::MatrixXd cov = params.instantaneous_covariance();

  BudgetSolution sol;
  sol.cells = make_cell_map(InformationClass{InfoKind::full}, ensemble);
  sol.coeffs.assign(P * N * d, 0.0);

  double res_max = 0.0, res_sq = 0.0;
  std::vector<double> beta_row(d);
  Eigen::MatrixXd a_mat(d, d);
  Eigen::VectorXd beta(d), u(d);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t k = 0; k < N; ++k) {
      eval_budget_row(budget, ensemble, p, k, beta_row.data());
      const double* s = ensemble.node_values(p, k);
      for (std::size_t i = 0; i < d; ++i) {
        beta(static_cast<Eigen::Index>(i)) = beta_row[i];
        for (std::size_t j = 0; j < d; ++j) a_mat(i, j) = s[i] * cov(i, j) * s[j];
      }
      solve_point(a_mat, beta, u);
      Eigen::VectorXd f = u.cwiseProduct(a_mat * u) - beta;
      res_max = std::max(res_max, f.cwiseAbs().maxCoeff());
      res_sq += f.squaredNorm();
      for (std::size_t a = 0; a < d; ++a) sol.coeffs[(p * N + k) * d + a] = u(a);
    }

  sol.policy = Policy::raw(d, sol.coeffs);
  sol.residual_max = res_max;
  sol.residual_l2 = std::sqrt(res_sq / static_cast<double>(P * N));
  sol.objective = objective_value(sol.policy, ensemble, budget);
  sol.iterations = 1;
  sol.converged = res_max <= 1e-10;
  if (!sol.converged)
    throw convergence_error("solve_budget_pointwise: pointwise Newton residual above tolerance",
                            res_max);
  return sol;
}

BudgetSolution solve_budget_pointwise_local(const PathEnsemble& ensemble,
                                            const BudgetProcess& budget,
                                            const LocalCovariance& local_cov, const TimeGrid& grid) {
  if (!local_cov) throw invalid_argument_error("solve_budget_pointwise_local: missing covariance");
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const std::size_t dt_assets = budget.n_assets;  // traded leading assets
  if (dt_assets == 0 || dt_assets > d)
    throw invalid_argument_error("solve_budget_pointwise_local: bad traded asset count");

  BudgetSolution sol;
  sol.cells = make_cell_map(InformationClass{InfoKind::full}, ensemble);
  sol.coeffs.assign(P * N * d, 0.0);

  double res_max = 0.0, res_sq = 0.0;
  std::vector<double> beta_row(dt_assets);
  Eigen::MatrixXd cov(dt_assets, dt_assets), a_mat(dt_assets, dt_assets);
  Eigen::VectorXd beta(dt_assets), u(dt_assets);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t k = 0; k < N; ++k) {
      eval_budget_row(budget, ensemble, p, k, beta_row.data());
      const double* s = ensemble.node_values(p, k);
      local_cov(ensemble, p, k, cov);
      bool singular = false;
      for (std::size_t i = 0; i < dt_assets; ++i) {
        if (!(s[i] > 0.0) || !(cov(i, i) > 0.0)) singular = true;
        beta(static_cast<Eigen::Index>(i)) = beta_row[i];
        for (std::size_t j = 0; j < dt_assets; ++j) a_mat(i, j) = s[i] * cov(i, j) * s[j];
      }
      if (singular) continue;  // absorbed state, leave zero shares
      solve_point(a_mat, beta, u);
      Eigen::VectorXd f = u.cwiseProduct(a_mat * u) - beta;
      res_max = std::max(res_max, f.cwiseAbs().maxCoeff());
      res_sq += f.squaredNorm();
      for (std::size_t a = 0; a < dt_assets; ++a) sol.coeffs[(p * N + k) * d + a] = u(a);
    }

  sol.policy = Policy::raw(d, sol.coeffs);
  sol.residual_max = res_max;
  sol.residual_l2 = std::sqrt(res_sq / static_cast<double>(P * N));
  sol.iterations = 1;
  sol.converged = res_max <= 1e-10;
  if (!sol.converged)
    throw convergence_error("solve_budget_pointwise_local: Newton residual above tolerance",
                            res_max);
  return sol;
}

// ---------------------------------------------------------------------------
// Iterative class-restricted solve

namespace {

struct CellShared {
  CellMap cells;
  std::vector<double> coeffs;  // [cell*d + a]
};

Policy cell_policy(std::shared_ptr<CellShared> shared, const std::size_t d) {
  return Policy::raw_generated(
      d, [shared, d](const PathEnsemble& e, std::size_t p, std::size_t k, double* out) {
        const std::size_t m = shared->cells.cell(e, p, k);
        const double* row = shared->coeffs.data() + m * d;
        std::copy(row, row + d, out);
      });
}

// One sweep: accumulates cell averages of u .* c under the current
// coefficients.  centering: E[M_T] when gamma_mode is false, -gamma/2
// otherwise.  Returns the sample mean of M_T.
double accumulate_uc(const market::GbmParams& params, const PathEnsemble& ensemble,
                     const CellMap& cells, const std::vector<double>& coeffs, bool gamma_mode,
                     double gamma, std::vector<double>& uc_avg) {
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const Eigen::MatrixXd cov = params.instantaneous_covariance();
  const Eigen::VectorXd& drift = params.drift;
  const bool has_drift = drift.cwiseAbs().maxCoeff() != 0.0;

  // first pass: terminal gains mean
  double mean_mt = 0.0;
  if (has_drift) {
    for (std::size_t p = 0; p < P; ++p) {
      double g = 0.0;
      for (std::size_t k = 0; k < N; ++k) {
        const std::size_t m = cells.cell(ensemble, p, k);
        const double* u = coeffs.data() + m * d;
        const double* s0 = ensemble.node_values(p, k);
        const double* s1 = ensemble.node_values(p, k + 1);
        for (std::size_t a = 0; a < d; ++a) g += u[a] * (s1[a] - s0[a]);
      }
      mean_mt += g;
    }
    mean_mt /= static_cast<double>(P);
  }
  const double center = gamma_mode ? -0.5 * gamma : mean_mt;

  std::vector<double> sums(cells.n_cells * d, 0.0);
  std::vector<std::size_t> counts(cells.n_cells, 0);
  std::vector<double> su(d);
  for (std::size_t p = 0; p < P; ++p) {
    double mt = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const std::size_t m = cells.cell(ensemble, p, k);
      const double* u = coeffs.data() + m * d;
      const double* s0 = ensemble.node_values(p, k);
      for (std::size_t a = 0; a < d; ++a) su[a] = s0[a] * u[a];
      for (std::size_t a = 0; a < d; ++a) {
        double diff = 0.0;
        for (std::size_t aa = 0; aa < d; ++aa) diff += cov(a, aa) * su[aa];
        const double c = s0[a] * (drift(a) * (2.0 * mt - center) + diff);
        sums[m * d + a] += u[a] * c;
      }
      ++counts[m];
      const double* s1 = ensemble.node_values(p, k + 1);
      for (std::size_t a = 0; a < d; ++a) mt += u[a] * (s1[a] - s0[a]);
    }
  }
  uc_avg.assign(cells.n_cells * d, 0.0);
  for (std::size_t m = 0; m < cells.n_cells; ++m) {
    if (counts[m] == 0) continue;
    for (std::size_t a = 0; a < d; ++a)
      uc_avg[m * d + a] = sums[m * d + a] / static_cast<double>(counts[m]);
  }
  return mean_mt;
}

BudgetSolution solve_iterative_impl(const market::GbmParams& params, const PathEnsemble& ensemble,
                                    const BudgetProcess& budget, const InformationClass& info,
                                    const BudgetSolveOptions& opts, bool gamma_mode, double gamma,
                                    double* mean_mt_out) {
  params.validate();
  if (!params.non_degenerate())
    throw degenerate_market_error("solve_budget_iterative: singular instantaneous covariance");
  if (budget.n_assets != ensemble.n_assets)
    throw invalid_argument_error("solve_budget_iterative: budget/ensemble asset count mismatch");
  const std::size_t d = ensemble.n_assets;

  BudgetSolution sol;
  sol.cells = make_cell_map(info, ensemble);
  const std::vector<double> beta_bar = average_budget(budget, sol.cells, ensemble);
  const std::size_t n_cells = sol.cells.n_cells;

  // start: local proxy u = sqrt(beta / (S^2 sigma^2)) on cell averages
  std::vector<double>& theta = sol.coeffs;
  if (opts.start.size() == n_cells * d) {
    theta = opts.start;
    for (double t : theta)
      if (!(t > 0.0)) throw invalid_argument_error("solve_budget_iterative: start must be positive");
  } else {
    theta.assign(n_cells * d, 0.0);
    const Eigen::MatrixXd cov = params.instantaneous_covariance();
    std::vector<double> s2(n_cells * d, 0.0);
    std::vector<std::size_t> counts(n_cells, 0);
    for (std::size_t p = 0; p < ensemble.n_paths; ++p)
      for (std::size_t k = 0; k < ensemble.grid.n_steps; ++k) {
        const std::size_t m = sol.cells.cell(ensemble, p, k);
        const double* s = ensemble.node_values(p, k);
        for (std::size_t a = 0; a < d; ++a) s2[m * d + a] += s[a] * s[a];
        ++counts[m];
      }
    for (std::size_t m = 0; m < n_cells; ++m)
      for (std::size_t a = 0; a < d; ++a) {
        const double avg_s2 =
            counts[m] ? s2[m * d + a] / static_cast<double>(counts[m]) : 1.0;
        theta[m * d + a] = std::sqrt(beta_bar[m * d + a] / (std::max(avg_s2, 1e-300) * cov(a, a)));
      }
  }

  std::vector<double> uc_avg;
  double mean_mt = 0.0;
  double exponent = 1.0;
  double prev_res = std::numeric_limits<double>::infinity();
  std::vector<double> prev_theta;
  std::size_t it = 0;
  double res = std::numeric_limits<double>::infinity();
  for (; it < opts.max_iterations; ++it) {
    mean_mt = accumulate_uc(params, ensemble, sol.cells, theta, gamma_mode, gamma, uc_avg);
    res = 0.0;
    for (std::size_t i = 0; i < n_cells * d; ++i)
      res = std::max(res, std::fabs(uc_avg[i] - beta_bar[i]) / beta_bar[i]);
    if (res <= opts.tolerance) break;
    if (res > prev_res && !prev_theta.empty()) {
      // overshoot: revert and damp the multiplicative step
      theta = prev_theta;
      exponent *= 0.5;
      if (exponent < 1e-3) break;
      prev_res = std::numeric_limits<double>::infinity();
      continue;
    }
    prev_theta = theta;
    prev_res = res;
    exponent = std::min(1.0, exponent * 1.25);
    for (std::size_t i = 0; i < n_cells * d; ++i) {
      double ratio = uc_avg[i] > 0.0 ? beta_bar[i] / uc_avg[i] : 4.0;
      ratio = std::clamp(ratio, 0.25, 4.0);
      theta[i] *= std::pow(ratio, 0.5 * exponent);
    }
  }
  if (res > opts.tolerance) {
    mean_mt = accumulate_uc(params, ensemble, sol.cells, theta, gamma_mode, gamma, uc_avg);
    res = 0.0;
    for (std::size_t i = 0; i < n_cells * d; ++i)
      res = std::max(res, std::fabs(uc_avg[i] - beta_bar[i]) / beta_bar[i]);
  }

  double l2 = 0.0;
  for (std::size_t i = 0; i < n_cells * d; ++i) {
    const double diff = uc_avg[i] - beta_bar[i];
    l2 += diff * diff;
  }
  sol.residual_max = res;
  sol.residual_l2 = std::sqrt(l2 / static_cast<double>(n_cells * d));
  sol.iterations = it;
  sol.converged = res <= opts.tolerance;

  auto shared = std::make_shared<CellShared>(CellShared{sol.cells, theta});
  sol.policy = cell_policy(shared, d);
  sol.objective = objective_value(sol.policy, ensemble, budget);
  if (mean_mt_out) *mean_mt_out = mean_mt;
  if (!sol.converged && opts.throw_on_failure)
    throw convergence_error("solve_budget_iterative: residual above tolerance at iteration cap",
                            res);
  return sol;
}

}  // namespace

BudgetSolution solve_budget_iterative(const market::GbmParams& params, const PathEnsemble& ensemble,
                                      const BudgetProcess& budget, const InformationClass& info,
                                      const BudgetSolveOptions& opts) {
  return solve_iterative_impl(params, ensemble, budget, info, opts, false, 0.0, nullptr);
}

std::pair<double, double> budget_residual(const PolicyTable& policy,
                                          const contribution::ContributionProcess& contrib,
                                          const BudgetProcess& budget, const InformationClass& info,
                                          const PathEnsemble& ensemble) {
  if (policy.n_paths != contrib.n_paths || policy.n_steps != contrib.n_steps ||
      policy.n_assets != contrib.n_assets)
    throw invalid_argument_error("budget_residual: table shape mismatch");
  const std::size_t d = policy.n_assets;
  CellMap cells = make_cell_map(info, ensemble);
  const std::vector<double> beta_bar = average_budget(budget, cells, ensemble);

  std::vector<double> sums(cells.n_cells * d, 0.0);
  std::vector<std::size_t> counts(cells.n_cells, 0);
  for (std::size_t p = 0; p < policy.n_paths; ++p)
    for (std::size_t k = 0; k < policy.n_steps; ++k) {
      const std::size_t m = cells.cell(ensemble, p, k);
      for (std::size_t a = 0; a < d; ++a) sums[m * d + a] += policy.at(p, k, a) * contrib.c_at(p, k, a);
      ++counts[m];
    }
  double res_max = 0.0, l2 = 0.0;
  for (std::size_t m = 0; m < cells.n_cells; ++m) {
    if (counts[m] == 0) continue;
    for (std::size_t a = 0; a < d; ++a) {
      const double diff = sums[m * d + a] / static_cast<double>(counts[m]) - beta_bar[m * d + a];
      res_max = std::max(res_max, std::fabs(diff));
      l2 += diff * diff;
    }
  }
  return {res_max, std::sqrt(l2 / static_cast<double>(cells.n_cells * d))};
}

BudgetProcess project_budget(const BudgetProcess& budget, const InformationClass& from_class,
                             const InformationClass& to_class, const PathEnsemble& ensemble) {
  if (!to_class.coarser_or_equal(from_class))
    throw invalid_argument_error("project_budget: target class must be coarser than source");
  const std::size_t d = budget.n_assets;
  CellMap cells = make_cell_map(to_class, ensemble);
  std::vector<double> avg = average_budget(budget, cells, ensemble);

  switch (to_class.kind) {
    case InfoKind::constant:
      return BudgetProcess::constant(avg);
    case InfoKind::deterministic_time:
      return BudgetProcess::deterministic(d, avg);
    default: {
      const std::size_t P = ensemble.n_paths;
      const std::size_t N = ensemble.grid.n_steps;
      std::vector<double> table(P * N * d, 0.0);
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t k = 0; k < N; ++k) {
          const std::size_t m = cells.cell(ensemble, p, k);
          for (std::size_t a = 0; a < d; ++a) table[(p * N + k) * d + a] = avg[m * d + a];
        }
      return BudgetProcess::raw(d, std::move(table));
    }
  }
}

double auxiliary_objective(const Policy& policy, double gamma, const PathEnsemble& ensemble,
                           const BudgetProcess& budget, double x0) {
  (void)x0;
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const double dt = ensemble.grid.dt;
  std::vector<double> u(d), beta(d);
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    double g = 0.0, barrier = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      contribution::eval_policy_row(policy, ensemble, p, k, u.data());
      eval_budget_row(budget, ensemble, p, k, beta.data());
      for (std::size_t a = 0; a < d; ++a) {
        if (!(u[a] > 0.0))
          throw invalid_argument_error("auxiliary_objective: policy must be strictly positive");
        barrier -= beta[a] * std::log(u[a]) * dt;
      }
      const double* s0 = ensemble.node_values(p, k);
      const double* s1 = ensemble.node_values(p, k + 1);
      for (std::size_t a = 0; a < d; ++a) g += u[a] * (s1[a] - s0[a]);
    }
    total += barrier + gamma * g + g * g;
  }
  return total / static_cast<double>(P);
}

EmbeddingResult embedding_search(const market::GbmParams& params, const PathEnsemble& ensemble,
                                 const BudgetProcess& budget, const EmbeddingOptions& opts) {
  EmbeddingResult out;
  double gamma = 0.0;
  BudgetSolveOptions inner = opts.inner;
  inner.throw_on_failure = false;
  std::size_t outer = 0;
  for (; outer < opts.max_outer; ++outer) {
    double mean_mt = 0.0;
    out.solution =
        solve_iterative_impl(params, ensemble, budget, opts.info, inner, true, gamma, &mean_mt);
    inner.start = out.solution.coeffs;  // warm start the next inner solve
    const double target = -2.0 * mean_mt;
    const double next = gamma + opts.damping * (target - gamma);
    const double gap = std::fabs(target - gamma);
    gamma = next;
    if (gap <= opts.gamma_tolerance) {
      out.converged = true;
      ++outer;
      break;
    }
  }
  out.gamma = gamma;
  out.outer_iterations = outer;
  if (!out.converged)
    throw convergence_error("embedding_search: gamma fixed point did not converge",
                            out.solution.residual_max);
  if (!out.solution.converged)
    throw convergence_error("embedding_search: inner solve did not converge",
                            out.solution.residual_max);
  return out;
}

double kl_divergence(const BudgetProcess& budget, const Policy& policy,
                     const PathEnsemble& ensemble) {
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const std::size_t dt_assets = budget.n_assets;  // only the traded assets enter
  if (dt_assets > d)
    throw invalid_argument_error("kl_divergence: budget has more assets than the ensemble");
  const double dt = ensemble.grid.dt;
  std::vector<double> u(d), beta(d);
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t k = 0; k < N; ++k) {
      contribution::eval_policy_row(policy, ensemble, p, k, u.data());
      eval_budget_row(budget, ensemble, p, k, beta.data());
      for (std::size_t a = 0; a < dt_assets; ++a) {
        if (!(u[a] > 0.0))
          throw invalid_argument_error("kl_divergence: policy must be strictly positive");
        total += beta[a] * (std::log(beta[a]) - std::log(u[a])) * dt;
      }
    }
  return total / static_cast<double>(P);
}

}  // namespace riskflow::budgeting
