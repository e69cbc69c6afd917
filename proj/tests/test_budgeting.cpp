#include <doctest.h>

#include <cmath>

#include "riskflow/budgeting.hpp"
#include "riskflow/contribution.hpp"
#include "riskflow/core.hpp"
#include "riskflow/market.hpp"

using namespace riskflow;
using namespace riskflow::budgeting;

namespace {

market::GbmParams zero_drift(double sigma) {
  market::GbmParams params;
  params.s0 = Eigen::VectorXd::Constant(1, 1.0);
  params.drift = Eigen::VectorXd::Zero(1);
  params.sigma = Eigen::MatrixXd::Constant(1, 1, sigma);
  return params;
}

}  // namespace

TEST_CASE("budget rows must be strictly positive") {
  market::GbmParams params = zero_drift(0.2);
  PathEnsemble e = market::simulate_gbm(params, make_time_grid(1.0, 4), 8, 31);
  BudgetProcess bad = BudgetProcess::constant({0.0});
  double out = 0.0;
  CHECK_THROWS_AS(eval_budget_row(bad, e, 0, 0, &out), invalid_argument_error);
  BudgetProcess good = BudgetProcess::constant({0.5});
  eval_budget_row(good, e, 0, 0, &out);
  CHECK(out == 0.5);
}

TEST_CASE("information classes are nested") {
  InformationClass constant;
  InformationClass det;
  det.kind = InfoKind::deterministic_time;
  InformationClass fb;
  fb.kind = InfoKind::feedback;
  InformationClass full;
  full.kind = InfoKind::full;
  CHECK(constant.coarser_or_equal(det));
  CHECK(det.coarser_or_equal(fb));
  CHECK(fb.coarser_or_equal(full));
  CHECK_FALSE(full.coarser_or_equal(constant));
  CHECK(det.coarser_or_equal(det));
}

TEST_CASE("feedback cells are equal-probability bins") {
  market::GbmParams params = zero_drift(0.3);
  PathEnsemble e = market::simulate_gbm(params, make_time_grid(1.0, 8), 4096, 32);
  InformationClass fb;
  fb.kind = InfoKind::feedback;
  fb.n_bins = 8;
  CellMap cells = make_cell_map(fb, e);
  CHECK(cells.n_cells == 8 * 8);
  // node 0 is degenerate (every path shares S_0); check the later nodes
  std::vector<std::size_t> counts(cells.n_cells, 0);
  for (std::size_t p = 0; p < e.n_paths; ++p)
    for (std::size_t k = 1; k < 8; ++k) ++counts[cells.cell(e, p, k)];
  for (std::size_t m = 0; m < cells.n_cells; ++m) {
    if (counts[m] == 0) continue;
    CHECK(counts[m] >= 4096 / 8 - 2);
    CHECK(counts[m] <= 4096 / 8 + 2);
  }
}

TEST_CASE("pointwise solve recovers the scalar closed forms") {
  market::GbmParams params = zero_drift(0.25);
  const TimeGrid grid = make_time_grid(1.0, 16);
  PathEnsemble e = market::simulate_gbm(params, grid, 1024, 33);

  SUBCASE("lambda over T budget") {
    const double lambda = 0.02;
    BudgetProcess budget = BudgetProcess::constant({lambda / grid.horizon});
    BudgetSolution sol = solve_budget_pointwise(params, e, budget, grid);
    CHECK(sol.converged);
    CHECK(sol.residual_max <= 1e-10);
    for (std::size_t p = 0; p < e.n_paths; ++p)
      for (std::size_t k = 0; k < 16; ++k) {
        const double s = e.value(p, k, 0);
        const double expected = std::sqrt(lambda / grid.horizon) / (0.25 * s);
        CHECK(sol.coeffs[p * 16 + k] == doctest::Approx(expected).epsilon(1e-8));
      }
  }

  SUBCASE("price-regularized budget gives a constant policy") {
    const double c_hat = 0.05;
    BudgetProcess budget = BudgetProcess::feedback(1, [](double, const double* s, double* out) {
      out[0] = (0.05 * s[0] / 0.25) * (0.05 * s[0] / 0.25);
    });
    BudgetSolution sol = solve_budget_pointwise(params, e, budget, grid);
    for (std::size_t i = 0; i < sol.coeffs.size(); ++i)
      CHECK(sol.coeffs[i] == doctest::Approx(c_hat / (0.25 * 0.25)).epsilon(1e-8));
  }

  SUBCASE("drift is rejected") {
    market::GbmParams with_drift = zero_drift(0.25);
    with_drift.drift(0) = 0.05;
    BudgetProcess budget = BudgetProcess::constant({0.02});
    CHECK_THROWS_AS(solve_budget_pointwise(with_drift, e, budget, grid), invalid_argument_error);
  }
}

TEST_CASE("pointwise solve decouples for diagonal covariance") {
  market::GbmParams params;
  params.s0 = Eigen::VectorXd::Constant(2, 1.0);
  params.drift = Eigen::VectorXd::Zero(2);
  params.sigma = Eigen::MatrixXd::Zero(2, 2);
  params.sigma(0, 0) = 0.2;
  params.sigma(1, 1) = 0.4;
  const TimeGrid grid = make_time_grid(1.0, 8);
  PathEnsemble e = market::simulate_gbm(params, grid, 256, 34);
  BudgetProcess budget = BudgetProcess::constant({0.01, 0.03});
  BudgetSolution sol = solve_budget_pointwise(params, e, budget, grid);
  for (std::size_t p = 0; p < e.n_paths; ++p)
    for (std::size_t k = 0; k < 8; ++k) {
      const double s0 = e.value(p, k, 0), s1 = e.value(p, k, 1);
      CHECK(sol.coeffs[(p * 8 + k) * 2 + 0] ==
            doctest::Approx(std::sqrt(0.01) / (0.2 * s0)).epsilon(1e-8));
      CHECK(sol.coeffs[(p * 8 + k) * 2 + 1] ==
            doctest::Approx(std::sqrt(0.03) / (0.4 * s1)).epsilon(1e-8));
    }
}

TEST_CASE("iterative solver agrees with the pointwise solver at zero drift") {
  market::GbmParams params = zero_drift(0.25);
  const TimeGrid grid = make_time_grid(1.0, 16);
  PathEnsemble e = market::simulate_gbm(params, grid, 2048, 35);
  BudgetProcess budget = BudgetProcess::constant({0.02});

  BudgetSolution pointwise = solve_budget_pointwise(params, e, budget, grid);
  InformationClass full;
  full.kind = InfoKind::full;
  BudgetSolution iterative = solve_budget_iterative(params, e, budget, full);
  CHECK(iterative.converged);
  double worst = 0.0;
  for (std::size_t i = 0; i < pointwise.coeffs.size(); ++i)
    worst = std::max(worst,
                     std::fabs(iterative.coeffs[i] - pointwise.coeffs[i]) / pointwise.coeffs[i]);
  CHECK(worst <= 1e-6);
}

TEST_CASE("constant-class solution matches the single-period formula") {
  market::GbmParams params = zero_drift(0.25);
  const TimeGrid grid = make_time_grid(1.0, 32);
  PathEnsemble e = market::simulate_gbm(params, grid, 20000, 36);
  const double lambda = 0.02;
  BudgetProcess budget = BudgetProcess::constant({lambda / grid.horizon});
  InformationClass constant;

  BudgetSolution sol = solve_budget_iterative(params, e, budget, constant);
  CHECK(sol.converged);
  CHECK(sol.coeffs.size() == 1);
  const double analytic = std::sqrt(lambda / (std::exp(0.25 * 0.25) - 1.0));
  CHECK(sol.coeffs[0] == doctest::Approx(analytic).epsilon(0.02));
}

TEST_CASE("zero-drift scale law and start-point uniqueness") {
  market::GbmParams params = zero_drift(0.2);
  const TimeGrid grid = make_time_grid(1.0, 8);
  PathEnsemble e = market::simulate_gbm(params, grid, 2048, 37);
  InformationClass det;
  det.kind = InfoKind::deterministic_time;
  BudgetProcess budget = BudgetProcess::constant({0.01});
  BudgetProcess scaled = BudgetProcess::constant({0.04});

  BudgetSolution base = solve_budget_iterative(params, e, budget, det);
  BudgetSolution four = solve_budget_iterative(params, e, scaled, det);
  for (std::size_t i = 0; i < base.coeffs.size(); ++i)
    CHECK(four.coeffs[i] == doctest::Approx(2.0 * base.coeffs[i]).epsilon(1e-6));

  BudgetSolveOptions other_start;
  other_start.start.assign(base.coeffs.size(), 1.0);
  BudgetSolution restart = solve_budget_iterative(params, e, budget, det, other_start);
  for (std::size_t i = 0; i < base.coeffs.size(); ++i)
    CHECK(restart.coeffs[i] == doctest::Approx(base.coeffs[i]).epsilon(1e-6));
}

TEST_CASE("starved iteration cap raises a convergence error") {
  market::GbmParams params = zero_drift(0.2);
  const TimeGrid grid = make_time_grid(1.0, 8);
  PathEnsemble e = market::simulate_gbm(params, grid, 512, 38);
  BudgetProcess budget = BudgetProcess::constant({0.01});
  InformationClass det;
  det.kind = InfoKind::deterministic_time;
  BudgetSolveOptions starved;
  starved.max_iterations = 1;
  starved.start.assign(8, 100.0);  // far from the solution
  CHECK_THROWS_AS(solve_budget_iterative(params, e, budget, det, starved), convergence_error);
  starved.throw_on_failure = false;
  BudgetSolution sol = solve_budget_iterative(params, e, budget, det, starved);
  CHECK_FALSE(sol.converged);
}

TEST_CASE("budget projection") {
  market::GbmParams params = zero_drift(0.3);
  const TimeGrid grid = make_time_grid(1.0, 8);
  PathEnsemble e = market::simulate_gbm(params, grid, 4096, 39);

  SUBCASE("projection to the constant class is the full average") {
    std::vector<double> table(8);
    double integral = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      table[k] = 0.01 * static_cast<double>(k + 1);
      integral += table[k] * grid.dt;
    }
    BudgetProcess det = BudgetProcess::deterministic(1, table);
    InformationClass det_class;
    det_class.kind = InfoKind::deterministic_time;
    InformationClass const_class;
    BudgetProcess projected = project_budget(det, det_class, const_class, e);
    CHECK(projected.kind == PolicyKind::constant);
    CHECK(projected.data[0] == doctest::Approx(integral / grid.horizon).epsilon(1e-12));
  }

  SUBCASE("projection to the same class is the identity") {
    std::vector<double> table(8);
    for (std::size_t k = 0; k < 8; ++k) table[k] = 0.02 + 0.001 * static_cast<double>(k);
    BudgetProcess det = BudgetProcess::deterministic(1, table);
    InformationClass det_class;
    det_class.kind = InfoKind::deterministic_time;
    BudgetProcess same = project_budget(det, det_class, det_class, e);
    for (std::size_t k = 0; k < 8; ++k)
      CHECK(same.data[k] == doctest::Approx(table[k]).epsilon(1e-12));
  }

  SUBCASE("classes must be nested") {
    BudgetProcess budget = BudgetProcess::constant({0.01});
    InformationClass full;
    full.kind = InfoKind::full;
    InformationClass det_class;
    det_class.kind = InfoKind::deterministic_time;
    CHECK_THROWS_AS(project_budget(budget, det_class, full, e), invalid_argument_error);
  }
}

TEST_CASE("auxiliary objective is affine in gamma with slope E[M_T]") {
  market::GbmParams params = zero_drift(0.2);
  params.drift(0) = 0.05;
  const TimeGrid grid = make_time_grid(1.0, 16);
  PathEnsemble e = market::simulate_gbm(params, grid, 4096, 40);
  Policy u = Policy::constant({1.0});
  BudgetProcess budget = BudgetProcess::constant({0.01});

  Estimate mt = mean_and_stderr(contribution::terminal_gains(u, e));
  const double j0 = auxiliary_objective(u, 0.0, e, budget, 0.0);
  const double j1 = auxiliary_objective(u, 1.0, e, budget, 0.0);
  const double j2 = auxiliary_objective(u, 2.0, e, budget, 0.0);
  CHECK(j1 - j0 == doctest::Approx(mt.mean).epsilon(1e-10));
  CHECK(j2 - j1 == doctest::Approx(mt.mean).epsilon(1e-10));
}

TEST_CASE("embedding at zero drift has gamma near zero") {
  market::GbmParams params = zero_drift(0.2);
  const TimeGrid grid = make_time_grid(1.0, 8);
  PathEnsemble e = market::simulate_gbm(params, grid, 4096, 41);
  BudgetProcess budget = BudgetProcess::constant({0.01});
  EmbeddingOptions opts;
  opts.info.kind = InfoKind::constant;
  EmbeddingResult res = embedding_search(params, e, budget, opts);
  CHECK(res.converged);
  Estimate mt = mean_and_stderr(contribution::terminal_gains(res.solution.policy, e));
  CHECK(std::fabs(res.gamma) <= 6.0 * std::fabs(mt.stderr_) + 1e-6);
}

TEST_CASE("kl divergence vanishes when the policy equals the budget") {
  market::GbmParams params = zero_drift(0.2);
  PathEnsemble e = market::simulate_gbm(params, make_time_grid(1.0, 8), 256, 42);
  BudgetProcess budget = BudgetProcess::constant({0.7});
  Policy matching = Policy::constant({0.7});
  CHECK(std::fabs(kl_divergence(budget, matching, e)) <= 1e-12);

  Policy off = Policy::constant({1.4});
  CHECK(kl_divergence(budget, off, e) != 0.0);
}
