#pragma once

// Shared data model: time grids, deterministic counter-based random streams,
// path ensembles, policies and basic statistical estimators.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskflow {

// ---------------------------------------------------------------------------
// Errors

struct invalid_argument_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct convergence_error : std::runtime_error {
  double residual;
  explicit convergence_error(const std::string& msg, double res)
      : std::runtime_error(msg), residual(res) {}
};

struct degenerate_market_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct invalid_mask_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct inconsistent_portfolio_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct unsupported_model_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parallel helper.  Workers write to disjoint slots only; any reduction is
// done sequentially afterwards so results do not depend on the thread count.
// Worker count is capped by the RISKFLOW_THREADS environment variable.

std::size_t worker_count();
void parallel_for(std::size_t n, const std::function<void(std::size_t begin, std::size_t end)>& body);

// ---------------------------------------------------------------------------
// Time grid

struct TimeGrid {
  double horizon = 0.0;     // T, years
  std::size_t n_steps = 0;  // N
  double dt = 0.0;          // T/N

  // t_k = k*T/N, so node(n_steps) == horizon exactly for k == N.
  double node(std::size_t k) const {
    return k == n_steps ? horizon : static_cast<double>(k) * horizon / static_cast<double>(n_steps);
  }
};

TimeGrid make_time_grid(double horizon, std::size_t n_steps);

// ---------------------------------------------------------------------------
// Counter-based Gaussian streams.  The draw for (seed, path, step, driver)
// is a pure function of its key, so any path can be regenerated
// independently and in parallel.

double gaussian_draw(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t driver);

// Table of N(0, dt) increments, row-major (step, driver).
std::vector<double> gaussian_increments(std::uint64_t seed, std::uint64_t path_index,
                                        std::size_t n_steps, std::size_t n_drivers, double dt);

// ---------------------------------------------------------------------------
// Estimates

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

Estimate mean_and_stderr(const std::vector<double>& samples);

// Sample variance of the inputs with a delta-method standard error
// (uses the central fourth moment).
Estimate variance_and_stderr(const std::vector<double>& samples);

// ---------------------------------------------------------------------------
// Path ensemble: asset values on a uniform grid across Monte Carlo paths,
// with the Brownian increments that generated them retained.

struct PathEnsemble {
  TimeGrid grid;
  std::size_t n_paths = 0;
  std::size_t n_assets = 0;
  std::size_t n_drivers = 0;
  // values[(p*(N+1)+k)*d + a]: asset a at node k on path p
  std::vector<double> values;
  // increments[(p*N+k)*m + j]: Brownian increment of driver j over step k
  std::vector<double> increments;

  double value(std::size_t p, std::size_t k, std::size_t a) const {
    return values[(p * (grid.n_steps + 1) + k) * n_assets + a];
  }
  double increment(std::size_t p, std::size_t k, std::size_t j) const {
    return increments[(p * grid.n_steps + k) * n_drivers + j];
  }
  const double* node_values(std::size_t p, std::size_t k) const {
    return values.data() + (p * (grid.n_steps + 1) + k) * n_assets;
  }
};

void export_ensemble_csv(const PathEnsemble& ensemble, const std::string& path);
PathEnsemble import_ensemble_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Policies.  The share applied on [t_k, t_{k+1}) depends only on information
// at t_k; feedback policies are evaluated on node-k state, raw tables are
// accepted as given (solvers construct them predictably).

enum class PolicyKind { constant, deterministic, feedback, raw };

// Evaluates per-asset shares from (t, node state).
using FeedbackRule = std::function<void(double t, const double* state, double* shares_out)>;

struct PathEnsemble;

// Evaluates shares from path data; a predictable generator reads nodes <= step only.
using RawGenerator =
    std::function<void(const PathEnsemble&, std::size_t path, std::size_t step, double* shares_out)>;

struct Policy {
  PolicyKind kind = PolicyKind::constant;
  std::size_t n_assets = 0;
  std::vector<double> data;  // constant: d; deterministic: N*d; raw: n_paths*N*d
  FeedbackRule rule;         // feedback only
  RawGenerator gen;          // optional provenance for raw tables
  double cap = 1e6;          // ||u||_inf bound, always enforced

  static Policy constant(std::vector<double> shares);
  static Policy deterministic(std::size_t n_assets, std::vector<double> per_step);
  static Policy feedback(std::size_t n_assets, FeedbackRule rule);
  static Policy raw(std::size_t n_assets, std::vector<double> table);
  static Policy raw_generated(std::size_t n_assets, RawGenerator gen);
};

// Policy evaluated on an ensemble: shares per (path, step, asset), clamped
// to the cap.  cap_hit_fraction reports how often the clamp was active.
struct PolicyTable {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  std::size_t n_assets = 0;
  std::vector<double> shares;  // [(p*N+k)*d + a]
  double cap_hit_fraction = 0.0;

  double at(std::size_t p, std::size_t k, std::size_t a) const {
    return shares[(p * n_steps + k) * n_assets + a];
  }
  double& at(std::size_t p, std::size_t k, std::size_t a) {
    return shares[(p * n_steps + k) * n_assets + a];
  }
  double max_abs() const;
};

PolicyTable materialize(const Policy& policy, const PathEnsemble& ensemble);

// Left-endpoint measurability audit for feedback rules: re-evaluates the
// rule on an ensemble whose values after node k are scrambled and checks
// the step-k shares are unchanged.
bool audit_predictability(const Policy& policy, const PathEnsemble& ensemble);

}  // namespace riskflow
