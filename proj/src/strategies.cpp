#include "riskflow/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace riskflow::strategies {

// ---------------------------------------------------------------------------
// Volatility-managed

void VolManagedSpec::validate() const {
  if (!(c_hat > 0.0)) throw invalid_argument_error("VolManagedSpec: c_hat must be > 0");
  if (!(u_max > 0.0)) throw invalid_argument_error("VolManagedSpec: u_max must be > 0");
}

Policy vol_managed_policy(const VolManagedSpec& spec, const PathEnsemble& ensemble) {
  spec.validate();
  if (ensemble.n_assets != 2)
    throw invalid_argument_error("vol_managed_policy: ensemble must carry (S, sigma)");
  const double c_hat = spec.c_hat;
  Policy p = Policy::feedback(2, [c_hat](double, const double* state, double* out) {
    const double vol = state[1];
    out[0] = c_hat / (vol * vol);
    out[1] = 0.0;
  });
  p.cap = spec.u_max;
  return p;
}

budgeting::BudgetProcess vol_managed_budget(const VolManagedSpec& spec) {
  spec.validate();
  const double c_hat = spec.c_hat;
  return budgeting::BudgetProcess::feedback(1, [c_hat](double, const double* state, double* out) {
    const double ratio = c_hat * state[0] / state[1];
    out[0] = ratio * ratio;
  });
}

LongTermCheck vol_managed_long_term(const PathEnsemble& ensemble, const VolManagedSpec& spec,
                                    const std::vector<double>& theta) {
  spec.validate();
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  if (theta.size() != N)
    throw invalid_argument_error("vol_managed_long_term: theta must have one entry per step");
  const double dt = ensemble.grid.dt;
  const Policy policy = vol_managed_policy(spec, ensemble);

  const std::size_t checkpoints[3] = {N / 4, N / 2, N};
  LongTermCheck out;
  out.times.assign(3, 0.0);
  out.lhs.assign(3, 0.0);
  out.rhs.assign(3, 0.0);
  out.gap.assign(3, 0.0);
  for (int j = 0; j < 3; ++j) out.times[j] = ensemble.grid.node(checkpoints[j]);

  std::vector<double> u(2);
  for (std::size_t p = 0; p < P; ++p) {
    double x = 0.0, integral = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      contribution::eval_policy_row(policy, ensemble, p, k, u.data());
      const double s = ensemble.value(p, k, 0);
      const double vol = ensemble.value(p, k, 1);
      integral += (spec.c_hat * s / vol) * theta[k] * dt;
      x += u[0] * (ensemble.value(p, k + 1, 0) - s);
      for (int j = 0; j < 3; ++j)
        if (k + 1 == checkpoints[j]) {
          const double t = out.times[j];
          out.lhs[j] += x / t;
          out.rhs[j] += integral / t;
          out.gap[j] += std::fabs(x - integral) / t;
        }
    }
  }
  for (int j = 0; j < 3; ++j) {
    out.lhs[j] /= static_cast<double>(P);
    out.rhs[j] /= static_cast<double>(P);
    out.gap[j] /= static_cast<double>(P);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SABR

contribution::ContributionProcess sabr_marginal(const Policy& policy,
                                                const market::SabrEnsemble& ensemble,
                                                const market::SabrParams& params) {
  params.validate();
  const PathEnsemble& e = ensemble.paths;
  const std::size_t P = e.n_paths;
  const std::size_t N = e.grid.n_steps;
  if (policy.n_assets != 2)
    throw invalid_argument_error("sabr_marginal: policy must cover (F, sigma)");

  contribution::ContributionProcess proc;
  proc.n_paths = P;
  proc.n_steps = N;
  proc.n_assets = 2;
  proc.c.assign(P * N * 2, 0.0);
  proc.k.assign(P * N * 2, 0.0);

  parallel_for(P, [&](std::size_t b, std::size_t eend) {
    std::vector<double> u(2);
    for (std::size_t p = b; p < eend; ++p)
      for (std::size_t k = 0; k < N; ++k) {
        contribution::eval_policy_row(policy, e, p, k, u.data());
        const double f = e.value(p, k, 0);
        const double vol = e.value(p, k, 1);
        const double c0 = u[0] * vol * vol * std::pow(f, 2.0 * params.beta_exp);
        proc.c[(p * N + k) * 2 + 0] = c0;
        proc.k[(p * N + k) * 2 + 0] = u[0] * c0;
      }
  });
  return proc;
}

Policy sabr_policy(SabrPolicyCase c, double lambda, const market::SabrParams& params,
                   const market::SabrEnsemble& ensemble) {
  params.validate();
  if (!(lambda > 0.0)) throw invalid_argument_error("sabr_policy: lambda must be > 0");
  if (params.rho != 0.0) throw invalid_argument_error("sabr_policy: requires rho = 0");
  const PathEnsemble& e = ensemble.paths;
  const std::size_t P = e.n_paths;
  const std::size_t N = e.grid.n_steps;
  const double rate = std::sqrt(lambda / e.grid.horizon);
  const double bexp = params.beta_exp;

  switch (c) {
    case SabrPolicyCase::parity: {
      return Policy::feedback(2, [rate, bexp](double, const double* state, double* out) {
        const double f = state[0];
        const double vol = state[1];
        out[0] = f > 0.0 ? rate / (vol * std::pow(f, bexp)) : 0.0;
        out[1] = 0.0;
      });
    }
    case SabrPolicyCase::h_projection: {
      // Fbar_t = E[F_t | B1 path] by equal-probability binning on the
      // running B1 value at each node.
      constexpr std::size_t n_bins = 64;
      std::vector<double> cum(P, 0.0);
      std::vector<double> table(P * N * 2, 0.0);
      std::vector<double> column(P), sorted(P);
      std::vector<double> bin_sum(n_bins), bin_cnt(n_bins);
      std::vector<std::size_t> bin_of(P);
      for (std::size_t k = 0; k < N; ++k) {
        for (std::size_t p = 0; p < P; ++p) column[p] = cum[p];
        sorted = column;
        std::sort(sorted.begin(), sorted.end());
        std::fill(bin_sum.begin(), bin_sum.end(), 0.0);
        std::fill(bin_cnt.begin(), bin_cnt.end(), 0.0);
        double edges[n_bins - 1];
        for (std::size_t b = 1; b < n_bins; ++b)
          edges[b - 1] = sorted[std::min(P - 1, b * P / n_bins)];
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t bin = static_cast<std::size_t>(
              std::upper_bound(edges, edges + n_bins - 1, column[p]) - edges);
          bin_of[p] = bin;
          bin_sum[bin] += e.value(p, k, 0);
          bin_cnt[bin] += 1.0;
        }
        for (std::size_t p = 0; p < P; ++p) {
          const double fbar = bin_cnt[bin_of[p]] > 0.0 ? bin_sum[bin_of[p]] / bin_cnt[bin_of[p]]
                                                       : params.f0;
          table[(p * N + k) * 2 + 0] =
              rate / (params.s * std::pow(std::max(fbar, 1e-300), bexp));
          cum[p] += e.increment(p, k, 0);
        }
      }
      return Policy::raw(2, std::move(table));
    }
    case SabrPolicyCase::deterministic: {
      std::vector<double> table(N * 2, 0.0);
      for (std::size_t k = 0; k < N; ++k) {
        double mean = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
          const double f = e.value(p, k, 0);
          const double vol = e.value(p, k, 1);
          mean += vol * vol * std::pow(f, 2.0 * bexp);
        }
        mean /= static_cast<double>(P);
        table[k * 2 + 0] = rate / std::sqrt(mean);
      }
      return Policy::deterministic(2, std::move(table));
    }
    case SabrPolicyCase::single_period: {
      std::vector<double> terminal(P);
      for (std::size_t p = 0; p < P; ++p) terminal[p] = e.value(p, N, 0);
      const double var = variance_and_stderr(terminal).mean;
      return Policy::constant({std::sqrt(lambda / var), 0.0});
    }
  }
  throw invalid_argument_error("sabr_policy: unknown case");
}

double pointwise_dispersion(const contribution::ContributionProcess& contrib, std::size_t asset) {
  const std::size_t n = contrib.n_paths * contrib.n_steps;
  if (n < 2) throw invalid_argument_error("pointwise_dispersion: need at least 2 points");
  double mean = 0.0;
  for (std::size_t p = 0; p < contrib.n_paths; ++p)
    for (std::size_t k = 0; k < contrib.n_steps; ++k) mean += contrib.k_at(p, k, asset);
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t p = 0; p < contrib.n_paths; ++p)
    for (std::size_t k = 0; k < contrib.n_steps; ++k) {
      const double d = contrib.k_at(p, k, asset) - mean;
      ss += d * d;
    }
  return ss / static_cast<double>(n - 1);
}

// ---------------------------------------------------------------------------
// Mean-variance

void MvParams::validate() const {
  if (!(sigma_sq > 0.0)) throw invalid_argument_error("MvParams: sigma_sq must be > 0");
  if (!(tau > 0.0)) throw invalid_argument_error("MvParams: tau must be > 0");
  if (!(x0 > 0.0)) throw invalid_argument_error("MvParams: x0 must be > 0");
  if (!(horizon > 0.0)) throw invalid_argument_error("MvParams: horizon must be > 0");
}

double MvParams::target(double t) const {
  const double g =
      (2.0 * tau * x0 * std::exp(r * horizon) + std::exp(theta_sq() * horizon)) / (2.0 * tau);
  return g * std::exp(-r * (horizon - t));
}

std::pair<double, double> mv_policy(const MvParams& params, double t, double x) {
  params.validate();
  const double alpha = (params.b - params.r) / params.sigma_sq;
  const double m1 = alpha * (params.target(t) - x);
  return {x - m1, m1};
}

double mv_expected_terminal(const MvParams& params) {
  params.validate();
  return params.x0 * std::exp(params.r * params.horizon) +
         (std::exp(params.theta_sq() * params.horizon) - 1.0) / (2.0 * params.tau);
}

MvContribution mv_risk_contribution(const MvParams& params, double t, double x) {
  const auto [m0, m1] = mv_policy(params, t, x);
  const double kappa = mv_expected_terminal(params) + params.x0;
  MvContribution out;
  out.k0 = params.r * m0 * (2.0 * x - kappa);
  out.k1 = 2.0 * params.b * m1 * x + params.sigma_sq * m1 * m1 - params.b * m1 * kappa;
  out.k0_x2 = 2.0 * params.r * (params.sigma_sq + params.b - params.r) / params.sigma_sq;
  out.k1_x2 = (params.r * params.r - params.b * params.b) / params.sigma_sq;
  return out;
}

MvSimulation mv_simulate(const MvParams& params, const TimeGrid& grid, std::size_t n_paths,
                         std::uint64_t seed) {
  params.validate();
  const std::size_t N = grid.n_steps;
  const double theta = (params.b - params.r) / std::sqrt(params.sigma_sq);
  const double theta_sq = theta * theta;
  // Y = D - X follows dY = (r - theta^2) Y dt - theta Y dW, a GBM
  const double y0 = params.target(0.0) - params.x0;
  const double log_drift = (params.r - 1.5 * theta_sq) * grid.dt;
  const double root_dt = std::sqrt(grid.dt);

  MvSimulation sim;
  sim.wealth.assign(n_paths * (N + 1), 0.0);
  parallel_for(n_paths, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      double y = y0;
      sim.wealth[p * (N + 1)] = params.x0;
      for (std::size_t k = 0; k < N; ++k) {
        const double dw = root_dt * gaussian_draw(seed, p, k, 0);
        y *= std::exp(log_drift - theta * dw);
        sim.wealth[p * (N + 1) + k + 1] = params.target(grid.node(k + 1)) - y;
      }
    }
  });
  std::vector<double> terminal(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) terminal[p] = sim.wealth[p * (N + 1) + N];
  sim.terminal_mean = mean_and_stderr(terminal);
  sim.terminal_variance = variance_and_stderr(terminal);
  return sim;
}

namespace {

Figure2Entry make_entry(const MvParams& params, double t, const std::vector<double>& x_values,
                        std::string sweep, double value) {
  Figure2Entry entry;
  entry.sweep = std::move(sweep);
  entry.param_value = value;
  entry.x = x_values;
  entry.k0.reserve(x_values.size());
  entry.k1.reserve(x_values.size());
  for (double x : x_values) {
    const MvContribution k = mv_risk_contribution(params, t, x);
    entry.k0.push_back(k.k0);
    entry.k1.push_back(k.k1);
    entry.k0_x2 = k.k0_x2;
    entry.k1_x2 = k.k1_x2;
  }
  // quadratic fit of K1 from three exact evaluations
  const double c = mv_risk_contribution(params, t, 0.0).k1;
  const double kp = mv_risk_contribution(params, t, 1.0).k1;
  const double km = mv_risk_contribution(params, t, -1.0).k1;
  const double a = 0.5 * (kp + km) - c;
  const double b = 0.5 * (kp - km);
  const double disc = b * b - 4.0 * a * c;
  if (a != 0.0 && disc >= 0.0) {
    const double rt = std::sqrt(disc);
    entry.k1_root_lo = std::min((-b - rt) / (2.0 * a), (-b + rt) / (2.0 * a));
    entry.k1_root_hi = std::max((-b - rt) / (2.0 * a), (-b + rt) / (2.0 * a));
  } else {
    entry.k1_root_lo = std::numeric_limits<double>::quiet_NaN();
    entry.k1_root_hi = std::numeric_limits<double>::quiet_NaN();
  }
  return entry;
}

}  // namespace

std::vector<Figure2Entry> figure2_table(const MvParams& params, double t,
                                        const std::vector<double>& x_values,
                                        const std::vector<double>& x0_sweep,
                                        const std::vector<double>& tau_sweep) {
  params.validate();
  std::vector<Figure2Entry> out;
  out.push_back(make_entry(params, t, x_values, "baseline", 0.0));
  for (double x0 : x0_sweep) {
    MvParams p = params;
    p.x0 = x0;
    out.push_back(make_entry(p, t, x_values, "x0", x0));
  }
  for (double tau : tau_sweep) {
    MvParams p = params;
    p.tau = tau;
    out.push_back(make_entry(p, t, x_values, "tau", tau));
  }
  return out;
}

}  // namespace riskflow::strategies
