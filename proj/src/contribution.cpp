#include "riskflow/contribution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace riskflow::contribution {

namespace {

void check_shapes(const Policy& policy, const PathEnsemble& ensemble) {
  if (policy.n_assets != ensemble.n_assets)
    throw invalid_argument_error("policy/ensemble asset count mismatch");
  if (ensemble.n_paths < 2) throw invalid_argument_error("ensemble needs at least 2 paths");
}

inline void clamp_row(double* row, std::size_t d, double cap) {
  for (std::size_t a = 0; a < d; ++a) row[a] = std::clamp(row[a], -cap, cap);
}

}  // namespace

void eval_policy_row(const Policy& policy, const PathEnsemble& ensemble, std::size_t path,
                     std::size_t step, double* out) {
  const std::size_t d = policy.n_assets;
  switch (policy.kind) {
    case PolicyKind::constant:
      if (policy.data.size() != d) throw invalid_argument_error("bad constant policy");
      std::copy(policy.data.begin(), policy.data.end(), out);
      break;
    case PolicyKind::deterministic:
      if (policy.data.size() != ensemble.grid.n_steps * d)
        throw invalid_argument_error("deterministic policy shape mismatch");
      std::copy(policy.data.begin() + step * d, policy.data.begin() + (step + 1) * d, out);
      break;
    case PolicyKind::feedback:
      if (!policy.rule) throw invalid_argument_error("feedback policy without rule");
      policy.rule(ensemble.grid.node(step), ensemble.node_values(path, step), out);
      break;
    case PolicyKind::raw:
      if (policy.gen) {
        policy.gen(ensemble, path, step, out);
      } else {
        const std::size_t N = ensemble.grid.n_steps;
        if (policy.data.size() != ensemble.n_paths * N * d)
          throw invalid_argument_error("raw policy shape mismatch");
        std::copy(policy.data.begin() + (path * N + step) * d,
                  policy.data.begin() + (path * N + step + 1) * d, out);
      }
      break;
  }
  clamp_row(out, d, policy.cap);
}

// ---------------------------------------------------------------------------
// Wealth

InvestmentResult investment_value(const Policy& policy, const PathEnsemble& ensemble, double x0) {
  check_shapes(policy, ensemble);
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;

  InvestmentResult result;
  result.x0 = x0;
  result.wealth.assign(P * (N + 1), 0.0);

  parallel_for(P, [&](std::size_t b, std::size_t e) {
    std::vector<double> u(d);
    for (std::size_t p = b; p < e; ++p) {
      double x = x0;
      result.wealth[p * (N + 1)] = x;
      for (std::size_t k = 0; k < N; ++k) {
        eval_policy_row(policy, ensemble, p, k, u.data());
        const double* s0 = ensemble.node_values(p, k);
        const double* s1 = ensemble.node_values(p, k + 1);
        for (std::size_t a = 0; a < d; ++a) x += u[a] * (s1[a] - s0[a]);
        result.wealth[p * (N + 1) + k + 1] = x;
      }
    }
  });

  std::vector<double> terminal(P);
  for (std::size_t p = 0; p < P; ++p) terminal[p] = result.wealth[p * (N + 1) + N];
  result.terminal_mean = mean_and_stderr(terminal);
  result.terminal_variance = variance_and_stderr(terminal);
  return result;
}

std::vector<double> terminal_gains(const Policy& policy, const PathEnsemble& ensemble) {
  check_shapes(policy, ensemble);
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  std::vector<double> gains(P, 0.0);
  parallel_for(P, [&](std::size_t b, std::size_t e) {
    std::vector<double> u(d);
    for (std::size_t p = b; p < e; ++p) {
      double g = 0.0;
      for (std::size_t k = 0; k < N; ++k) {
        eval_policy_row(policy, ensemble, p, k, u.data());
        const double* s0 = ensemble.node_values(p, k);
        const double* s1 = ensemble.node_values(p, k + 1);
        for (std::size_t a = 0; a < d; ++a) g += u[a] * (s1[a] - s0[a]);
      }
      gains[p] = g;
    }
  });
  return gains;
}

Estimate terminal_variance(const Policy& policy, const PathEnsemble& ensemble, double x0) {
  (void)x0;  // variance is shift-invariant
  return variance_and_stderr(terminal_gains(policy, ensemble));
}

// ---------------------------------------------------------------------------
// Marginal contribution process

namespace {

// Streams the centered explicit form
//   c(t_k) = 2 Diag(S) b M_k + Diag(S) ss' Diag(S) u - Diag(S) b E[M_T]
// with M_k the running gain.  Returns the sample mean of M_T.
double stream_impl(const Policy& policy, const PathEnsemble& ensemble,
                   const market::GbmParams& params,
                   const std::function<void(std::size_t, std::size_t, const double*, const double*)>& fn) {
  check_shapes(policy, ensemble);
  if (!params.non_degenerate())
    throw degenerate_market_error("marginal contribution: degenerate instantaneous covariance");
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  if (params.n_assets() != d) throw invalid_argument_error("params/ensemble asset count mismatch");

  std::vector<double> gains = terminal_gains(policy, ensemble);
  double mean_mt = 0.0;
  for (double g : gains) mean_mt += g;
  mean_mt /= static_cast<double>(P);

  const Eigen::MatrixXd cov = params.instantaneous_covariance();
  const Eigen::VectorXd& drift = params.drift;

  parallel_for(P, [&](std::size_t b, std::size_t e) {
    std::vector<double> u(d), c(d), su(d);
    for (std::size_t p = b; p < e; ++p) {
      double m = 0.0;
      for (std::size_t k = 0; k < N; ++k) {
        eval_policy_row(policy, ensemble, p, k, u.data());
        const double* s0 = ensemble.node_values(p, k);
        for (std::size_t a = 0; a < d; ++a) su[a] = s0[a] * u[a];
        for (std::size_t a = 0; a < d; ++a) {
          double diff = 0.0;
          for (std::size_t aa = 0; aa < d; ++aa) diff += cov(a, aa) * su[aa];
          c[a] = s0[a] * (drift(a) * (2.0 * m - mean_mt) + diff);
        }
        fn(p, k, c.data(), u.data());
        const double* s1 = ensemble.node_values(p, k + 1);
        for (std::size_t a = 0; a < d; ++a) m += u[a] * (s1[a] - s0[a]);
      }
    }
  });
  return mean_mt;
}

}  // namespace

void stream_marginal_contribution(const Policy& policy, const PathEnsemble& ensemble,
                                  const market::GbmParams& params,
                                  const std::function<void(std::size_t, std::size_t, const double*,
                                                           const double*)>& fn) {
  stream_impl(policy, ensemble, params, fn);
}

ContributionProcess explicit_marginal_contribution(const Policy& policy, const PathEnsemble& ensemble,
                                                   const market::GbmParams& params, double x0) {
  (void)x0;  // the centered form does not depend on the initial endowment
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  ContributionProcess proc;
  proc.n_paths = ensemble.n_paths;
  proc.n_steps = N;
  proc.n_assets = d;
  proc.c.assign(ensemble.n_paths * N * d, 0.0);
  proc.k.assign(ensemble.n_paths * N * d, 0.0);
  proc.mean_terminal_gain =
      stream_impl(policy, ensemble, params, [&](std::size_t p, std::size_t s, const double* c_row,
                                                const double* u_row) {
        double* c_out = proc.c.data() + (p * N + s) * d;
        double* k_out = proc.k.data() + (p * N + s) * d;
        for (std::size_t a = 0; a < d; ++a) {
          c_out[a] = c_row[a];
          k_out[a] = u_row[a] * c_row[a];
        }
      });
  return proc;
}

ContributionProcess risk_contribution_variants(const Policy& policy, const PathEnsemble& ensemble,
                                               const market::GbmParams& params, double x0,
                                               Manner manner) {
  if (manner == Manner::share) return explicit_marginal_contribution(policy, ensemble, params, x0);

  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  InvestmentResult invest = investment_value(policy, ensemble, x0);

  ContributionProcess proc;
  proc.n_paths = ensemble.n_paths;
  proc.n_steps = N;
  proc.n_assets = d;
  proc.c.assign(ensemble.n_paths * N * d, 0.0);
  proc.k.assign(ensemble.n_paths * N * d, 0.0);
  proc.mean_terminal_gain =
      stream_impl(policy, ensemble, params, [&](std::size_t p, std::size_t s, const double* c_row,
                                                const double* u_row) {
        const double* prices = ensemble.node_values(p, s);
        const double x = invest.at(p, s, N);
        // money and weight manners describe a self-financing portfolio
        double value = 0.0;
        for (std::size_t a = 0; a < d; ++a) value += u_row[a] * prices[a];
        const double scale = std::max({std::fabs(x), std::fabs(value), 1.0});
        if (std::fabs(value - x) > 1e-8 * scale)
          throw inconsistent_portfolio_error(
              "risk_contribution_variants: X != u'S, portfolio is not self-financing");
        double* c_out = proc.c.data() + (p * N + s) * d;
        double* k_out = proc.k.data() + (p * N + s) * d;
        for (std::size_t a = 0; a < d; ++a) {
          // money holding m = u*S with marginal c/S; weight w = u*S/X with
          // marginal X*c/S.  Either way k = u*c is unchanged.
          const double per_money = c_row[a] / prices[a];
          c_out[a] = manner == Manner::money ? per_money : x * per_money;
          k_out[a] = u_row[a] * c_row[a];
        }
      });
  return proc;
}

// ---------------------------------------------------------------------------
// Aggregation

Estimate aggregate_risk(const Policy& policy, const PathEnsemble& ensemble,
                        const market::GbmParams& params, double x0) {
  (void)x0;
  const std::size_t d = ensemble.n_assets;
  const double dt = ensemble.grid.dt;
  std::vector<double> per_path(ensemble.n_paths, 0.0);
  stream_marginal_contribution(policy, ensemble, params,
                               [&](std::size_t p, std::size_t, const double* c_row, const double* u_row) {
                                 double uc = 0.0;
                                 for (std::size_t a = 0; a < d; ++a) uc += u_row[a] * c_row[a];
                                 per_path[p] += uc * dt;
                               });
  return mean_and_stderr(per_path);
}

Estimate aggregate_risk(const PolicyTable& policy, const ContributionProcess& contribution,
                        const TimeGrid& grid) {
  if (policy.n_paths != contribution.n_paths || policy.n_steps != contribution.n_steps ||
      policy.n_assets != contribution.n_assets)
    throw invalid_argument_error("aggregate_risk: table shape mismatch");
  std::vector<double> per_path(policy.n_paths, 0.0);
  for (std::size_t p = 0; p < policy.n_paths; ++p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < policy.n_steps; ++k)
      for (std::size_t a = 0; a < policy.n_assets; ++a)
        acc += policy.at(p, k, a) * contribution.c_at(p, k, a);
    per_path[p] = acc * grid.dt;
  }
  return mean_and_stderr(per_path);
}

// ---------------------------------------------------------------------------
// Predictable masks

PredictableMask PredictableMask::all(std::size_t n_assets) {
  PredictableMask m;
  m.n_assets = n_assets;
  m.gen = [n_assets](const PathEnsemble&, std::size_t, std::size_t, std::uint8_t* out) {
    std::fill(out, out + n_assets, std::uint8_t{1});
  };
  return m;
}

PredictableMask PredictableMask::none(std::size_t n_assets) {
  PredictableMask m;
  m.n_assets = n_assets;
  m.gen = [n_assets](const PathEnsemble&, std::size_t, std::size_t, std::uint8_t* out) {
    std::fill(out, out + n_assets, std::uint8_t{0});
  };
  return m;
}

PredictableMask PredictableMask::time_window(std::size_t n_assets, const TimeGrid& grid, double t_lo,
                                             double t_hi) {
  PredictableMask m;
  m.n_assets = n_assets;
  m.gen = [n_assets, t_lo, t_hi](const PathEnsemble& e, std::size_t, std::size_t step,
                                 std::uint8_t* out) {
    const double t = e.grid.node(step);
    const std::uint8_t v = (t >= t_lo && t < t_hi) ? 1 : 0;
    std::fill(out, out + n_assets, v);
  };
  (void)grid;
  return m;
}

bool audit_mask(const PredictableMask& mask, const PathEnsemble& ensemble) {
  if (!mask.gen) return false;
  if (mask.n_assets != ensemble.n_assets) return false;
  Policy probe = Policy::raw_generated(
      mask.n_assets, [&mask](const PathEnsemble& e, std::size_t p, std::size_t k, double* out) {
        std::vector<std::uint8_t> bits(mask.n_assets);
        mask.gen(e, p, k, bits.data());
        for (std::size_t a = 0; a < mask.n_assets; ++a) out[a] = static_cast<double>(bits[a]);
      });
  return audit_predictability(probe, ensemble);
}

std::vector<Estimate> marginal_measure(const Policy& policy, const PathEnsemble& ensemble,
                                       const market::GbmParams& params, const PredictableMask& mask) {
  if (!audit_mask(mask, ensemble))
    throw invalid_mask_error("marginal_measure: mask reads future information");
  const std::size_t P = ensemble.n_paths;
  const std::size_t d = ensemble.n_assets;
  const double dt = ensemble.grid.dt;

  std::vector<double> per_path(P * d, 0.0);
  std::vector<std::uint8_t> bits(d);
  stream_marginal_contribution(policy, ensemble, params,
                               [&](std::size_t p, std::size_t k, const double* c_row, const double*) {
                                 mask.gen(ensemble, p, k, bits.data());
                                 for (std::size_t a = 0; a < d; ++a)
                                   if (bits[a]) per_path[p * d + a] += c_row[a] * dt;
                               });

  std::vector<Estimate> out(d);
  std::vector<double> samples(P);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t p = 0; p < P; ++p) samples[p] = per_path[p * d + a];
    out[a] = mean_and_stderr(samples);
  }
  return out;
}

std::vector<Estimate> marginal_measure(const ContributionProcess& contribution,
                                       const PathEnsemble& ensemble, const PredictableMask& mask) {
  if (!audit_mask(mask, ensemble))
    throw invalid_mask_error("marginal_measure: mask reads future information");
  if (contribution.n_paths != ensemble.n_paths || contribution.n_steps != ensemble.grid.n_steps ||
      contribution.n_assets != ensemble.n_assets)
    throw invalid_argument_error("marginal_measure: contribution/ensemble shape mismatch");
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const double dt = ensemble.grid.dt;

  std::vector<Estimate> out(d);
  std::vector<double> samples(P);
  std::vector<std::uint8_t> bits(d);
  std::vector<double> per_path(P * d, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t k = 0; k < N; ++k) {
      mask.gen(ensemble, p, k, bits.data());
      for (std::size_t a = 0; a < d; ++a)
        if (bits[a]) per_path[p * d + a] += contribution.c_at(p, k, a) * dt;
    }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t p = 0; p < P; ++p) samples[p] = per_path[p * d + a];
    out[a] = mean_and_stderr(samples);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracles

double gateaux_oracle(const Policy& u, const Policy& v, const PathEnsemble& ensemble, double x0,
                      double h) {
  (void)x0;
  check_shapes(u, ensemble);
  check_shapes(v, ensemble);
  if (!(h > 0.0)) throw invalid_argument_error("gateaux_oracle: h must be > 0");
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;

  std::vector<double> plus(P, 0.0), minus(P, 0.0);
  parallel_for(P, [&](std::size_t b, std::size_t e) {
    std::vector<double> ur(d), vr(d);
    for (std::size_t p = b; p < e; ++p) {
      double gp = 0.0, gm = 0.0;
      for (std::size_t k = 0; k < N; ++k) {
        eval_policy_row(u, ensemble, p, k, ur.data());
        eval_policy_row(v, ensemble, p, k, vr.data());
        const double* s0 = ensemble.node_values(p, k);
        const double* s1 = ensemble.node_values(p, k + 1);
        for (std::size_t a = 0; a < d; ++a) {
          const double ds = s1[a] - s0[a];
          gp += (ur[a] + h * vr[a]) * ds;
          gm += (ur[a] - h * vr[a]) * ds;
        }
      }
      plus[p] = gp;
      minus[p] = gm;
    }
  });
  const double var_p = variance_and_stderr(plus).mean;
  const double var_m = variance_and_stderr(minus).mean;
  return (var_p - var_m) / (2.0 * h);
}

Estimate covariance_via_contribution(const Policy& u, const Policy& v, const PathEnsemble& ensemble,
                                     const market::GbmParams& params, double x0) {
  (void)x0;
  check_shapes(v, ensemble);
  const std::size_t d = ensemble.n_assets;
  const double dt = ensemble.grid.dt;
  const std::size_t P = ensemble.n_paths;
  const bool martingale = params.drift.cwiseAbs().maxCoeff() == 0.0;
  std::vector<double> per_path(P, 0.0);
  // martingale control variate M_u M_v - [M_u, M_v]: exactly mean-zero for
  // driftless dynamics, couples the estimate to the terminal-gain covariance
  std::vector<double> gain_u(P, 0.0), gain_v(P, 0.0), qcov(P, 0.0);
  std::vector<double> vr(d);
  stream_marginal_contribution(
      u, ensemble, params,
      [&](std::size_t p, std::size_t k, const double* c_row, const double* u_row) {
        eval_policy_row(v, ensemble, p, k, vr.data());
        double vc = 0.0;
        for (std::size_t a = 0; a < d; ++a) vc += vr[a] * c_row[a];
        per_path[p] += vc * dt;
        if (martingale) {
          const double* s0 = ensemble.node_values(p, k);
          const double* s1 = ensemble.node_values(p, k + 1);
          double du = 0.0, dv = 0.0;
          for (std::size_t a = 0; a < d; ++a) {
            const double ds = s1[a] - s0[a];
            du += u_row[a] * ds;
            dv += vr[a] * ds;
          }
          gain_u[p] += du;
          gain_v[p] += dv;
          qcov[p] += du * dv;
        }
      });
  if (martingale)
    for (std::size_t p = 0; p < P; ++p)
      per_path[p] += gain_u[p] * gain_v[p] - qcov[p];
  return mean_and_stderr(per_path);
}

ContinuityCheck contribution_continuity_check(const Policy& u, const Policy& u_perturbed,
                                              const PathEnsemble& ensemble,
                                              const market::GbmParams& params,
                                              const PredictableMask& mask) {
  check_shapes(u, ensemble);
  check_shapes(u_perturbed, ensemble);
  if (!audit_mask(mask, ensemble))
    throw invalid_mask_error("contribution_continuity_check: mask reads future information");
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = ensemble.n_assets;
  const double dt = ensemble.grid.dt;

  double du_inf = 0.0;
  {
    std::vector<double> ur(d), vr(d);
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t k = 0; k < N; ++k) {
        eval_policy_row(u, ensemble, p, k, ur.data());
        eval_policy_row(u_perturbed, ensemble, p, k, vr.data());
        for (std::size_t a = 0; a < d; ++a) du_inf = std::max(du_inf, std::fabs(vr[a] - ur[a]));
      }
  }

  Policy du = Policy::raw_generated(
      d, [&u, &u_perturbed](const PathEnsemble& e, std::size_t p, std::size_t k, double* out) {
        std::vector<double> base(e.n_assets);
        eval_policy_row(u, e, p, k, base.data());
        eval_policy_row(u_perturbed, e, p, k, out);
        for (std::size_t a = 0; a < e.n_assets; ++a) out[a] -= base[a];
      });
  du.cap = u.cap + u_perturbed.cap;

  // lhs = |E int 1_E' c^{du} dt| by linearity of u -> c^u
  std::vector<double> per_path(P, 0.0);
  std::vector<std::uint8_t> bits(d);
  stream_marginal_contribution(du, ensemble, params,
                               [&](std::size_t p, std::size_t k, const double* c_row, const double*) {
                                 mask.gen(ensemble, p, k, bits.data());
                                 double acc = 0.0;
                                 for (std::size_t a = 0; a < d; ++a)
                                   if (bits[a]) acc += c_row[a];
                                 per_path[p] += acc * dt;
                               });
  double lhs = 0.0;
  for (double x : per_path) lhs += x;
  lhs = std::fabs(lhs / static_cast<double>(P));

  // K from |c^{du}_a| <= 2|S_a b_a| L_t + (Diag(S)|ss'|Diag(S)|du|)_a
  //                      + |S_a b_a| E[L_T],  L_t = sum of |dS| seen so far
  const Eigen::MatrixXd cov_abs = params.instantaneous_covariance().cwiseAbs();
  const Eigen::VectorXd& drift = params.drift;
  double mean_lt = 0.0;
  std::vector<double> path_k(P, 0.0);
  std::vector<double> path_lt(P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    double lt = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const double* s0 = ensemble.node_values(p, k);
      const double* s1 = ensemble.node_values(p, k + 1);
      for (std::size_t a = 0; a < d; ++a) lt += std::fabs(s1[a] - s0[a]);
    }
    path_lt[p] = lt;
    mean_lt += lt;
  }
  mean_lt /= static_cast<double>(P);
  for (std::size_t p = 0; p < P; ++p) {
    double lt = 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const double* s0 = ensemble.node_values(p, k);
      for (std::size_t a = 0; a < d; ++a) {
        double diff = 0.0;
        for (std::size_t aa = 0; aa < d; ++aa) diff += cov_abs(a, aa) * s0[aa];
        acc += std::fabs(s0[a] * drift(a)) * (2.0 * lt + mean_lt) + s0[a] * diff;
      }
      const double* s1 = ensemble.node_values(p, k + 1);
      for (std::size_t a = 0; a < d; ++a) lt += std::fabs(s1[a] - s0[a]);
    }
    path_k[p] = acc * dt;
  }
  double big_k = 0.0;
  for (double x : path_k) big_k += x;
  big_k /= static_cast<double>(P);

  ContinuityCheck out;
  out.lhs = lhs;
  out.bound = big_k * du_inf;
  out.holds = lhs <= out.bound * (1.0 + 1e-12) + 1e-300;
  return out;
}

void export_contribution_csv(const ContributionProcess& contribution, const PolicyTable& policy,
                             const TimeGrid& grid, const std::string& path) {
  if (policy.n_paths != contribution.n_paths || policy.n_steps != contribution.n_steps ||
      policy.n_assets != contribution.n_assets)
    throw invalid_argument_error("export_contribution_csv: shape mismatch");
  std::ofstream out(path);
  if (!out) throw invalid_argument_error("export_contribution_csv: cannot open " + path);
  out.precision(17);
  out << "path,t,asset,u,c,k\n";
  for (std::size_t p = 0; p < contribution.n_paths; ++p)
    for (std::size_t k = 0; k < contribution.n_steps; ++k)
      for (std::size_t a = 0; a < contribution.n_assets; ++a)
        out << p << ',' << grid.node(k) << ',' << a << ',' << policy.at(p, k, a) << ','
            << contribution.c_at(p, k, a) << ',' << contribution.k_at(p, k, a) << "\n";
}

}  // namespace riskflow::contribution
