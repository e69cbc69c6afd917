#include "riskflow/market.hpp"

#include <cmath>

namespace riskflow::market {

bool GbmParams::non_degenerate() const {
  Eigen::LLT<Eigen::MatrixXd> llt(instantaneous_covariance());
  return llt.info() == Eigen::Success;
}

void GbmParams::validate() const {
  if (s0.size() == 0) throw invalid_argument_error("GbmParams: empty");
  if ((s0.array() <= 0.0).any()) throw invalid_argument_error("GbmParams: s0 must be > 0");
  if (drift.size() != s0.size() || sigma.rows() != s0.size())
    throw invalid_argument_error("GbmParams: shape mismatch");
}

PathEnsemble simulate_gbm(const GbmParams& params, const TimeGrid& grid, std::size_t n_paths,
                          std::uint64_t seed) {
  params.validate();
  const std::size_t d = params.n_assets();
  const std::size_t m = params.n_drivers();
  const std::size_t N = grid.n_steps;

  PathEnsemble e;
  e.grid = grid;
  e.n_paths = n_paths;
  e.n_assets = d;
  e.n_drivers = m;
  e.values.assign(n_paths * (N + 1) * d, 0.0);
  e.increments.assign(n_paths * N * m, 0.0);

  // exact scheme: S_{k+1} = S_k .* exp((b - diag(ss')/2) dt + sigma dW)
  Eigen::VectorXd log_drift =
      (params.drift - 0.5 * params.instantaneous_covariance().diagonal()) * grid.dt;

  parallel_for(n_paths, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd s(d), dw(m), expo(d);
    for (std::size_t p = begin; p < end; ++p) {
      s = params.s0;
      for (std::size_t a = 0; a < d; ++a) e.values[(p * (N + 1)) * d + a] = s(a);
      for (std::size_t k = 0; k < N; ++k) {
        const double scale = std::sqrt(grid.dt);
        for (std::size_t j = 0; j < m; ++j) {
          dw(j) = scale * gaussian_draw(seed, p, k, j);
          e.increments[(p * N + k) * m + j] = dw(j);
        }
        expo = log_drift + params.sigma * dw;
        for (std::size_t a = 0; a < d; ++a) {
          s(a) *= std::exp(expo(a));
          e.values[(p * (N + 1) + k + 1) * d + a] = s(a);
        }
      }
    }
  });
  return e;
}

void SabrParams::validate() const {
  if (!(f0 > 0.0)) throw invalid_argument_error("SabrParams: f0 must be > 0");
  if (!(s > 0.0)) throw invalid_argument_error("SabrParams: s must be > 0");
  if (alpha < 0.0) throw invalid_argument_error("SabrParams: alpha must be >= 0");
  if (beta_exp < 0.0 || beta_exp > 1.0)
    throw invalid_argument_error("SabrParams: beta_exp must lie in [0, 1]");
  if (rho <= -1.0 || rho >= 1.0) throw invalid_argument_error("SabrParams: rho must lie in (-1, 1)");
}

SabrEnsemble simulate_sabr(const SabrParams& params, const TimeGrid& grid, std::size_t n_paths,
                           std::uint64_t seed) {
  params.validate();
  const std::size_t N = grid.n_steps;
  constexpr std::size_t d = 2;  // (F, sigma)
  constexpr std::size_t m = 2;  // (B1, B2)

  SabrEnsemble out;
  PathEnsemble& e = out.paths;
  e.grid = grid;
  e.n_paths = n_paths;
  e.n_assets = d;
  e.n_drivers = m;
  e.values.assign(n_paths * (N + 1) * d, 0.0);
  e.increments.assign(n_paths * N * m, 0.0);

  const double dt = grid.dt;
  const double root_dt = std::sqrt(dt);
  const double rho_c = std::sqrt(1.0 - params.rho * params.rho);
  const double vol_drift = -0.5 * params.alpha * params.alpha * dt;

  std::vector<std::uint8_t> absorbed(n_paths, 0);
  parallel_for(n_paths, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      double f = params.f0;
      double vol = params.s;
      e.values[(p * (N + 1)) * d + 0] = f;
      e.values[(p * (N + 1)) * d + 1] = vol;
      for (std::size_t k = 0; k < N; ++k) {
        const double db1 = root_dt * gaussian_draw(seed, p, k, 0);
        const double db2 = root_dt * gaussian_draw(seed, p, k, 1);
        e.increments[(p * N + k) * m + 0] = db1;
        e.increments[(p * N + k) * m + 1] = db2;
        const double dw2 = params.rho * db1 + rho_c * db2;
        if (f > 0.0) {
          f += vol * std::pow(f, params.beta_exp) * db1;
          if (f <= 0.0) {  // absorbed at zero
            f = 0.0;
            absorbed[p] = 1;
          }
        }
        vol *= std::exp(vol_drift + params.alpha * dw2);
        e.values[(p * (N + 1) + k + 1) * d + 0] = f;
        e.values[(p * (N + 1) + k + 1) * d + 1] = vol;
      }
    }
  });
  std::size_t n_absorbed = 0;
  for (std::uint8_t a : absorbed) n_absorbed += a;
  out.absorbed_fraction = static_cast<double>(n_absorbed) / static_cast<double>(n_paths);
  return out;
}

std::vector<double> bond_path(const BondParams& params, const TimeGrid& grid) {
  if (!(params.s0 > 0.0)) throw invalid_argument_error("BondParams: s0 must be > 0");
  std::vector<double> path(grid.n_steps + 1);
  for (std::size_t k = 0; k <= grid.n_steps; ++k)
    path[k] = params.s0 * std::exp(params.rate * grid.node(k));
  return path;
}

}  // namespace riskflow::market
