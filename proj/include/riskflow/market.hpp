#pragma once

// SDE simulators producing PathEnsembles: multi-asset geometric Brownian
// motion (exact log-normal stepping), SABR (exact stochastic-exponential
// volatility, Euler forward with absorption at zero) and a deterministic
// bond.

#include <Eigen/Dense>

#include "riskflow/core.hpp"

namespace riskflow::market {

struct GbmParams {
  Eigen::VectorXd s0;     // initial prices, > 0
  Eigen::VectorXd drift;  // b, per year
  Eigen::MatrixXd sigma;  // d x m diffusion, per sqrt(year)

  std::size_t n_assets() const { return static_cast<std::size_t>(s0.size()); }
  std::size_t n_drivers() const { return static_cast<std::size_t>(sigma.cols()); }
  Eigen::MatrixXd instantaneous_covariance() const { return sigma * sigma.transpose(); }
  // strict positive definiteness of sigma sigma^T on the traded assets
  bool non_degenerate() const;
  void validate() const;
};

PathEnsemble simulate_gbm(const GbmParams& params, const TimeGrid& grid, std::size_t n_paths,
                          std::uint64_t seed);

struct SabrParams {
  double f0 = 1.0;       // initial forward
  double s = 0.2;        // initial volatility sigma_0
  double alpha = 0.0;    // vol of vol, >= 0
  double beta_exp = 1.0; // in [0, 1]
  double rho = 0.0;      // in (-1, 1)

  void validate() const;
};

// Asset index 0 carries F, index 1 carries sigma.  Drivers are the
// independent pair (B1, B2); W2 = rho*B1 + sqrt(1-rho^2)*B2.
struct SabrEnsemble {
  PathEnsemble paths;
  double absorbed_fraction = 0.0;  // paths with F hitting 0
};

SabrEnsemble simulate_sabr(const SabrParams& params, const TimeGrid& grid, std::size_t n_paths,
                           std::uint64_t seed);

struct BondParams {
  double rate = 0.0;
  double s0 = 1.0;
};

// S0 * exp(r * t_k) on each grid node.
std::vector<double> bond_path(const BondParams& params, const TimeGrid& grid);

}  // namespace riskflow::market
