// riskflow: command-line front end for the risk contribution library.
//
// Commands: single-period, contrib, budget, figure2, verify.
// Exit codes: 0 ok, 1 verification failure, 2 bad input, 3 degenerate
// market, 4 solver non-convergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "riskflow/budgeting.hpp"
#include "riskflow/contribution.hpp"
#include "riskflow/core.hpp"
#include "riskflow/market.hpp"
#include "riskflow/single_period.hpp"
#include "riskflow/strategies.hpp"
#include "riskflow/verify.hpp"

#ifndef RISKFLOW_BUILD_ID
#define RISKFLOW_BUILD_ID "unknown"
#endif

namespace {

using json = nlohmann::json;
using namespace riskflow;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitNoConvergence = 4;

struct RunConfig {
  json body;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t n_paths = 10000;
  std::size_t n_steps = 252;
  std::string out_path;
  std::string format = "csv";
};

struct bad_input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bad_input_error("cannot open config file: " + path);
  json body;
  try {
    in >> body;
  } catch (const json::exception& e) {
    throw bad_input_error(std::string("malformed config JSON: ") + e.what());
  }
  return body;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

// Rows plus a metadata header; renders to CSV ('# key=value' comments) or to
// JSON with the same column order.
struct Table {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void meta(const std::string& key, const std::string& value) { header.emplace_back(key, value); }

  std::string render_csv() const {
    std::string out;
    for (const auto& [k, v] : header) out += "# " + k + "=" + v + "\n";
    for (std::size_t i = 0; i < columns.size(); ++i)
      out += columns[i] + (i + 1 < columns.size() ? "," : "\n");
    for (const auto& row : rows)
      for (std::size_t i = 0; i < row.size(); ++i)
        out += row[i] + (i + 1 < row.size() ? "," : "\n");
    return out;
  }

  std::string render_json() const {
    json meta_obj = json::object();
    for (const auto& [k, v] : header) meta_obj[k] = v;
    json rows_arr = json::array();
    for (const auto& row : rows) {
      json obj = json::object();
      for (std::size_t i = 0; i < row.size(); ++i) obj[columns[i]] = row[i];
      rows_arr.push_back(obj);
    }
    json doc;
    doc["meta"] = meta_obj;
    doc["columns"] = columns;
    doc["rows"] = rows_arr;
    return doc.dump(2) + "\n";
  }

  void emit(const RunConfig& cfg) const {
    const std::string text = cfg.format == "json" ? render_json() : render_csv();
    if (cfg.out_path.empty()) {
      std::fwrite(text.data(), 1, text.size(), stdout);
    } else {
      std::ofstream out(cfg.out_path, std::ios::binary);
      if (!out) throw bad_input_error("cannot open output file: " + cfg.out_path);
      out << text;
    }
  }
};

void stamp(Table& table, const RunConfig& cfg, bool stochastic) {
  table.meta("build", RISKFLOW_BUILD_ID);
  if (stochastic) {
    table.meta("seed", std::to_string(cfg.seed));
    table.meta("n_paths", std::to_string(cfg.n_paths));
    table.meta("n_steps", std::to_string(cfg.n_steps));
  }
}

void require_seed(const RunConfig& cfg) {
  if (!cfg.seed_set) throw bad_input_error("--seed is mandatory for stochastic commands");
}

Eigen::MatrixXd covariance_from_config(const json& body) {
  std::vector<std::vector<double>> raw;
  if (body.contains("covariance")) {
    raw = body.at("covariance").get<std::vector<std::vector<double>>>();
  } else if (body.contains("covariance_file")) {
    std::ifstream in(body.at("covariance_file").get<std::string>());
    if (!in) throw bad_input_error("cannot open covariance file");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        try {
          row.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw bad_input_error("malformed covariance file entry: " + cell);
        }
      }
      raw.push_back(std::move(row));
    }
  } else {
    throw bad_input_error("config needs covariance or covariance_file");
  }
  if (raw.empty()) throw bad_input_error("empty covariance");
  const std::size_t d = raw.size();
  Eigen::MatrixXd cov(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    if (raw[i].size() != d) throw bad_input_error("covariance is not square");
    for (std::size_t j = 0; j < d; ++j) cov(i, j) = raw[i][j];
  }
  return cov;
}

market::GbmParams gbm_from_config(const json& model) {
  market::GbmParams params;
  const auto s0 = model.at("s0").get<std::vector<double>>();
  const auto drift = model.at("drift").get<std::vector<double>>();
  const auto sigma = model.at("sigma").get<std::vector<std::vector<double>>>();
  const std::size_t d = s0.size();
  if (drift.size() != d || sigma.size() != d)
    throw bad_input_error("model: s0, drift, sigma row counts disagree");
  const std::size_t m = sigma.empty() ? 0 : sigma[0].size();
  params.s0 = Eigen::VectorXd(d);
  params.drift = Eigen::VectorXd(d);
  params.sigma = Eigen::MatrixXd(d, m);
  for (std::size_t i = 0; i < d; ++i) {
    params.s0(i) = s0[i];
    params.drift(i) = drift[i];
    if (sigma[i].size() != m) throw bad_input_error("model: ragged sigma");
    for (std::size_t j = 0; j < m; ++j) params.sigma(i, j) = sigma[i][j];
  }
  params.validate();
  return params;
}

Policy policy_from_config(const json& block, std::size_t n_assets) {
  const std::string type = block.at("type").get<std::string>();
  if (type == "constant") {
    auto shares = block.at("shares").get<std::vector<double>>();
    if (shares.size() != n_assets) throw bad_input_error("policy: shares size mismatch");
    return Policy::constant(std::move(shares));
  }
  if (type == "deterministic") {
    auto table = block.at("table").get<std::vector<double>>();
    if (table.size() % n_assets != 0) throw bad_input_error("policy: table size mismatch");
    return Policy::deterministic(n_assets, std::move(table));
  }
  throw bad_input_error("policy: unsupported type " + type + " (constant | deterministic)");
}

// Budget whitelist: constant, lambda/T (per-asset uniform total), the
// vol-managed (c_hat S / sigma)^2 rule, and a tabulated per-step budget.
budgeting::BudgetProcess budget_from_config(const json& block, std::size_t n_assets,
                                            double horizon) {
  const std::string type = block.at("type").get<std::string>();
  if (type == "constant") {
    auto beta = block.at("beta").get<std::vector<double>>();
    if (beta.size() != n_assets) throw bad_input_error("budget: beta size mismatch");
    return budgeting::BudgetProcess::constant(std::move(beta));
  }
  if (type == "lambda_over_T") {
    const double lambda = block.at("lambda").get<double>();
    if (!(lambda > 0.0)) throw bad_input_error("budget: lambda must be positive");
    return budgeting::BudgetProcess::constant(
        std::vector<double>(n_assets, lambda / horizon / static_cast<double>(n_assets)));
  }
  if (type == "vol_managed") {
    strategies::VolManagedSpec spec;
    spec.c_hat = block.at("c_hat").get<double>();
    spec.validate();
    return strategies::vol_managed_budget(spec);
  }
  if (type == "tabulated") {
    auto table = block.at("table").get<std::vector<double>>();
    if (table.empty() || table.size() % n_assets != 0)
      throw bad_input_error("budget: table size mismatch");
    return budgeting::BudgetProcess::deterministic(n_assets, std::move(table));
  }
  throw bad_input_error("budget: unsupported type " + type +
                        " (constant | lambda_over_T | vol_managed | tabulated)");
}

budgeting::InformationClass info_from_config(const json& body) {
  budgeting::InformationClass info;
  if (!body.contains("info_class")) return info;
  const json& block = body.at("info_class");
  const std::string kind = block.value("kind", "constant");
  if (kind == "constant")
    info.kind = budgeting::InfoKind::constant;
  else if (kind == "deterministic")
    info.kind = budgeting::InfoKind::deterministic_time;
  else if (kind == "feedback")
    info.kind = budgeting::InfoKind::feedback;
  else if (kind == "full")
    info.kind = budgeting::InfoKind::full;
  else
    throw bad_input_error("info_class: unknown kind " + kind);
  info.n_bins = block.value("n_bins", std::size_t{32});
  info.state_asset = block.value("state_asset", std::size_t{0});
  return info;
}

// ---------------------------------------------------------------------------
// single-period

int cmd_single_period(const RunConfig& cfg) {
  Eigen::MatrixXd cov = covariance_from_config(cfg.body);
  std::vector<std::string> strategies_req =
      cfg.body.value("strategies", std::vector<std::string>{"ew", "mv", "rp"});

  single_period::SinglePeriodMarket market(std::move(cov));
  const std::size_t d = market.n_assets();

  Table table;
  stamp(table, cfg, false);
  table.columns = {"strategy", "asset", "weight", "contribution", "sigma"};

  for (const std::string& name : strategies_req) {
    Eigen::VectorXd w;
    if (name == "ew") {
      w = Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
    } else if (name == "mv") {
      w = single_period::min_variance_weights(market);
    } else if (name == "rp") {
      w = single_period::risk_parity_weights(market).weights;
    } else if (name == "budget") {
      auto beta = cfg.body.at("budget").get<std::vector<double>>();
      if (beta.size() != d) throw bad_input_error("budget vector size mismatch");
      Eigen::VectorXd b(d);
      for (std::size_t i = 0; i < d; ++i) b(i) = beta[i];
      w = single_period::risk_budget_weights(market, single_period::BudgetVector(b)).weights;
    } else {
      throw bad_input_error("unknown strategy " + name + " (ew | mv | rp | budget)");
    }
    const double sigma = single_period::std_risk(market, w);
    Eigen::VectorXd k =
        single_period::risk_contribution_sp(market, w, single_period::Measure::std_dev);
    for (std::size_t i = 0; i < d; ++i)
      table.rows.push_back({name, std::to_string(i), num(w(i)), num(k(i) / sigma), num(sigma)});
  }
  table.emit(cfg);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// contrib

int cmd_contrib(const RunConfig& cfg) {
  require_seed(cfg);
  if (cfg.n_paths < 2) throw bad_input_error("contrib needs at least 2 paths");

  market::GbmParams params = gbm_from_config(cfg.body.at("model"));
  Policy policy = policy_from_config(cfg.body.at("policy"), params.n_assets());
  const double x0 = cfg.body.value("x0", 0.0);
  const double horizon = cfg.body.value("horizon", 1.0);

  const TimeGrid grid = make_time_grid(horizon, cfg.n_steps);
  PathEnsemble ensemble = market::simulate_gbm(params, grid, cfg.n_paths, cfg.seed);

  Estimate var = contribution::terminal_variance(policy, ensemble, x0);
  Estimate agg = contribution::aggregate_risk(policy, ensemble, params, x0);
  const double combined = std::sqrt(var.stderr_ * var.stderr_ + agg.stderr_ * agg.stderr_);
  const double gap = std::fabs(var.mean - agg.mean);
  const bool pass = gap <= 3.0 * combined || (var.mean == 0.0 && agg.mean == 0.0);

  Table table;
  stamp(table, cfg, true);
  table.columns = {"quantity", "value", "stderr"};
  table.rows.push_back({"terminal_variance", num(var.mean), num(var.stderr_)});
  table.rows.push_back({"aggregate_risk", num(agg.mean), num(agg.stderr_)});
  table.rows.push_back({"gap", num(gap), num(combined)});
  table.rows.push_back({"aggregation_identity", pass ? "PASS" : "FAIL", num(3.0 * combined)});
  table.emit(cfg);
  return pass ? kExitOk : kExitVerifyFail;
}

// ---------------------------------------------------------------------------
// budget

int cmd_budget(const RunConfig& cfg) {
  require_seed(cfg);
  const json& body = cfg.body;
  const double horizon = body.value("horizon", 1.0);
  const TimeGrid grid = make_time_grid(horizon, cfg.n_steps);

  const json& model = body.at("model");
  const std::string model_type = model.value("type", "gbm");

  budgeting::BudgetSolveOptions opts;
  opts.tolerance = body.value("tolerance", 1e-8);
  opts.max_iterations = body.value("max_iterations", std::size_t{200});

  budgeting::BudgetSolution sol;
  PathEnsemble ensemble;
  budgeting::BudgetProcess budget;
  if (model_type == "sabr") {
    market::SabrParams params;
    params.f0 = model.value("f0", 1.0);
    params.s = model.value("s", 0.2);
    params.alpha = model.value("alpha", 0.0);
    params.beta_exp = model.value("beta_exp", 1.0);
    params.rho = model.value("rho", 0.0);
    params.validate();
    market::SabrEnsemble se = market::simulate_sabr(params, grid, cfg.n_paths, cfg.seed);
    ensemble = std::move(se.paths);
    budget = budget_from_config(body.at("budget"), 1, horizon);
    sol = budgeting::solve_budget_pointwise_local(
        ensemble, budget,
        [](const PathEnsemble& e, std::size_t p, std::size_t k, Eigen::MatrixXd& cov) {
          const double vol = e.value(p, k, 1);
          cov(0, 0) = vol * vol;
        },
        grid);
  } else if (model_type == "gbm") {
    market::GbmParams params = gbm_from_config(model);
    ensemble = market::simulate_gbm(params, grid, cfg.n_paths, cfg.seed);
    budget = budget_from_config(body.at("budget"), params.n_assets(), horizon);
    budgeting::InformationClass info = info_from_config(body);
    if (info.kind == budgeting::InfoKind::full &&
        params.drift.cwiseAbs().maxCoeff() == 0.0) {
      sol = budgeting::solve_budget_pointwise(params, ensemble, budget, grid);
    } else {
      sol = budgeting::solve_budget_iterative(params, ensemble, budget, info, opts);
    }
  } else {
    throw bad_input_error("model: unsupported type " + model_type + " (gbm | sabr)");
  }

  const double kl = budgeting::kl_divergence(budget, sol.policy, ensemble);

  Table table;
  stamp(table, cfg, true);
  table.columns = {"quantity", "value"};
  table.rows.push_back({"residual_max", num(sol.residual_max)});
  table.rows.push_back({"residual_l2", num(sol.residual_l2)});
  table.rows.push_back({"iterations", std::to_string(sol.iterations)});
  table.rows.push_back({"converged", sol.converged ? "true" : "false"});
  table.rows.push_back({"kl_divergence", num(kl)});
  table.rows.push_back({"n_cells", std::to_string(sol.cells.n_cells)});
  const std::size_t d = ensemble.n_assets;
  const std::size_t show = std::min<std::size_t>(sol.coeffs.size() / d, 16);
  for (std::size_t m = 0; m < show; ++m)
    for (std::size_t a = 0; a < d; ++a)
      table.rows.push_back(
          {"u[" + std::to_string(m) + "," + std::to_string(a) + "]", num(sol.coeffs[m * d + a])});
  table.emit(cfg);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// figure2

int cmd_figure2(const RunConfig& cfg) {
  strategies::MvParams params;
  const json& body = cfg.body;
  params.r = body.value("r", params.r);
  params.b = body.value("b", params.b);
  params.sigma_sq = body.value("sigma_sq", params.sigma_sq);
  params.tau = body.value("tau", params.tau);
  params.x0 = body.value("x0", params.x0);
  params.horizon = body.value("horizon", params.horizon);
  params.validate();
  const double t = body.value("t", 0.5);

  std::vector<double> xs;
  const double x_lo = body.value("x_min", -1.0);
  const double x_hi = body.value("x_max", 3.0);
  const std::size_t n_x = body.value("x_points", std::size_t{41});
  for (std::size_t i = 0; i < n_x; ++i)
    xs.push_back(x_lo + (x_hi - x_lo) * static_cast<double>(i) / static_cast<double>(n_x - 1));
  const auto x0_sweep = body.value("x0_sweep", std::vector<double>{0.5, 2.0});
  const auto tau_sweep = body.value("tau_sweep", std::vector<double>{0.5, 2.0});

  auto entries = strategies::figure2_table(params, t, xs, x0_sweep, tau_sweep);

  Table table;
  stamp(table, cfg, false);
  table.meta("k0_x2_positive", entries.front().k0_x2 > 0.0 ? "true" : "false");
  table.meta("k1_x2_negative", entries.front().k1_x2 < 0.0 ? "true" : "false");
  bool sweep_invariant = true;
  for (const auto& entry : entries)
    if (entry.k0_x2 != entries.front().k0_x2 || entry.k1_x2 != entries.front().k1_x2)
      sweep_invariant = false;
  table.meta("x2_coeffs_sweep_invariant", sweep_invariant ? "true" : "false");
  table.columns = {"sweep", "param_value", "x", "k0", "k1", "k0_x2", "k1_x2"};
  for (const auto& entry : entries)
    for (std::size_t i = 0; i < entry.x.size(); ++i)
      table.rows.push_back({entry.sweep, num(entry.param_value), num(entry.x[i]), num(entry.k0[i]),
                            num(entry.k1[i]), num(entry.k0_x2), num(entry.k1_x2)});
  table.emit(cfg);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const RunConfig& cfg, const std::string& filter, bool inject_bug) {
  verify::VerifyConfig vc;
  vc.seed = cfg.seed_set ? cfg.seed : 97;
  vc.filter = filter;
  verify::inject_convention_bug = inject_bug;

  std::vector<verify::CheckResult> results = verify::run_checks(vc);
  bool all = !results.empty();
  for (const auto& r : results) {
    std::printf("[%s] %2d %s: %s\n", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
                r.detail.c_str());
    all = all && r.passed;
  }
  if (results.empty()) std::printf("no checks matched filter '%s'\n", filter.c_str());

  const std::string report = verify::report_json(results, vc.seed);
  if (!cfg.out_path.empty()) {
    std::ofstream out(cfg.out_path, std::ios::binary);
    if (!out) throw bad_input_error("cannot open output file: " + cfg.out_path);
    out << report;
  } else if (cfg.format == "json") {
    std::fwrite(report.data(), 1, report.size(), stdout);
  }
  if (!all)
    for (const auto& r : results)
      if (!r.passed) std::fprintf(stderr, "verification failed: %s\n", r.name.c_str());
  return all ? kExitOk : kExitVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"risk contributions and risk budgeting in continuous time"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  std::string filter;
  bool inject_bug = false;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "JSON config file");
    if (config_required) opt->required();
    sub->add_option("--seed", cfg.seed, "RNG seed")->each([&](const std::string&) {
      cfg.seed_set = true;
    });
    sub->add_option("--paths", cfg.n_paths, "Monte Carlo paths");
    sub->add_option("--steps", cfg.n_steps, "time steps");
    sub->add_option("--out", cfg.out_path, "output file (default stdout)");
    sub->add_option("--format", cfg.format, "csv | json")
        ->check(CLI::IsMember({"csv", "json"}));
  };

  CLI::App* sp = app.add_subcommand("single-period", "weights and risk contributions");
  add_common(sp, true);
  CLI::App* contrib = app.add_subcommand("contrib", "aggregation identity check");
  add_common(contrib, true);
  CLI::App* budget = app.add_subcommand("budget", "risk budgeting solve");
  add_common(budget, true);
  CLI::App* figure2 = app.add_subcommand("figure2", "mean-variance contribution sweeps");
  add_common(figure2, true);
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the acceptance suite");
  add_common(verify_cmd, false);
  verify_cmd->add_option("--filter", filter, "substring filter on check names");
  verify_cmd->add_flag("--inject-convention-bug", inject_bug)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (!config_path.empty()) cfg.body = load_config(config_path);
    if (sp->parsed()) return cmd_single_period(cfg);
    if (contrib->parsed()) return cmd_contrib(cfg);
    if (budget->parsed()) return cmd_budget(cfg);
    if (figure2->parsed()) return cmd_figure2(cfg);
    if (verify_cmd->parsed()) return cmd_verify(cfg, filter, inject_bug);
  } catch (const bad_input_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  } catch (const riskflow::invalid_argument_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  } catch (const riskflow::degenerate_market_error& e) {
    std::fprintf(stderr, "degenerate market: %s\n", e.what());
    return kExitDegenerate;
  } catch (const riskflow::convergence_error& e) {
    std::fprintf(stderr, "non-convergence: %s (residual %.3e)\n", e.what(), e.residual);
    return kExitNoConvergence;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  }
  return kExitBadInput;
}
