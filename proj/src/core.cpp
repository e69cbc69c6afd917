#include "riskflow/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace riskflow {

// ---------------------------------------------------------------------------
// Threads

std::size_t worker_count() {
  std::size_t n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("RISKFLOW_THREADS")) {
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v >= 1) n = std::min<std::size_t>(n, v);
  }
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1 || n < 256) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end, &errors, w] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Time grid

TimeGrid make_time_grid(double horizon, std::size_t n_steps) {
  if (!(horizon > 0.0)) throw invalid_argument_error("make_time_grid: horizon must be > 0");
  if (n_steps < 1) throw invalid_argument_error("make_time_grid: n_steps must be >= 1");
  return TimeGrid{horizon, n_steps, horizon / static_cast<double>(n_steps)};
}

// ---------------------------------------------------------------------------
// Counter-based RNG: a splitmix64-style finalizer chain over the key
// (seed, path, step, driver), Box-Muller to a standard normal.

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double to_unit_open(std::uint64_t h) {
  // (0, 1], safe for log()
  return static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

double gaussian_draw(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t driver) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ path);
  h = mix64(h ^ step);
  h = mix64(h ^ driver);
  double u1 = to_unit_open(mix64(h ^ 0x5851F42D4C957F2DULL));
  double u2 = to_unit_open(mix64(h ^ 0x14057B7EF767814FULL));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

std::vector<double> gaussian_increments(std::uint64_t seed, std::uint64_t path_index,
                                        std::size_t n_steps, std::size_t n_drivers, double dt) {
  if (!(dt > 0.0)) throw invalid_argument_error("gaussian_increments: dt must be > 0");
  std::vector<double> table(n_steps * n_drivers);
  const double scale = std::sqrt(dt);
  for (std::size_t k = 0; k < n_steps; ++k)
    for (std::size_t j = 0; j < n_drivers; ++j)
      table[k * n_drivers + j] = scale * gaussian_draw(seed, path_index, k, j);
  return table;
}

// ---------------------------------------------------------------------------
// Estimates

Estimate mean_and_stderr(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw invalid_argument_error("mean_and_stderr: need at least 2 samples");
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return Estimate{mean, sd / std::sqrt(static_cast<double>(n)), n};
}

Estimate variance_and_stderr(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw invalid_argument_error("variance_and_stderr: need at least 2 samples");
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double mean = sum / static_cast<double>(n);
  double m2 = 0.0, m4 = 0.0;
  for (double s : samples) {
    const double d = s - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  const double var = m2 / static_cast<double>(n - 1);
  m2 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  // delta-method: Var(s^2) ~ (m4 - m2^2)/n
  const double se = std::sqrt(std::max(0.0, m4 - m2 * m2) / static_cast<double>(n));
  return Estimate{var, se, n};
}

// ---------------------------------------------------------------------------
// Ensemble CSV round trip

void export_ensemble_csv(const PathEnsemble& e, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw invalid_argument_error("export_ensemble_csv: cannot open " + path);
  out.precision(17);
  out << "# horizon=" << e.grid.horizon << " n_steps=" << e.grid.n_steps
      << " n_paths=" << e.n_paths << " n_assets=" << e.n_assets
      << " n_drivers=" << e.n_drivers << "\n";
  out << "path,node,asset,value\n";
  for (std::size_t p = 0; p < e.n_paths; ++p)
    for (std::size_t k = 0; k <= e.grid.n_steps; ++k)
      for (std::size_t a = 0; a < e.n_assets; ++a)
        out << p << ',' << k << ',' << a << ',' << e.value(p, k, a) << "\n";
}

PathEnsemble import_ensemble_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_argument_error("import_ensemble_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("#", 0) != 0)
    throw invalid_argument_error("import_ensemble_csv: missing header");
  double horizon = 0.0;
  std::size_t n_steps = 0, n_paths = 0, n_assets = 0, n_drivers = 0;
  {
    std::istringstream hs(line.substr(1));
    std::string tok;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "horizon") horizon = std::stod(val);
      else if (key == "n_steps") n_steps = std::stoul(val);
      else if (key == "n_paths") n_paths = std::stoul(val);
      else if (key == "n_assets") n_assets = std::stoul(val);
      else if (key == "n_drivers") n_drivers = std::stoul(val);
    }
  }
  if (n_steps == 0 || n_paths == 0 || n_assets == 0)
    throw invalid_argument_error("import_ensemble_csv: bad header");
  std::getline(in, line);  // column header
  PathEnsemble e;
  e.grid = make_time_grid(horizon, n_steps);
  e.n_paths = n_paths;
  e.n_assets = n_assets;
  e.n_drivers = n_drivers;
  e.values.assign(n_paths * (n_steps + 1) * n_assets, 0.0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t p, k, a;
    char c;
    double v;
    if (!(ls >> p >> c >> k >> c >> a >> c >> v))
      throw invalid_argument_error("import_ensemble_csv: bad row: " + line);
    e.values[(p * (n_steps + 1) + k) * n_assets + a] = v;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Policies

Policy Policy::constant(std::vector<double> shares) {
  Policy p;
  p.kind = PolicyKind::constant;
  p.n_assets = shares.size();
  p.data = std::move(shares);
  return p;
}

Policy Policy::deterministic(std::size_t n_assets, std::vector<double> per_step) {
  if (n_assets == 0 || per_step.size() % n_assets != 0)
    throw invalid_argument_error("Policy::deterministic: table size must be N*d");
  Policy p;
  p.kind = PolicyKind::deterministic;
  p.n_assets = n_assets;
  p.data = std::move(per_step);
  return p;
}

Policy Policy::feedback(std::size_t n_assets, FeedbackRule rule) {
  Policy p;
  p.kind = PolicyKind::feedback;
  p.n_assets = n_assets;
  p.rule = std::move(rule);
  return p;
}

Policy Policy::raw(std::size_t n_assets, std::vector<double> table) {
  Policy p;
  p.kind = PolicyKind::raw;
  p.n_assets = n_assets;
  p.data = std::move(table);
  return p;
}

Policy Policy::raw_generated(std::size_t n_assets, RawGenerator gen) {
  Policy p;
  p.kind = PolicyKind::raw;
  p.n_assets = n_assets;
  p.gen = std::move(gen);
  return p;
}

double PolicyTable::max_abs() const {
  double m = 0.0;
  for (double s : shares) m = std::max(m, std::fabs(s));
  return m;
}

PolicyTable materialize(const Policy& policy, const PathEnsemble& ensemble) {
  const std::size_t P = ensemble.n_paths;
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = policy.n_assets;
  if (d != ensemble.n_assets)
    throw invalid_argument_error("materialize: policy/ensemble asset count mismatch");

  PolicyTable table;
  table.n_paths = P;
  table.n_steps = N;
  table.n_assets = d;
  table.shares.assign(P * N * d, 0.0);

  std::vector<std::size_t> cap_hits(P, 0);
  const double cap = policy.cap;
  auto clamp_row = [cap](double* row, std::size_t d, std::size_t& hits) {
    for (std::size_t a = 0; a < d; ++a) {
      if (row[a] > cap) { row[a] = cap; ++hits; }
      else if (row[a] < -cap) { row[a] = -cap; ++hits; }
    }
  };

  switch (policy.kind) {
    case PolicyKind::constant: {
      if (policy.data.size() != d) throw invalid_argument_error("materialize: bad constant policy");
      parallel_for(P, [&](std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p)
          for (std::size_t k = 0; k < N; ++k) {
            double* row = table.shares.data() + (p * N + k) * d;
            std::copy(policy.data.begin(), policy.data.end(), row);
            clamp_row(row, d, cap_hits[p]);
          }
      });
      break;
    }
    case PolicyKind::deterministic: {
      if (policy.data.size() != N * d)
        throw invalid_argument_error("materialize: deterministic policy shape mismatch");
      parallel_for(P, [&](std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p)
          for (std::size_t k = 0; k < N; ++k) {
            double* row = table.shares.data() + (p * N + k) * d;
            std::copy(policy.data.begin() + k * d, policy.data.begin() + (k + 1) * d, row);
            clamp_row(row, d, cap_hits[p]);
          }
      });
      break;
    }
    case PolicyKind::feedback: {
      if (!policy.rule) throw invalid_argument_error("materialize: feedback policy without rule");
      parallel_for(P, [&](std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p)
          for (std::size_t k = 0; k < N; ++k) {
            double* row = table.shares.data() + (p * N + k) * d;
            policy.rule(ensemble.grid.node(k), ensemble.node_values(p, k), row);
            clamp_row(row, d, cap_hits[p]);
          }
      });
      break;
    }
    case PolicyKind::raw: {
      if (policy.gen) {
        parallel_for(P, [&](std::size_t b, std::size_t e) {
          for (std::size_t p = b; p < e; ++p)
            for (std::size_t k = 0; k < N; ++k) {
              double* row = table.shares.data() + (p * N + k) * d;
              policy.gen(ensemble, p, k, row);
              clamp_row(row, d, cap_hits[p]);
            }
        });
      } else {
        if (policy.data.size() != P * N * d)
          throw invalid_argument_error("materialize: raw policy shape mismatch");
        table.shares = policy.data;
        parallel_for(P, [&](std::size_t b, std::size_t e) {
          for (std::size_t p = b; p < e; ++p)
            for (std::size_t k = 0; k < N; ++k)
              clamp_row(table.shares.data() + (p * N + k) * d, d, cap_hits[p]);
        });
      }
      break;
    }
  }
  std::size_t total_hits = 0;
  for (std::size_t h : cap_hits) total_hits += h;
  table.cap_hit_fraction = static_cast<double>(total_hits) / static_cast<double>(P * N * d);
  return table;
}

bool audit_predictability(const Policy& policy, const PathEnsemble& ensemble) {
  if (policy.kind == PolicyKind::constant || policy.kind == PolicyKind::deterministic) return true;
  if (policy.kind == PolicyKind::feedback) return true;  // sees node-k state only
  if (!policy.gen) return true;  // plain table, nothing to re-evaluate

  const std::size_t P = std::min<std::size_t>(ensemble.n_paths, 16);
  const std::size_t N = ensemble.grid.n_steps;
  const std::size_t d = policy.n_assets;
  const std::size_t m = ensemble.n_drivers;

  // audit only the first P paths, on a small sub-ensemble copy
  PathEnsemble scrambled;
  scrambled.grid = ensemble.grid;
  scrambled.n_paths = P;
  scrambled.n_assets = d;
  scrambled.n_drivers = m;
  scrambled.values.assign(ensemble.values.begin(), ensemble.values.begin() + P * (N + 1) * d);
  scrambled.increments.assign(ensemble.increments.begin(), ensemble.increments.begin() + P * N * m);
  const PathEnsemble reference = scrambled;

  std::vector<double> ref(d), probe(d);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t k = 0; k < N; ++k) {
      policy.gen(reference, p, k, ref.data());
      // overwrite everything strictly after node k on this path
      for (std::size_t kk = k + 1; kk <= N; ++kk)
        for (std::size_t a = 0; a < d; ++a)
          scrambled.values[(p * (N + 1) + kk) * d + a] =
              1.0 + 0.37 * static_cast<double>((kk * 131 + a * 17 + p) % 97);
      // the increment over step k itself is future information at t_k
      for (std::size_t kk = k; kk < N; ++kk)
        for (std::size_t j = 0; j < m; ++j)
          scrambled.increments[(p * N + kk) * m + j] =
              0.01 * static_cast<double>((kk * 29 + j * 13 + p) % 23) - 0.1;
      policy.gen(scrambled, p, k, probe.data());
      // restore
      for (std::size_t kk = k + 1; kk <= N; ++kk)
        for (std::size_t a = 0; a < d; ++a)
          scrambled.values[(p * (N + 1) + kk) * d + a] = reference.values[(p * (N + 1) + kk) * d + a];
      for (std::size_t kk = k; kk < N; ++kk)
        for (std::size_t j = 0; j < m; ++j)
          scrambled.increments[(p * N + kk) * m + j] = reference.increments[(p * N + kk) * m + j];
      for (std::size_t a = 0; a < d; ++a)
        if (ref[a] != probe[a]) return false;
    }
  }
  return true;
}

}  // namespace riskflow
