#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "riskflow/core.hpp"

using namespace riskflow;

TEST_CASE("time grid hits the horizon exactly") {
  const TimeGrid grid = make_time_grid(1.0, 252);
  CHECK(grid.node(252) == 1.0);
  CHECK(grid.node(0) == 0.0);
  CHECK(grid.dt == doctest::Approx(1.0 / 252.0).epsilon(1e-15));
  const TimeGrid odd = make_time_grid(0.7, 3);
  CHECK(odd.node(3) == 0.7);
}

TEST_CASE("gaussian stream is a pure function of its key") {
  CHECK(gaussian_draw(7, 3, 5, 1) == gaussian_draw(7, 3, 5, 1));
  CHECK(gaussian_draw(7, 3, 5, 1) != gaussian_draw(7, 4, 5, 1));
  CHECK(gaussian_draw(7, 3, 5, 1) != gaussian_draw(8, 3, 5, 1));

  auto a = gaussian_increments(11, 2, 16, 3, 0.01);
  auto b = gaussian_increments(11, 2, 16, 3, 0.01);
  CHECK(a == b);
  auto c = gaussian_increments(11, 3, 16, 3, 0.01);
  CHECK(a != c);
}

TEST_CASE("increment moments match normal(0, dt)") {
  const std::size_t n = 200000;
  const double dt = 0.01;
  std::vector<double> draws;
  draws.reserve(n);
  for (std::size_t p = 0; p < n / 16; ++p) {
    auto table = gaussian_increments(123, p, 16, 1, dt);
    draws.insert(draws.end(), table.begin(), table.end());
  }
  Estimate mean = mean_and_stderr(draws);
  CHECK(std::fabs(mean.mean) <= 3.0 * mean.stderr_);
  Estimate var = variance_and_stderr(draws);
  CHECK(std::fabs(var.mean - dt) <= 3.0 * var.stderr_);
}

TEST_CASE("mean_and_stderr basics") {
  Estimate constant = mean_and_stderr({1.0, 1.0, 1.0, 1.0});
  CHECK(constant.mean == 1.0);
  CHECK(constant.stderr_ == 0.0);

  Estimate two = mean_and_stderr({0.0, 2.0});
  CHECK(two.mean == doctest::Approx(1.0));
  CHECK(two.stderr_ == doctest::Approx(1.0));

  CHECK_THROWS_AS(mean_and_stderr({}), invalid_argument_error);
  CHECK_THROWS_AS(mean_and_stderr({1.0}), invalid_argument_error);
}

TEST_CASE("parallel_for reduces independently of the thread cap") {
  auto run = [](const char* threads) {
    setenv("RISKFLOW_THREADS", threads, 1);
    std::vector<double> slots(5000, 0.0);
    parallel_for(slots.size(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) slots[i] = std::sin(static_cast<double>(i));
    });
    double sum = 0.0;
    for (double v : slots) sum += v;
    unsetenv("RISKFLOW_THREADS");
    return sum;
  };
  CHECK(run("1") == run("4"));
}

TEST_CASE("parallel_for propagates worker exceptions") {
  setenv("RISKFLOW_THREADS", "4", 1);
  CHECK_THROWS_AS(parallel_for(10000,
                               [](std::size_t lo, std::size_t) {
                                 if (lo >= 0) throw invalid_argument_error("boom");
                               }),
                  invalid_argument_error);
  unsetenv("RISKFLOW_THREADS");
}

namespace {

PathEnsemble tiny_ensemble() {
  PathEnsemble e;
  e.grid = make_time_grid(1.0, 4);
  e.n_paths = 8;
  e.n_assets = 2;
  e.n_drivers = 2;
  e.values.resize(e.n_paths * 5 * 2);
  e.increments.resize(e.n_paths * 4 * 2);
  for (std::size_t p = 0; p < e.n_paths; ++p)
    for (std::size_t k = 0; k <= 4; ++k)
      for (std::size_t a = 0; a < 2; ++a)
        e.values[(p * 5 + k) * 2 + a] = 1.0 + 0.1 * static_cast<double>(p + k + a);
  for (std::size_t i = 0; i < e.increments.size(); ++i)
    e.increments[i] = 0.01 * static_cast<double>(i % 7);
  return e;
}

}  // namespace

TEST_CASE("policy materialization and the share cap") {
  PathEnsemble e = tiny_ensemble();

  Policy constant = Policy::constant({2.0, -1.0});
  PolicyTable table = materialize(constant, e);
  CHECK(table.at(3, 2, 0) == 2.0);
  CHECK(table.at(3, 2, 1) == -1.0);
  CHECK(table.cap_hit_fraction == 0.0);

  Policy fb = Policy::feedback(2, [](double, const double* s, double* out) {
    out[0] = 1.0 / s[0];
    out[1] = s[1];
  });
  PolicyTable fbt = materialize(fb, e);
  CHECK(fbt.at(1, 2, 0) == doctest::Approx(1.0 / e.value(1, 2, 0)));

  Policy big = Policy::constant({5.0});
  big.cap = 3.0;
  PathEnsemble e1 = e;
  e1.n_assets = 1;
  e1.values.resize(e1.n_paths * 5);
  for (auto& v : e1.values) v = 1.0;
  PolicyTable capped = materialize(big, e1);
  CHECK(capped.at(0, 0, 0) == 3.0);
  CHECK(capped.cap_hit_fraction == 1.0);
}

TEST_CASE("predictability audit catches future-peeking generators") {
  PathEnsemble e = tiny_ensemble();

  Policy honest = Policy::feedback(2, [](double, const double* s, double* out) {
    out[0] = s[0];
    out[1] = s[1];
  });
  CHECK(audit_predictability(honest, e));

  Policy cheat = Policy::raw_generated(
      2, [](const PathEnsemble& ens, std::size_t p, std::size_t k, double* out) {
        const std::size_t next = std::min(k + 1, ens.grid.n_steps);
        out[0] = ens.value(p, next, 0);
        out[1] = ens.value(p, k, 1);
      });
  CHECK_FALSE(audit_predictability(cheat, e));
}
