#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "mfq/core.hpp"
#include "mfq/engine.hpp"
#include "mfq/environments.hpp"
#include "mfq/learner.hpp"
#include "mfq/oracles.hpp"
#include "test_fixtures.hpp"

using namespace mfq;

namespace {

// spectral radius of a real 2x2 matrix from the closed-form eigenvalues
double spectral_radius_2x2(double a, double b, double c, double d) {
  const double tr = a + d, det = a * d - b * c;
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return std::max(std::abs((tr + s) / 2.0), std::abs((tr - s) / 2.0));
  }
  return std::sqrt(det);  // complex pair with modulus sqrt(det)
}

}  // namespace

TEST_CASE("step is the identity at an oracle stationary point") {
  fixtures::CertifiedFixture fx = fixtures::certified_fixture();
  oracle::NestedConfig cfg;
  cfg.tol = 1e-12;
  oracle::FixedPointPair fp = oracle::mfg_solve(fx.spec, cfg);
  engine::StepResult s =
      engine::step(fx.spec, fp.q, fp.mu, LearningRates{.rho_mu = 0.5, .rho_q = 0.5});
  CHECK(sup_norm_diff(s.q, fp.q) < 1e-11);
  CHECK(tv_distance(s.mu, fp.mu) < 1e-11);
}

TEST_CASE("zero rate on one timescale freezes that variable exactly") {
  fixtures::CertifiedFixture fx = fixtures::certified_fixture();
  learner::Rng rng(81);
  QTable q = fixtures::random_qtable(rng, 3, 2);
  ProbabilityVector mu = fixtures::random_distribution(rng, 3);

  engine::StepResult qs =
      engine::step(fx.spec, q, mu, LearningRates{.rho_mu = 0.7, .rho_q = 0.0});
  CHECK(sup_norm_diff(qs.q, q) == 0.0);
  CHECK(tv_distance(qs.mu, mu) > 0.0);

  engine::StepResult ms =
      engine::step(fx.spec, q, mu, LearningRates{.rho_mu = 0.0, .rho_q = 0.7});
  CHECK(tv_distance(ms.mu, mu) < 1e-15);  // defensive renormalization only
  CHECK(sup_norm_diff(ms.q, q) > 0.0);
}

TEST_CASE("one step from (0, uniform) matches hand-rolled arithmetic") {
  // chain [[0.6,0.4],[0.3,0.7]], f = (0.3, 0.7), h = 0.1, Q0 = 0, mu0 uniform:
  //   T(x, 0) = h f(x)            (min_a Q = 0 everywhere)
  //   drift   = mu M - mu = (0.45, 0.55) - (0.5, 0.5) = (-0.05, 0.05)
  ProblemSpec spec = fixtures::strong_mixing_2state();
  QTable q(2, 1);
  ProbabilityVector mu = ProbabilityVector::uniform(2);
  engine::StepResult s =
      engine::step(spec, q, mu, LearningRates{.rho_mu = 0.5, .rho_q = 0.25});
  CHECK(s.q(0, 0) == doctest::Approx(0.25 * 0.1 * 0.3).epsilon(1e-14));
  CHECK(s.q(1, 0) == doctest::Approx(0.25 * 0.1 * 0.7).epsilon(1e-14));
  CHECK(s.mu[0] == doctest::Approx(0.475).epsilon(1e-14));
  CHECK(s.mu[1] == doctest::Approx(0.525).epsilon(1e-14));
  CHECK(s.res_T_sup == doctest::Approx(0.07).epsilon(1e-13));
  CHECK(s.res_P_tv == doctest::Approx(0.05).epsilon(1e-13));
}

TEST_CASE("both updates read the same snapshot, not each other's output") {
  // greedy(q) = action 1; after the Q update the greedy action flips to 0,
  // so a sequential (Gauss-Seidel) variant would push mu the opposite way
  ProblemSpec spec = fixtures::flip_prone_2state();
  QTable q(2, 2);
  q(0, 0) = q(1, 0) = 0.1;
  ProbabilityVector mu = ProbabilityVector::uniform(2);
  const LearningRates rates{.rho_mu = 0.5, .rho_q = 1.0};

  engine::StepResult s = engine::step(spec, q, mu, rates);

  // snapshot reference: both operators evaluated at the original (q, mu)
  QTable t = op_T(spec, q, mu);
  std::vector<double> p = op_P(spec, q, mu);
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t a = 0; a < 2; ++a)
      CHECK(s.q(x, a) == doctest::Approx(q(x, a) + 1.0 * t(x, a)).epsilon(1e-15));
    CHECK(s.mu[x] == doctest::Approx(mu[x] + 0.5 * p[x]).epsilon(1e-14));
  }

  // two-phase variant: drift evaluated at the updated Q — lands elsewhere
  std::vector<double> p_seq = op_P(spec, s.q, mu);
  std::vector<double> mu_seq = {mu[0] + 0.5 * p_seq[0], mu[1] + 0.5 * p_seq[1]};
  CHECK(std::abs(mu_seq[0] - s.mu[0]) > 0.1);
}

TEST_CASE("zero cost: Q never moves and mu settles at the greedy chain's stationary law") {
  env::TabularProblem p;
  p.states = {0.0, 1.0, 2.0};
  p.actions = {0.0, 1.0};
  p.gamma = 1.0;
  p.h = 0.1;
  p.cost_table.assign(6, 0.0);
  p.base_rows = {0.5, 0.3, 0.2, 0.1, 0.1, 0.8, 0.2, 0.6, 0.2,
                 0.3, 0.3, 0.4, 0.1, 0.3, 0.6, 0.25, 0.5, 0.25};
  p.refresh_flags();
  ProblemSpec spec = p.to_spec();

  engine::IterationConfig cfg;
  cfg.rates = {.rho_mu = 0.5, .rho_q = 0.5};
  cfg.max_iters = 5000;
  cfg.tol_T = 1e-13;
  cfg.tol_P = 1e-13;
  engine::RunRecord rec = engine::run(spec, cfg);
  CHECK(rec.converged);
  CHECK(sup_norm(rec.final_q) == 0.0);

  Matrix m = induced_transition(spec, greedy_policy(rec.final_q),
                                ProbabilityVector::uniform(3));
  oracle::StationaryResult st = oracle::stationary_distribution(m);
  CHECK(tv_distance(rec.final_mu, st.mu) < 1e-10);
}

TEST_CASE("coupled fixture run lands on the nested-oracle stationary point") {
  fixtures::CertifiedFixture fx = fixtures::certified_fixture();
  engine::IterationConfig cfg;
  cfg.rates = {.rho_mu = 0.5, .rho_q = 0.5};
  cfg.max_iters = 200000;
  cfg.tol_T = 1e-12;
  cfg.tol_P = 1e-12;
  engine::RunRecord rec = engine::run(fx.spec, cfg);
  CHECK(rec.converged);

  oracle::NestedConfig ncfg;
  ncfg.tol = 1e-12;
  oracle::FixedPointPair fp = oracle::mfg_solve(fx.spec, ncfg);
  CHECK(sup_norm_diff(rec.final_q, fp.q) < 1e-9);
  CHECK(tv_distance(rec.final_mu, fp.mu) < 1e-9);
}

TEST_CASE("benchmark runs land on the nested-oracle stationary points") {
  env::BenchmarkParams p;
  p.delta = 0.2;
  p.h = 0.04;
  ProblemSpec spec = env::build_benchmark_spec(p);

  oracle::NestedConfig ncfg;
  ncfg.tol = 1e-11;
  oracle::FixedPointPair g = oracle::mfg_solve(spec, ncfg);
  oracle::FixedPointPair c = oracle::mfc_solve(spec, ncfg);

  engine::IterationConfig fast_q;  // Q runs much faster than mu
  fast_q.rates = {.rho_mu = 0.02, .rho_q = 0.5};
  fast_q.max_iters = 100000;
  fast_q.tol_T = 1e-11;
  fast_q.tol_P = 1e-11;
  fast_q.record_every = 10000;
  engine::RunRecord rg = engine::run(spec, fast_q);
  CHECK(rg.converged);
  CHECK(sup_norm_diff(rg.final_q, g.q) < 1e-6);
  CHECK(tv_distance(rg.final_mu, g.mu) < 1e-6);

  engine::IterationConfig fast_mu;  // mu runs much faster than Q
  fast_mu.rates = {.rho_mu = 0.5, .rho_q = 0.02};
  fast_mu.max_iters = 100000;
  fast_mu.tol_T = 1e-11;
  fast_mu.tol_P = 1e-11;
  fast_mu.record_every = 10000;
  engine::RunRecord rc = engine::run(spec, fast_mu);
  CHECK(rc.converged);
  CHECK(sup_norm_diff(rc.final_q, c.q) < 1e-6);
  CHECK(tv_distance(rc.final_mu, c.mu) < 1e-6);
}

TEST_CASE("mu stays on the simplex for rho_mu <= 1; overshoot clamps and is flagged") {
  ProblemSpec spec = fixtures::random_problem(91, 4, 2, /*mu_dependent=*/true);
  engine::IterationConfig cfg;
  cfg.rates = {.rho_mu = 1.0, .rho_q = 0.3};
  cfg.max_iters = 500;
  cfg.record_every = 1;
  cfg.tol_T = 1e-300;  // run the full horizon
  cfg.tol_P = 1e-300;
  engine::RunRecord rec = engine::run(spec, cfg);
  CHECK_FALSE(rec.clamped);
  for (const auto& row : rec.rows) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(row.mu[i] >= 0.0);
      sum += row.mu[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  // one-action chain pulling everything to state 1, started from a point mass:
  // mu + 1.5 (mu M - mu) = (-0.35, 1.35) -> clamped to (0, 1)
  env::TabularProblem t;
  t.states = {0.0, 1.0};
  t.actions = {0.0};
  t.gamma = 1.0;
  t.h = 0.1;
  t.cost_table = {0.0, 0.0};
  t.base_rows = {0.1, 0.9, 0.1, 0.9};
  t.refresh_flags();
  engine::StepResult s =
      engine::step(t.to_spec(), QTable(2, 1), ProbabilityVector::point_mass(2, 0),
                   LearningRates{.rho_mu = 1.5, .rho_q = 0.0});
  CHECK(s.clamped);
  CHECK(s.mu[0] == doctest::Approx(0.0));
  CHECK(s.mu[1] == doctest::Approx(1.0));
}

TEST_CASE("non-finite iterates abort with the iteration index") {
  ProblemSpec spec = fixtures::strong_mixing_2state();
  spec.cost = [](std::size_t, std::size_t, const ProbabilityVector&) {
    return std::numeric_limits<double>::infinity();
  };
  engine::IterationConfig cfg;
  cfg.rates = {.rho_mu = 0.5, .rho_q = 0.5};
  cfg.max_iters = 10;
  try {
    engine::run(spec, cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.iteration == 0);
  }
}

TEST_CASE("run is deterministic and records the initial and final iterates") {
  fixtures::CertifiedFixture fx = fixtures::certified_fixture();
  engine::IterationConfig cfg;
  cfg.rates = {.rho_mu = 0.3, .rho_q = 0.3};
  cfg.max_iters = 137;
  cfg.record_every = 10;
  cfg.tol_T = 1e-300;
  cfg.tol_P = 1e-300;
  engine::RunRecord a = engine::run(fx.spec, cfg);
  engine::RunRecord b = engine::run(fx.spec, cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.rows.front().k == 0);
  CHECK(a.rows.back().k == 137);  // unaligned final row still recorded
  CHECK(!a.converged);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].k == b.rows[i].k);
    CHECK(tv_distance(a.rows[i].mu, b.rows[i].mu) == 0.0);
  }
  CHECK(sup_norm_diff(a.final_q, b.final_q) == 0.0);
}

TEST_CASE("scalar system: operators vanish exactly at all three rest points") {
  for (engine::ToyState s : {engine::ToyState{1.0, 0.0}, engine::ToyState{0.5, 0.5},
                             engine::ToyState{1.0, 0.5}}) {
    CHECK(engine::toy_op_P(s) == 0.0);
    CHECK(engine::toy_op_T(s) == 0.0);
    learner::Rng rng(101);
    for (int i = 0; i < 25; ++i) {
      const LearningRates r{.rho_mu = rng.uniform01() + 1e-3,
                            .rho_q = rng.uniform01() + 1e-3};
      engine::ToyState next = engine::toy_step(s, r);
      CHECK(next.q == s.q);
      CHECK(next.mu == s.mu);
    }
  }
}

TEST_CASE("scalar system: rate ratio selects the rest point") {
  const LearningRates q_fast{.rho_mu = 0.001, .rho_q = 1.0};
  const LearningRates mu_fast{.rho_mu = 1.0, .rho_q = 0.001};

  // (q0, mu0) = (0, -0.2): Q-fast regime lands on (1, 0)
  engine::ToyRunResult a = engine::toy_run({0.0, -0.2}, q_fast, 1e-12, 10000000);
  CHECK(a.converged);
  CHECK(std::abs(a.final_state.q - 1.0) < 1e-3);
  CHECK(std::abs(a.final_state.mu - 0.0) < 1e-3);

  // (q0, mu0) = (0.3, 0.4): mu-fast regime lands on (1/2, 1/2)
  engine::ToyRunResult b = engine::toy_run({0.3, 0.4}, mu_fast, 1e-12, 10000000);
  CHECK(b.converged);
  CHECK(std::abs(b.final_state.q - 0.5) < 1e-3);
  CHECK(std::abs(b.final_state.mu - 0.5) < 1e-3);

  // (0.75, 0.25) reaches a different rest point under each regime
  engine::ToyRunResult c = engine::toy_run({0.75, 0.25}, q_fast, 1e-12, 10000000);
  engine::ToyRunResult d = engine::toy_run({0.75, 0.25}, mu_fast, 1e-12, 10000000);
  CHECK(std::abs(c.final_state.q - 1.0) < 1e-3);
  CHECK(std::abs(c.final_state.mu - 0.0) < 1e-3);
  CHECK(std::abs(d.final_state.q - 0.5) < 1e-3);
  CHECK(std::abs(d.final_state.mu - 0.5) < 1e-3);

  // trajectory starts at the initial state and is recorded densely
  CHECK(a.trajectory.front().q == 0.0);
  CHECK(a.trajectory.front().mu == -0.2);

  // divergence guard
  CHECK_THROWS_AS(engine::toy_run({3.0, 3.0}, {.rho_mu = 50.0, .rho_q = 50.0}, 1e-12, 100000),
                  NumericalError);
}

TEST_CASE("scalar system: analytic jacobian, finite differences, and stability") {
  // layout: rows (drift, bellman-residual), columns (d/dmu, d/dq)
  auto j1 = engine::toy_jacobian({1.0, 0.0});
  CHECK(j1[0][0] == doctest::Approx(0.0));
  CHECK(j1[0][1] == doctest::Approx(-1.0));
  CHECK(j1[1][0] == doctest::Approx(0.5));
  CHECK(j1[1][1] == doctest::Approx(-0.5));

  auto j2 = engine::toy_jacobian({0.5, 0.5});
  CHECK(j2[0][0] == doctest::Approx(-0.5));
  CHECK(j2[0][1] == doctest::Approx(0.5));
  CHECK(j2[1][0] == doctest::Approx(-1.0));
  CHECK(j2[1][1] == doctest::Approx(0.0));

  // central finite differences at random points
  learner::Rng rng(111);
  const double eps = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const double q = 3.0 * rng.uniform01() - 1.0;
    const double mu = 3.0 * rng.uniform01() - 1.0;
    auto j = engine::toy_jacobian({q, mu});
    auto dP_dmu = (engine::toy_op_P({q, mu + eps}) - engine::toy_op_P({q, mu - eps})) / (2 * eps);
    auto dP_dq = (engine::toy_op_P({q + eps, mu}) - engine::toy_op_P({q - eps, mu})) / (2 * eps);
    auto dT_dmu = (engine::toy_op_T({q, mu + eps}) - engine::toy_op_T({q, mu - eps})) / (2 * eps);
    auto dT_dq = (engine::toy_op_T({q + eps, mu}) - engine::toy_op_T({q - eps, mu})) / (2 * eps);
    CHECK(j[0][0] == doctest::Approx(dP_dmu).epsilon(1e-6));
    CHECK(j[0][1] == doctest::Approx(dP_dq).epsilon(1e-6));
    CHECK(j[1][0] == doctest::Approx(dT_dmu).epsilon(1e-6));
    CHECK(j[1][1] == doctest::Approx(dT_dq).epsilon(1e-6));
  }

  // linearized update I + diag(rho_mu, rho_q) J contracts at the selected
  // rest point and not at the unstable one
  auto radius = [&](const engine::ToyState& s, double rho_mu, double rho_q) {
    auto j = engine::toy_jacobian(s);
    return spectral_radius_2x2(1.0 + rho_mu * j[0][0], rho_mu * j[0][1],
                               rho_q * j[1][0], 1.0 + rho_q * j[1][1]);
  };
  CHECK(radius({1.0, 0.0}, 0.001, 1.0) < 1.0);   // Q-fast regime at (1, 0)
  CHECK(radius({0.5, 0.5}, 1.0, 0.001) < 1.0);   // mu-fast regime at (1/2, 1/2)
  CHECK(radius({1.0, 0.5}, 0.5, 0.5) > 1.0);     // third rest point is unstable
  // mismatched pairings are not attracting
  CHECK(radius({1.0, 0.0}, 1.0, 0.001) >= 1.0 - 1e-9);
  CHECK(radius({0.5, 0.5}, 0.001, 1.0) >= 1.0 - 1e-9);
}

TEST_CASE("scalar system: single-variable stationarity reductions") {
  for (double mu : {-0.5, 0.0, 0.25, 0.7, 1.3}) {
    const double q = engine::toy_q_of_mu(mu);
    CHECK(std::abs(engine::toy_op_T({q, mu})) < 1e-15);
  }
  for (double q : {-0.3, 0.2, 0.8, 1.6}) {
    const double mu = engine::toy_mu_of_q(q);
    CHECK(std::abs(engine::toy_op_P({q, mu})) < 1e-15);
  }
}

TEST_CASE("iteration config validation") {
  engine::IterationConfig cfg;
  cfg.rates = {.rho_mu = 0.5, .rho_q = 0.5};
  CHECK_NOTHROW(cfg.validate());
  cfg.record_every = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.record_every = 1;
  cfg.rates = {.rho_mu = 0.0, .rho_q = 0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
