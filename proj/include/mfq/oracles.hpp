#pragma once
// Independent fixed-point solvers used as ground truth against the learning
// iterations: stationary distributions, discounted Bellman solves, and the
// two nested solvers that select stationary solutions in the two regimes
// (equilibrium-first vs optimality-first).

#include <optional>
#include <vector>

#include "mfq/core.hpp"

namespace mfq::oracle {

struct StationaryResult {
  ProbabilityVector mu;
  // set when the direct linear solve was degenerate (non-unique stationary
  // distribution; reducible or identity-like chains) and the power-iteration
  // fallback produced the result
  bool degenerate = false;
  double residual_l1 = 0.0;  // || mu M - mu ||_1
};

// Stationary distribution of a row-stochastic matrix: solves mu = mu M as a
// linear system with a normalization row; on rank deficiency falls back to
// power iteration from the uniform distribution and flags the result.
StationaryResult stationary_distribution(const Matrix& m, double tol = 1e-13,
                                         std::size_t max_iters = 1000000);

struct MuFixedPointConfig {
  double damping = 1.0;       // mu <- (1-d) mu + d (mu P^{Q,mu})
  double tol = 1e-13;         // on || mu - mu P ||_1
  std::size_t max_iters = 200000;
};

// Solve mu = mu P^{Q,mu} for fixed Q. For mu-independent kernels this
// delegates to stationary_distribution of the induced matrix; otherwise runs
// a damped self-consistent iteration. Throws SolveError on non-convergence
// (carrying the last residual).
StationaryResult mu_fixed_point(const ProblemSpec& spec, const QTable& q,
                                const MuFixedPointConfig& cfg = {},
                                const std::optional<ProbabilityVector>& mu0 = {});

// Solve Q = h f + e^{-gamma h} P min Q at frozen mu by value iteration,
// stopping when the sup-norm step is < tol * (1 - e^{-gamma h}) (which
// bounds the fixed-point error by tol).
QTable bellman_solve(const ProblemSpec& spec, const ProbabilityVector& mu,
                     double tol = 1e-12, std::size_t max_iters = 2000000);

struct NestedConfig {
  double damping = 0.5;        // halved after two consecutive residual increases
  double tol = 1e-10;          // joint stopping tolerance on both residuals
  double inner_tol_factor = 1e-2;  // inner-solver tolerance = tol * factor
  std::size_t max_outer = 10000;
  MuFixedPointConfig mu_cfg{};
};

struct FixedPointPair {
  QTable q;
  ProbabilityVector mu;
  double res_T_sup = 0.0;  // sup-norm Bellman residual at (q, mu)
  double res_P_tv = 0.0;   // TV-scale (half-l1) drift residual at (q, mu)
  std::size_t outer_iterations = 0;
};

// Equilibrium-first selection: damped outer iteration on mu, with
// mu -> mu_fixed_point(bellman_solve(mu)).
FixedPointPair mfg_solve(const ProblemSpec& spec, const NestedConfig& cfg = {},
                         const std::optional<ProbabilityVector>& mu0 = {});

// Optimality-first selection: damped outer iteration on Q, with
// Q -> bellman_solve(mu_fixed_point(Q)).
FixedPointPair mfc_solve(const ProblemSpec& spec, const NestedConfig& cfg = {},
                         const std::optional<QTable>& q0 = {});

struct PolicyValue {
  std::vector<double> v;  // V(x) under the fixed policy
  QTable q;               // one-step lookahead Q from V
};

// Exact policy evaluation at frozen mu: direct solve of
// (I - e^{-gamma h} P_alpha) V = h f_alpha, then Q(x,a) from V. residual_tol
// is verified post-solve; violation raises NumericalError.
PolicyValue policy_evaluation(const ProblemSpec& spec, const Policy& alpha,
                              const ProbabilityVector& mu,
                              double residual_tol = 1e-9);

// Residuals of a candidate stationary pair under the two stationary-point
// equations (Bellman sup-residual and TV-scale drift residual).
struct PairResiduals {
  double res_T_sup = 0.0;
  double res_P_tv = 0.0;
};
PairResiduals pair_residuals(const ProblemSpec& spec, const QTable& q,
                             const ProbabilityVector& mu);

}  // namespace mfq::oracle
