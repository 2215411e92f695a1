#pragma once
// Deterministic two-timescale iteration: simultaneous (Jacobi) updates
//   mu_{k+1} = mu_k + rho_mu * P(Q_k, mu_k)
//   Q_{k+1}  = Q_k  + rho_q  * T(Q_k, mu_k)
// both read the same (Q_k, mu_k) snapshot. Also the 2-d scalar toy system
// with closed-form fixed points and Jacobian.

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "mfq/core.hpp"

namespace mfq::engine {

struct IterationConfig {
  LearningRates rates;
  std::size_t max_iters = 100000;
  double tol_T = 1e-10;  // sup-norm of T residual
  double tol_P = 1e-10;  // TV-scale (half-l1) of P residual
  std::size_t record_every = 100;
  bool record_q = false;  // Q snapshots are large; opt in
  void validate() const;
};

struct RecordRow {
  std::size_t k = 0;
  double res_T_sup = 0.0;
  double res_P_tv = 0.0;  // half-l1 of the drift
  // filled by an attached diagnostics hook, NaN otherwise
  double lyapunov = std::numeric_limits<double>::quiet_NaN();
  double q_gap = std::numeric_limits<double>::quiet_NaN();
  double mu_gap = std::numeric_limits<double>::quiet_NaN();
  ProbabilityVector mu;
  std::optional<QTable> q;
};

struct RunRecord {
  std::vector<RecordRow> rows;
  QTable final_q;
  ProbabilityVector final_mu;
  std::size_t iterations = 0;
  bool converged = false;
  bool clamped = false;  // rho_mu > 1 pushed mu off the simplex at least once
};

// Optional per-record diagnostics: returns (lyapunov, q_gap, mu_gap).
using DiagnosticsHook =
    std::function<std::array<double, 3>(const QTable&, const ProbabilityVector&)>;

// One simultaneous update from the same snapshot. For rho_mu <= 1 the mu
// update stays on the simplex by construction; above 1 the result is clamped
// to the simplex (clamped flag set).
struct StepResult {
  QTable q;
  ProbabilityVector mu;
  double res_T_sup = 0.0;
  double res_P_tv = 0.0;
  bool clamped = false;
};
StepResult step(const ProblemSpec& spec, const QTable& q, const ProbabilityVector& mu,
                const LearningRates& rates);

// Iterate until both residual tolerances hold or max_iters. Rows are recorded
// every record_every iterations (always including iteration 0 and the final
// iterate). Throws NumericalError (with iteration index) if an iterate goes
// non-finite.
RunRecord run(const ProblemSpec& spec, const IterationConfig& cfg,
              const std::optional<QTable>& q0 = {},
              const std::optional<ProbabilityVector>& mu0 = {},
              const DiagnosticsHook& diag = {});

// ---- scalar toy system ----
// P(Q, mu) = (Q - 1)(mu - Q),  T(Q, mu) = -(mu - 1/2)(mu - Q + 1).
// Fixed points: (Q, mu) = (1, 0), (1/2, 1/2), (1, 1/2).

struct ToyState {
  double q = 0.0;
  double mu = 0.0;
};

double toy_op_P(const ToyState& s);
double toy_op_T(const ToyState& s);

ToyState toy_step(const ToyState& s, const LearningRates& rates);

struct ToyRunResult {
  std::vector<ToyState> trajectory;  // includes the initial state
  ToyState final_state;
  std::size_t iterations = 0;
  bool converged = false;
};

// Iterate until both |update| increments fall below tol or max_iters; guard
// aborts (NumericalError, with last state in the message) once |q| or |mu|
// exceeds 1e6.
ToyRunResult toy_run(const ToyState& s0, const LearningRates& rates,
                     double tol = 1e-12, std::size_t max_iters = 10000000,
                     std::size_t record_every = 1);

// Jacobian of (P, T) at s in the layout
//   [ dP/dmu  dP/dQ ]   [ Q-1        mu-2Q+1 ]
//   [ dT/dmu  dT/dQ ] = [ -2mu+Q-1/2 mu-1/2  ]
std::array<std::array<double, 2>, 2> toy_jacobian(const ToyState& s);

// Reduced single-timescale maps: the fast variable solved exactly.
// Equilibrium-first reduction: Q solved from T=0 at given mu -> Q = mu + 1.
double toy_q_of_mu(double mu);
// Optimality-first reduction: mu solved from P=0 at given Q (Q != 1) -> mu = Q.
double toy_mu_of_q(double q);

}  // namespace mfq::engine
