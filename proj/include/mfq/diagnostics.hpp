#pragma once
// Verification instruments: Doeblin minorization constants, kernel/cost
// sensitivity estimates, the coupled-contraction certificate (rate box,
// contraction factor, asymptotic floor), the weighted Lyapunov value, and
// per-step monitors for the two one-sided contraction bounds.

#include <optional>
#include <string>
#include <vector>

#include "mfq/core.hpp"
#include "mfq/oracles.hpp"

namespace mfq::diag {

// ---- assumption constants ----

enum class Provenance { exact, lower_bound };

struct BetaResult {
  double beta = 0.0;
  ProbabilityVector nu;  // minorizing distribution
};

// Maximal uniform minorization for a row-stochastic matrix:
// beta = sum_x' min_x M(x,x'), nu = columnwise minima / beta. Errors when
// beta = 0 (no uniform minorization). The certificate M(x,x') >= beta nu(x')
// holds exactly by construction (pre-division column minima).
BetaResult estimate_beta(const Matrix& m);

struct AssumptionConstants {
  double beta = 0.0;   // Doeblin constant
  double l_p = 0.0;    // kernel sensitivity to mu (row l1 per unit TV)
  double l_q = 0.0;    // kernel sensitivity to Q (row l1 per unit sup)
  double l_f = 0.0;    // cost sensitivity to mu (abs per unit TV)
  double f_sup = 0.0;  // sup norm of the running cost over the probe set
  Provenance beta_provenance = Provenance::lower_bound;
  Provenance lipschitz_provenance = Provenance::lower_bound;
  bool greedy_discontinuity = false;  // a Q-pair probe crossed an argmin flip
  double mixing_margin() const { return 2.0 * beta - 1.0 - l_p; }
};

struct LipschitzConfig {
  std::size_t n_mu_pairs = 64;
  std::size_t n_q_pairs = 64;
  double ratio_cap = 1e6;     // estimates above the cap are reported as the cap
  bool flip_probes = true;    // add near-tie Q perturbation pairs to expose
                              // argmin discontinuities
  std::uint64_t seed = 20240817;
  double q_amplitude = 1.0;   // sampled Q tables live in [0, amplitude]
};

// Sampled lower-bound estimates of (l_p, l_q, l_f, f_sup) plus the Doeblin
// beta at the greedy-policy induced matrices of the probed Q tables (minimum
// over probes). Probes: point masses, uniform, and seeded random simplex
// points for mu; seeded random tables for Q (plus optional flip probes).
AssumptionConstants estimate_lipschitz(const ProblemSpec& spec,
                                       const LipschitzConfig& cfg = {});

// Cost-only sensitivity estimate (max |f(x,a,mu1)-f(x,a,mu2)| / TV).
double estimate_Lf(const ProblemSpec& spec, std::size_t n_pairs = 64,
                   std::uint64_t seed = 20240817);

// ---- contraction certificate ----

struct CertificateConstants {
  double lambda_mu = 0.0;      // 1 - rho_mu (2 beta - 1 - l_p)
  double c1 = 0.0;
  double c2 = 0.0;
  double c = 0.0;              // min(c1, c2)
  double rho_mu_max = 0.0;     // rate box: 0 < rho_mu < 1/(2 beta - 1 - l_p)
  double rho_q_max = 0.0;      //           0 < rho_q  < 1/(1 - e^{-gamma h})
  double asymptotic_floor = 0.0;  // O(rho_q) residual level of the envelope
  double w = 0.0;              // Lyapunov weight used
  bool valid = false;          // rates in box and c in (0,1)
};

// Certificate constants for given assumption constants, rates, discounting
// and Lyapunov weight. Errors when 2 beta - 1 - l_p <= 0 (mixing assumption
// regime violated).
CertificateConstants certificate_constants(const AssumptionConstants& ac,
                                   const LearningRates& rates, double gamma, double h,
                                   double w);

// Weight selection: the geometric mean of the admissible interval
// (w_lo, w_hi) where c1 > 0 and c2 > 0. Degenerate bounds: w_hi = +inf when
// l_f = l_p = 0 (then w = max(2 w_lo, 1)); w_lo = 0 when l_q = 0 (then
// w_lo_eff = 1e-6 w_hi, or w = 1 if both degenerate). Errors with both bounds
// in the message when the interval is empty.
double suggest_weight(const AssumptionConstants& ac, const LearningRates& rates,
                      double gamma, double h);

// ---- Lyapunov ----

struct LyapunovValue {
  double value = 0.0;   // w * q_gap + mu_gap
  double q_gap = 0.0;   // min over reference solutions of sup |Q - Q*|
  double mu_gap = 0.0;  // TV(mu, equilibrium distribution of the current Q)
};

// The equilibrium for the *current* Q is solved on the fly (mu-independent
// kernels: direct stationary solve of the greedy induced matrix).
LyapunovValue lyapunov(const ProblemSpec& spec, const QTable& q,
                       const ProbabilityVector& mu,
                       const std::vector<QTable>& reference_solutions, double w,
                       const oracle::MuFixedPointConfig& mu_cfg = {});

// ---- per-step monitors ----

struct MonitorStep {
  std::size_t k = 0;
  double lhs = 0.0;
  double rhs = 0.0;    // bound value including slack
  double slack = 0.0;  // rhs - lhs (negative = violation)
  bool violated = false;
};

struct MonitorReport {
  std::vector<MonitorStep> steps;
  std::size_t violations = 0;
  std::size_t skipped = 0;  // steps with degenerate (0/0) ratios
  bool all_hold() const { return violations == 0; }
};

// Frozen-Q distribution contraction: checks
//   TV(mu_{k+1}, mu~) <= lambda_mu TV(mu_k, mu~) + slack
// for a trajectory of mu iterates against the frozen-Q equilibrium mu~.
// Steps with TV(mu_k, mu~) and TV(mu_{k+1}, mu~) both below 'degenerate'
// are counted as skipped, not checked (0/0 regime at numerical resolution).
MonitorReport monitor_prop_mu(const std::vector<ProbabilityVector>& mu_path,
                              const ProbabilityVector& mu_eq, double lambda_mu,
                              double slack = 1e-12, double degenerate = 1e-15);

// Coupled one-sided Q contraction: checks
//   |Q_{k+1}-Q*| <= (1 - rho_q (1-e^{-gamma h})) |Q_k-Q*|
//                   + rho_q h TV(mu_k, mu~*) (l_f + l_p f_sup / (e^{gamma h}-1))
//                   + slack
// along a recorded coupled trajectory (needs Q snapshots).
MonitorReport monitor_prop_q(const std::vector<QTable>& q_path,
                             const std::vector<ProbabilityVector>& mu_path,
                             const QTable& q_star, const ProbabilityVector& mu_star,
                             const AssumptionConstants& ac,
                             const LearningRates& rates, double gamma, double h,
                             double slack = 1e-10);

// ---- uniqueness ----

struct UniquenessResult {
  double factor = 0.0;  // < 1 certifies a unique stationary solution
  bool unique = false;  // strict inequality
  double q_sup_used = 0.0;
};

// Contraction factor of the equilibrium-composition map:
//   l_q/(2 beta - 1 - l_p) * (h l_f + e^{-gamma h} l_p q_sup) / (1 - e^{-gamma h}).
// q_sup defaults to the a-priori bound h f_sup / (1 - e^{-gamma h}).
UniquenessResult uniqueness_check(const AssumptionConstants& ac, double gamma,
                                  double h, std::optional<double> q_sup = {});

}  // namespace mfq::diag
