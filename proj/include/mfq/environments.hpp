#pragma once
// Problem builders: the linear-quadratic SDE benchmark discretized onto a
// grid, and a JSON schema for tabular problems with mean-field coupling
// expressed through moment functionals.

#include <filesystem>
#include <string>
#include <vector>

#include "mfq/core.hpp"

namespace mfq::env {

enum class DriftMode {
  displacement,  // one-step mean x + a (control acts as a displacement)
  euler,         // one-step mean x + a*h (explicit Euler of dX = alpha dt + sigma dW)
};

// Quadratic running cost
//   f(x, a, mu) = a^2/2 + c1 (x - c2 m)^2 + c3 (x - c4)^2 + c5 m^2,
//   m = sum_x x mu(x),
// on symmetric grids [-half_width + x_c, half_width + x_c] for states and
// [-half_width, half_width] for actions with spacing delta.
struct BenchmarkParams {
  double c1 = 0.25;
  double c2 = 1.5;
  double c3 = 0.5;
  double c4 = 0.6;
  double c5 = 5.0;
  double gamma = 1.0;
  double sigma = 0.3;
  double h = 0.01;
  double delta = 0.1;       // grid spacing for both states and actions
  double half_width = 2.0;  // grid reach on each side
  double x_c = 0.0;         // state-grid center offset
  DriftMode drift = DriftMode::displacement;

  std::size_t n_states() const;
  std::size_t n_actions() const;
  void validate() const;
};

// Evaluate the benchmark running cost at grid labels x, a and distribution mu
// over the state grid (m is the mu-weighted mean of the state labels).
double benchmark_cost(const BenchmarkParams& p, double x, double a,
                      const ProbabilityVector& mu, const StateSpace& states);

// Gaussian one-step kernel on the state grid: row (x, a) puts on bin x' the
// mass P(Z in [x' - delta/2, x' + delta/2]) for Z ~ N(mean(x,a), sigma^2 h),
// then normalizes the row (boundary mass is reassigned by normalization).
// sigma^2 h = 0 degenerates to a deterministic nearest-bin kernel (warned on
// stderr). The kernel does not read mu; rows are precomputed.
KernelFamily build_sde_kernel(const BenchmarkParams& p, const StateSpace& states,
                              const ActionSpace& actions);

// Assemble a full ProblemSpec for the benchmark.
ProblemSpec build_benchmark_spec(const BenchmarkParams& p);

// ---- tabular problem files ----
//
// JSON schema (unknown keys are errors; see load_problem):
// {
//   "states":  [labels...],
//   "actions": [labels...],
//   "gamma": g, "h": h,
//   "cost": {
//     "table": [[f(x,a)...]...],             // n_x rows of n_a entries
//     "terms": [                             // optional mean-field terms
//       {"moment": "mean"|"second_moment"|"mass_at", "at": label (mass_at only),
//        "coeff_table": [[...]...]}          // f += m_j(mu) * coeff(x,a)
//     ]
//   },
//   "kernel": {
//     "base_rows": [[...]...],               // n_x*n_a rows (x-major) of n_x
//     "perturbations": [                     // optional mean-field terms
//       {"moment": ..., "at": label?, "rows": [[...]...]}  // rows sum to 0
//     ]
//   }
// }
// Base rows must be row-stochastic within 1e-9; perturbation rows must sum to
// 0 within 1e-9. At evaluation the row p = base + sum_j m_j(mu) * pert_j is
// clamped to [0,1] entrywise and renormalized.

struct MomentRef {
  std::string kind;  // "mean" | "second_moment" | "mass_at"
  double at = 0.0;   // state label, mass_at only
};

struct TabularProblem {
  std::vector<double> states;
  std::vector<double> actions;
  double gamma = 1.0;
  double h = 0.1;
  std::vector<double> cost_table;  // nx*na row-major
  struct CostTerm {
    MomentRef moment;
    std::vector<double> coeff;  // nx*na row-major
  };
  std::vector<CostTerm> cost_terms;
  std::vector<double> base_rows;  // (nx*na) x nx, (x,a)-major
  struct KernelTerm {
    MomentRef moment;
    std::vector<double> rows;  // same shape as base_rows
  };
  std::vector<KernelTerm> perturbations;

  // validation flags filled by load_problem / refresh_flags()
  bool kernel_mu_dependent = false;
  bool cost_mu_dependent = false;
  // true when some probe distribution (point masses + uniform) pushes a
  // kernel entry outside [0,1], i.e. clamping/renormalization can trigger
  bool clamping_possible = false;

  std::size_t n_states() const { return states.size(); }
  std::size_t n_actions() const { return actions.size(); }
  void refresh_flags();
  ProblemSpec to_spec() const;  // closures copy the tables
};

// Moment functional value m(mu) for labels `states`.
double moment_value(const MomentRef& m, const std::vector<double>& states,
                    const ProbabilityVector& mu);

// Parse + validate; throws ConfigError naming the offending field. Unknown
// keys anywhere in the document are errors.
TabularProblem load_problem(const std::filesystem::path& file);
// Canonical serialization (2-space indent, fixed key order); save . load is
// the identity on files produced by save_problem.
void save_problem(const TabularProblem& p, const std::filesystem::path& file);

}  // namespace mfq::env
