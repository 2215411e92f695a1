#pragma once
// Core value types and deterministic operators for mean-field Q iterations
// on finite state/action spaces. Costs are minimized throughout; greedy
// always means argmin with lowest-index tie break.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfq {

// Thrown when an iterative scheme fails to reach its tolerance.
struct SolveError : std::runtime_error {
  double last_residual = 0.0;
  std::size_t iterations = 0;
  SolveError(const std::string& msg, double res, std::size_t iters)
      : std::runtime_error(msg), last_residual(res), iterations(iters) {}
  explicit SolveError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an iterate leaves the finite/representable range.
struct NumericalError : std::runtime_error {
  std::size_t iteration = 0;
  NumericalError(const std::string& msg, std::size_t iter)
      : std::runtime_error(msg), iteration(iter) {}
};

// Thrown on malformed configs, schemas, or argument contracts.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateSpace {
  std::vector<double> labels;  // numeric label per state, used by moment functionals
  std::size_t size() const { return labels.size(); }
};

struct ActionSpace {
  std::vector<double> labels;
  std::size_t size() const { return labels.size(); }
};

// Distribution over states: nonnegative, sums to 1 within 1e-12 after
// construction (the constructor normalizes; genuinely negative input is an
// error, values above -1e-12 are clamped to 0).
class ProbabilityVector {
 public:
  ProbabilityVector() = default;
  explicit ProbabilityVector(std::vector<double> w);
  static ProbabilityVector uniform(std::size_t n);
  static ProbabilityVector point_mass(std::size_t n, std::size_t at);

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  const std::vector<double>& weights() const { return w_; }

 private:
  std::vector<double> w_;
};

// State x action table of Q values, row-major.
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
      : nx_(n_states), na_(n_actions), v_(n_states * n_actions, fill) {}

  std::size_t n_states() const { return nx_; }
  std::size_t n_actions() const { return na_; }
  double& operator()(std::size_t x, std::size_t a) { return v_[x * na_ + a]; }
  double operator()(std::size_t x, std::size_t a) const { return v_[x * na_ + a]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  // argmin over actions, lowest index wins ties
  std::size_t greedy_action(std::size_t x) const;
  double min_over_actions(std::size_t x) const;

 private:
  std::size_t nx_ = 0, na_ = 0;
  std::vector<double> v_;
};

// Deterministic stationary policy: one action index per state.
struct Policy {
  std::vector<std::size_t> action_of;
  std::size_t size() const { return action_of.size(); }
  bool operator==(const Policy&) const = default;
};

// Small dense row-major matrix; rows of transition matrices are
// row-stochastic by construction at the call sites that build them.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// One-step transition kernel family p(.|x, a, mu). eval_into writes the row
// for (x, a, mu) into out (size n_states). mu_dependent=false promises the
// row does not read mu, which lets fixed-point oracles use a direct
// stationary-distribution solve.
struct KernelFamily {
  std::function<void(std::size_t x, std::size_t a, const ProbabilityVector& mu,
                     std::span<double> out)>
      eval_fn;
  bool mu_dependent = true;

  void eval_into(std::size_t x, std::size_t a, const ProbabilityVector& mu,
                 std::span<double> out) const {
    eval_fn(x, a, mu, out);
  }
  ProbabilityVector eval(std::size_t x, std::size_t a, const ProbabilityVector& mu) const;
};

using CostFn =
    std::function<double(std::size_t x, std::size_t a, const ProbabilityVector& mu)>;

// Full problem instance: spaces, running cost f(x,a,mu), kernel, and the
// discounted-time parameters (discount factor per step is e^{-gamma h}).
struct ProblemSpec {
  StateSpace states;
  ActionSpace actions;
  CostFn cost;
  KernelFamily kernel;
  double gamma = 1.0;
  double h = 0.1;

  std::size_t n_states() const { return states.size(); }
  std::size_t n_actions() const { return actions.size(); }
  double discount() const { return std::exp(-gamma * h); }
  // 1 - e^{-gamma h}, computed without cancellation
  double one_minus_discount() const { return -std::expm1(-gamma * h); }
  void validate() const;  // throws ConfigError on structural problems
};

struct LearningRates {
  double rho_mu = 0.0;
  double rho_q = 0.0;
  void validate() const;  // nonnegative, not both zero
};

// ---- operators ----

// argmin_a q(x,a) per state, lowest index on ties
Policy greedy_policy(const QTable& q);

// Row-stochastic matrix M[x][x'] = p(x'|x, pi(x), mu)
Matrix induced_transition(const ProblemSpec& spec, const Policy& pi,
                          const ProbabilityVector& mu);

// Mean-field drift: (mu P^{Q,mu})(x') - mu(x'), entries sum to 0
std::vector<double> op_P(const ProblemSpec& spec, const QTable& q,
                         const ProbabilityVector& mu);

// Bellman residual: h f(x,a,mu) + e^{-gamma h} sum_x' p(x'|x,a,mu) min_a' Q(x',a') - Q(x,a)
QTable op_T(const ProblemSpec& spec, const QTable& q, const ProbabilityVector& mu);

// Total variation distance = (1/2) l1 between equal-length vectors
double tv_distance(const ProbabilityVector& a, const ProbabilityVector& b);
double tv_distance(std::span<const double> a, std::span<const double> b);

// sup norms
double sup_norm(const QTable& q);
double sup_norm(std::span<const double> v);
double sup_norm_diff(const QTable& a, const QTable& b);

// l1 norm of a vector (used for row-difference bounds, which are full l1)
double l1_norm(std::span<const double> v);

}  // namespace mfq
