#include "mfq/core.hpp"

#include <algorithm>
#include <cmath>

namespace mfq {

ProbabilityVector::ProbabilityVector(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw ConfigError("ProbabilityVector: empty weight vector");
  double sum = 0.0;
  for (double& v : w_) {
    if (!std::isfinite(v)) throw ConfigError("ProbabilityVector: non-finite weight");
    if (v < 0.0) {
      if (v < -1e-12) throw ConfigError("ProbabilityVector: negative weight");
      v = 0.0;
    }
    sum += v;
  }
  if (sum <= 0.0) throw ConfigError("ProbabilityVector: weights sum to zero");
  for (double& v : w_) v /= sum;
}

ProbabilityVector ProbabilityVector::uniform(std::size_t n) {
  return ProbabilityVector(std::vector<double>(n, 1.0));
}

ProbabilityVector ProbabilityVector::point_mass(std::size_t n, std::size_t at) {
  if (at >= n) throw ConfigError("ProbabilityVector::point_mass: index out of range");
  std::vector<double> w(n, 0.0);
  w[at] = 1.0;
  return ProbabilityVector(std::move(w));
}

std::size_t QTable::greedy_action(std::size_t x) const {
  std::size_t best = 0;
  double best_v = v_[x * na_];
  for (std::size_t a = 1; a < na_; ++a) {
    double v = v_[x * na_ + a];
    if (v < best_v) {  // strict: lowest index wins ties
      best_v = v;
      best = a;
    }
  }
  return best;
}

double QTable::min_over_actions(std::size_t x) const {
  double best = v_[x * na_];
  for (std::size_t a = 1; a < na_; ++a) best = std::min(best, v_[x * na_ + a]);
  return best;
}

ProbabilityVector KernelFamily::eval(std::size_t x, std::size_t a,
                                     const ProbabilityVector& mu) const {
  std::vector<double> row(mu.size(), 0.0);
  eval_fn(x, a, mu, row);
  return ProbabilityVector(std::move(row));
}

void ProblemSpec::validate() const {
  if (states.size() == 0) throw ConfigError("ProblemSpec: empty state space");
  if (actions.size() == 0) throw ConfigError("ProblemSpec: empty action space");
  if (!cost) throw ConfigError("ProblemSpec: missing cost function");
  if (!kernel.eval_fn) throw ConfigError("ProblemSpec: missing kernel");
  if (!(gamma > 0.0)) throw ConfigError("ProblemSpec: gamma must be positive");
  if (!(h > 0.0)) throw ConfigError("ProblemSpec: h must be positive");
  // spot-check kernel rows are distributions
  ProbabilityVector mu = ProbabilityVector::uniform(states.size());
  std::vector<double> row(states.size());
  for (std::size_t x : {std::size_t{0}, states.size() - 1}) {
    kernel.eval_into(x, 0, mu, row);
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= -1e-12)) throw ConfigError("ProblemSpec: kernel row has negative mass");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("ProblemSpec: kernel row not stochastic within 1e-9");
  }
}

void LearningRates::validate() const {
  if (rho_mu < 0.0 || rho_q < 0.0) throw ConfigError("LearningRates: negative rate");
  if (rho_mu == 0.0 && rho_q == 0.0)
    throw ConfigError("LearningRates: both rates zero");
}

Policy greedy_policy(const QTable& q) {
  Policy pi;
  pi.action_of.resize(q.n_states());
  for (std::size_t x = 0; x < q.n_states(); ++x) pi.action_of[x] = q.greedy_action(x);
  return pi;
}

Matrix induced_transition(const ProblemSpec& spec, const Policy& pi,
                          const ProbabilityVector& mu) {
  const std::size_t n = spec.n_states();
  if (pi.size() != n) throw ConfigError("induced_transition: policy size mismatch");
  Matrix m(n, n);
  for (std::size_t x = 0; x < n; ++x)
    spec.kernel.eval_into(x, pi.action_of[x], mu,
                          std::span<double>(m.data.data() + x * n, n));
  return m;
}

std::vector<double> op_P(const ProblemSpec& spec, const QTable& q,
                         const ProbabilityVector& mu) {
  const std::size_t n = spec.n_states();
  std::vector<double> out(n, 0.0);
  std::vector<double> row(n);
  for (std::size_t x = 0; x < n; ++x) {
    const double mass = mu[x];
    spec.kernel.eval_into(x, q.greedy_action(x), mu, row);
    for (std::size_t y = 0; y < n; ++y) out[y] += mass * row[y];
  }
  for (std::size_t y = 0; y < n; ++y) out[y] -= mu[y];
  return out;
}

QTable op_T(const ProblemSpec& spec, const QTable& q, const ProbabilityVector& mu) {
  const std::size_t n = spec.n_states(), na = spec.n_actions();
  const double disc = spec.discount();
  std::vector<double> vmin(n);
  for (std::size_t x = 0; x < n; ++x) vmin[x] = q.min_over_actions(x);
  QTable out(n, na);
  std::vector<double> row(n);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t a = 0; a < na; ++a) {
      spec.kernel.eval_into(x, a, mu, row);
      double exp_next = 0.0;
      for (std::size_t y = 0; y < n; ++y) exp_next += row[y] * vmin[y];
      out(x, a) = spec.h * spec.cost(x, a, mu) + disc * exp_next - q(x, a);
    }
  }
  return out;
}

double tv_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("tv_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

double tv_distance(const ProbabilityVector& a, const ProbabilityVector& b) {
  return tv_distance(std::span<const double>(a.weights()),
                     std::span<const double>(b.weights()));
}

double sup_norm(const QTable& q) {
  return sup_norm(std::span<const double>(q.values()));
}

double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double sup_norm_diff(const QTable& a, const QTable& b) {
  if (a.n_states() != b.n_states() || a.n_actions() != b.n_actions())
    throw ConfigError("sup_norm_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

}  // namespace mfq
