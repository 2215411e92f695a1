#include "mfq/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace mfq::oracle {

namespace {

double drift_residual_l1(const Matrix& m, const std::vector<double>& mu) {
  const std::size_t n = m.rows;
  double res = 0.0;
  for (std::size_t y = 0; y < n; ++y) {
    double v = 0.0;
    for (std::size_t x = 0; x < n; ++x) v += mu[x] * m(x, y);
    res += std::abs(v - mu[y]);
  }
  return res;
}

StationaryResult power_iteration(const Matrix& m, double tol, std::size_t max_iters) {
  const std::size_t n = m.rows;
  std::vector<double> mu(n, 1.0 / static_cast<double>(n)), next(n);
  double res = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t x = 0; x < n; ++x) {
      const double w = mu[x];
      for (std::size_t y = 0; y < n; ++y) next[y] += w * m(x, y);
    }
    res = 0.0;
    for (std::size_t y = 0; y < n; ++y) res += std::abs(next[y] - mu[y]);
    mu.swap(next);
    if (res < tol) {
      StationaryResult r{ProbabilityVector(std::move(mu)), true, res};
      return r;
    }
  }
  throw SolveError("stationary_distribution: power iteration did not converge", res,
                   max_iters);
}

}  // namespace

StationaryResult stationary_distribution(const Matrix& m, double tol,
                                         std::size_t max_iters) {
  if (m.rows != m.cols || m.rows == 0)
    throw ConfigError("stationary_distribution: matrix must be square and nonempty");
  const std::size_t n = m.rows;

  // (M^T - I) mu = 0 with the last equation replaced by sum(mu) = 1
  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          m(j, i) - (i == j ? 1.0 : 0.0);
  for (std::size_t j = 0; j < n; ++j) a(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(j)) = 1.0;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  b(static_cast<Eigen::Index>(n - 1)) = 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  bool degenerate = !lu.isInvertible();
  std::vector<double> mu(n, 0.0);
  if (!degenerate) {
    Eigen::VectorXd x = lu.solve(b);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      mu[i] = x(static_cast<Eigen::Index>(i));
      if (!(mu[i] > -1e-9) || !std::isfinite(mu[i])) ok = false;
    }
    if (ok) {
      for (double& v : mu) v = std::max(v, 0.0);
      double sum = 0.0;
      for (double v : mu) sum += v;
      for (double& v : mu) v /= sum;
      const double res = drift_residual_l1(m, mu);
      if (res < std::max(tol, 1e-10))
        return StationaryResult{ProbabilityVector(std::move(mu)), false, res};
    }
    degenerate = true;  // solve produced garbage; treat as degenerate
  }
  (void)degenerate;
  return power_iteration(m, tol, max_iters);
}

StationaryResult mu_fixed_point(const ProblemSpec& spec, const QTable& q,
                                const MuFixedPointConfig& cfg,
                                const std::optional<ProbabilityVector>& mu0) {
  const std::size_t n = spec.n_states();
  const Policy pi = greedy_policy(q);
  if (!spec.kernel.mu_dependent) {
    const Matrix m = induced_transition(spec, pi, ProbabilityVector::uniform(n));
    return stationary_distribution(m, cfg.tol, cfg.max_iters);
  }

  std::vector<double> mu =
      (mu0 ? mu0->weights() : ProbabilityVector::uniform(n).weights());
  std::vector<double> next(n), row(n);
  double res = 0.0;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    ProbabilityVector cur(mu);  // normalizes defensively
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t x = 0; x < n; ++x) {
      spec.kernel.eval_into(x, pi.action_of[x], cur, row);
      const double w = cur[x];
      for (std::size_t y = 0; y < n; ++y) next[y] += w * row[y];
    }
    res = 0.0;
    for (std::size_t y = 0; y < n; ++y) res += std::abs(next[y] - cur[y]);
    if (res < cfg.tol)
      return StationaryResult{cur, false, res};
    for (std::size_t y = 0; y < n; ++y)
      mu[y] = (1.0 - cfg.damping) * cur[y] + cfg.damping * next[y];
  }
  throw SolveError("mu_fixed_point: damped iteration did not converge", res,
                   cfg.max_iters);
}

QTable bellman_solve(const ProblemSpec& spec, const ProbabilityVector& mu,
                     double tol, std::size_t max_iters) {
  const std::size_t n = spec.n_states(), na = spec.n_actions();
  const double disc = spec.discount();
  const double stop = tol * spec.one_minus_discount();

  // freeze the kernel and cost at mu once
  std::vector<double> p(n * na * n), hf(n * na);
  {
    std::vector<double> row(n);
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t a = 0; a < na; ++a) {
        spec.kernel.eval_into(x, a, mu, row);
        std::copy(row.begin(), row.end(), p.begin() + (x * na + a) * n);
        hf[x * na + a] = spec.h * spec.cost(x, a, mu);
      }
  }

  QTable q(n, na, 0.0);
  std::vector<double> vmin(n);
  double step = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t x = 0; x < n; ++x) vmin[x] = q.min_over_actions(x);
    step = 0.0;
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t a = 0; a < na; ++a) {
        const double* row = p.data() + (x * na + a) * n;
        double e = 0.0;
        for (std::size_t y = 0; y < n; ++y) e += row[y] * vmin[y];
        const double nv = hf[x * na + a] + disc * e;
        step = std::max(step, std::abs(nv - q(x, a)));
        q(x, a) = nv;
      }
    if (step < stop) return q;
  }
  throw SolveError("bellman_solve: value iteration did not converge", step, max_iters);
}

PairResiduals pair_residuals(const ProblemSpec& spec, const QTable& q,
                             const ProbabilityVector& mu) {
  PairResiduals r;
  r.res_T_sup = sup_norm(op_T(spec, q, mu));
  const auto drift = op_P(spec, q, mu);
  r.res_P_tv = 0.5 * l1_norm(drift);
  return r;
}

namespace {

// shared outer loop: state is (q, mu); `advance` produces the next candidate
// pair from the current one; damping mixes the damped variable.
template <typename Advance>
FixedPointPair nested_solve(const ProblemSpec& spec, const NestedConfig& cfg,
                            QTable q, ProbabilityVector mu, Advance advance,
                            bool damp_mu) {
  double damping = cfg.damping;
  double prev_res = std::numeric_limits<double>::infinity();
  std::size_t increases = 0;
  FixedPointPair out;
  for (std::size_t it = 1; it <= cfg.max_outer; ++it) {
    auto [q_next, mu_next] = advance(q, mu);
    if (damp_mu) {
      std::vector<double> mixed(mu.size());
      for (std::size_t i = 0; i < mu.size(); ++i)
        mixed[i] = (1.0 - damping) * mu[i] + damping * mu_next[i];
      mu = ProbabilityVector(std::move(mixed));
      q = std::move(q_next);
    } else {
      for (std::size_t i = 0; i < q.values().size(); ++i)
        q.values()[i] = (1.0 - damping) * q.values()[i] + damping * q_next.values()[i];
      mu = std::move(mu_next);
    }
    const PairResiduals res = pair_residuals(spec, q, mu);
    const double joint = std::max(res.res_T_sup, res.res_P_tv);
    if (!std::isfinite(joint)) throw NumericalError("nested solve diverged", it);
    if (joint < cfg.tol) {
      out.q = std::move(q);
      out.mu = std::move(mu);
      out.res_T_sup = res.res_T_sup;
      out.res_P_tv = res.res_P_tv;
      out.outer_iterations = it;
      return out;
    }
    if (joint > prev_res) {
      if (++increases >= 2) {
        damping = std::max(damping * 0.5, 1.0 / 1024.0);
        increases = 0;
      }
    } else {
      increases = 0;
    }
    prev_res = joint;
  }
  throw SolveError("nested solve did not converge", prev_res, cfg.max_outer);
}

}  // namespace

FixedPointPair mfg_solve(const ProblemSpec& spec, const NestedConfig& cfg,
                         const std::optional<ProbabilityVector>& mu0) {
  const std::size_t n = spec.n_states();
  ProbabilityVector mu = mu0 ? *mu0 : ProbabilityVector::uniform(n);
  MuFixedPointConfig mcfg = cfg.mu_cfg;
  mcfg.tol = std::min(mcfg.tol, cfg.tol * cfg.inner_tol_factor);
  const double btol = cfg.tol * cfg.inner_tol_factor;
  QTable q = bellman_solve(spec, mu, btol);
  auto advance = [&](const QTable& /*qc*/, const ProbabilityVector& muc) {
    QTable qn = bellman_solve(spec, muc, btol);
    ProbabilityVector mun = mu_fixed_point(spec, qn, mcfg, muc).mu;
    return std::pair<QTable, ProbabilityVector>(std::move(qn), std::move(mun));
  };
  return nested_solve(spec, cfg, std::move(q), std::move(mu), advance, /*damp_mu=*/true);
}

FixedPointPair mfc_solve(const ProblemSpec& spec, const NestedConfig& cfg,
                         const std::optional<QTable>& q0) {
  const std::size_t n = spec.n_states(), na = spec.n_actions();
  QTable q = q0 ? *q0 : QTable(n, na, 0.0);
  MuFixedPointConfig mcfg = cfg.mu_cfg;
  mcfg.tol = std::min(mcfg.tol, cfg.tol * cfg.inner_tol_factor);
  const double btol = cfg.tol * cfg.inner_tol_factor;
  ProbabilityVector mu = mu_fixed_point(spec, q, mcfg).mu;
  auto advance = [&](const QTable& qc, const ProbabilityVector& /*muc*/) {
    ProbabilityVector mun = mu_fixed_point(spec, qc, mcfg).mu;
    QTable qn = bellman_solve(spec, mun, btol);
    return std::pair<QTable, ProbabilityVector>(std::move(qn), std::move(mun));
  };
  return nested_solve(spec, cfg, std::move(q), std::move(mu), advance, /*damp_mu=*/false);
}

PolicyValue policy_evaluation(const ProblemSpec& spec, const Policy& alpha,
                              const ProbabilityVector& mu, double residual_tol) {
  const std::size_t n = spec.n_states(), na = spec.n_actions();
  if (alpha.size() != n) throw ConfigError("policy_evaluation: policy size mismatch");
  const double disc = spec.discount();
  const Matrix p_alpha = induced_transition(spec, alpha, mu);

  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(n));
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y)
      a(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) -= disc * p_alpha(x, y);
    b(static_cast<Eigen::Index>(x)) = spec.h * spec.cost(x, alpha.action_of[x], mu);
  }
  Eigen::VectorXd v = a.colPivHouseholderQr().solve(b);

  PolicyValue out;
  out.v.resize(n);
  for (std::size_t x = 0; x < n; ++x) out.v[x] = v(static_cast<Eigen::Index>(x));

  // verify the linear system residual
  double res = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    double lhs = out.v[x];
    for (std::size_t y = 0; y < n; ++y) lhs -= disc * p_alpha(x, y) * out.v[y];
    res = std::max(res, std::abs(lhs - b(static_cast<Eigen::Index>(x))));
  }
  if (!(res <= residual_tol))
    throw NumericalError("policy_evaluation: linear solve residual above tolerance", 0);

  out.q = QTable(n, na);
  std::vector<double> row(n);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t aa = 0; aa < na; ++aa) {
      spec.kernel.eval_into(x, aa, mu, row);
      double e = 0.0;
      for (std::size_t y = 0; y < n; ++y) e += row[y] * out.v[y];
      out.q(x, aa) = spec.h * spec.cost(x, aa, mu) + disc * e;
    }
  return out;
}

}  // namespace mfq::oracle
