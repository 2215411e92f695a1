#include "mfq/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mfq::engine {

void IterationConfig::validate() const {
  rates.validate();
  if (max_iters == 0) throw ConfigError("IterationConfig: max_iters must be positive");
  if (tol_T < 0.0 || tol_P < 0.0) throw ConfigError("IterationConfig: negative tolerance");
  if (record_every == 0) throw ConfigError("IterationConfig: record_every must be positive");
}

StepResult step(const ProblemSpec& spec, const QTable& q, const ProbabilityVector& mu,
                const LearningRates& rates) {
  const std::size_t n = spec.n_states();
  // both operators read the same (q, mu) snapshot
  const std::vector<double> drift = op_P(spec, q, mu);
  const QTable resid = op_T(spec, q, mu);

  StepResult out;
  out.res_P_tv = 0.5 * l1_norm(drift);
  out.res_T_sup = sup_norm(resid);

  std::vector<double> mu_next(n);
  bool clamped = false;
  for (std::size_t y = 0; y < n; ++y) {
    mu_next[y] = mu[y] + rates.rho_mu * drift[y];
    if (mu_next[y] < 0.0) {
      mu_next[y] = 0.0;
      clamped = true;
    }
  }
  out.clamped = clamped;  // renormalization happens inside ProbabilityVector
  out.mu = ProbabilityVector(std::move(mu_next));

  out.q = q;
  for (std::size_t i = 0; i < out.q.values().size(); ++i)
    out.q.values()[i] += rates.rho_q * resid.values()[i];
  return out;
}

RunRecord run(const ProblemSpec& spec, const IterationConfig& cfg,
              const std::optional<QTable>& q0,
              const std::optional<ProbabilityVector>& mu0,
              const DiagnosticsHook& diag) {
  spec.validate();
  cfg.validate();
  const std::size_t n = spec.n_states(), na = spec.n_actions();

  QTable q = q0 ? *q0 : QTable(n, na, 0.0);
  ProbabilityVector mu = mu0 ? *mu0 : ProbabilityVector::uniform(n);
  if (q.n_states() != n || q.n_actions() != na)
    throw ConfigError("run: q0 shape mismatch");
  if (mu.size() != n) throw ConfigError("run: mu0 size mismatch");

  RunRecord rec;
  bool warned_clamp = false;

  auto record = [&](std::size_t k, double res_t, double res_p) {
    RecordRow row;
    row.k = k;
    row.res_T_sup = res_t;
    row.res_P_tv = res_p;
    row.mu = mu;
    if (cfg.record_q) row.q = q;
    if (diag) {
      const auto d = diag(q, mu);
      row.lyapunov = d[0];
      row.q_gap = d[1];
      row.mu_gap = d[2];
    }
    rec.rows.push_back(std::move(row));
  };

  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    StepResult s;
    try {
      s = step(spec, q, mu, cfg.rates);
    } catch (const ConfigError& e) {
      throw NumericalError(
          "run: invalid mu iterate at iteration " + std::to_string(k) + ": " + e.what(), k);
    }
    if (s.clamped && !warned_clamp) {
      rec.clamped = true;
      warned_clamp = true;
    }
    const bool done = s.res_T_sup <= cfg.tol_T && s.res_P_tv <= cfg.tol_P;
    if (k % cfg.record_every == 0 || done) record(k, s.res_T_sup, s.res_P_tv);
    if (done) {
      rec.iterations = k;
      rec.converged = true;
      rec.final_q = std::move(q);
      rec.final_mu = std::move(mu);
      return rec;
    }
    for (double v : s.q.values())
      if (!std::isfinite(v))
        throw NumericalError("run: non-finite Q iterate at iteration " + std::to_string(k), k);
    q = std::move(s.q);
    mu = std::move(s.mu);
  }
  // final iterate after max_iters updates
  const StepResult s = step(spec, q, mu, cfg.rates);
  record(cfg.max_iters, s.res_T_sup, s.res_P_tv);
  rec.iterations = cfg.max_iters;
  rec.converged = s.res_T_sup <= cfg.tol_T && s.res_P_tv <= cfg.tol_P;
  rec.final_q = std::move(q);
  rec.final_mu = std::move(mu);
  return rec;
}

// ---- toy ----

double toy_op_P(const ToyState& s) { return (s.q - 1.0) * (s.mu - s.q); }

double toy_op_T(const ToyState& s) { return -(s.mu - 0.5) * (s.mu - s.q + 1.0); }

ToyState toy_step(const ToyState& s, const LearningRates& rates) {
  // simultaneous update from the same snapshot
  return ToyState{s.q + rates.rho_q * toy_op_T(s), s.mu + rates.rho_mu * toy_op_P(s)};
}

ToyRunResult toy_run(const ToyState& s0, const LearningRates& rates, double tol,
                     std::size_t max_iters, std::size_t record_every) {
  rates.validate();
  if (record_every == 0) throw ConfigError("toy_run: record_every must be positive");
  ToyRunResult out;
  ToyState s = s0;
  out.trajectory.push_back(s);
  for (std::size_t k = 0; k < max_iters; ++k) {
    const ToyState next = toy_step(s, rates);
    if (std::abs(next.q) > 1e6 || std::abs(next.mu) > 1e6 || !std::isfinite(next.q) ||
        !std::isfinite(next.mu))
      throw NumericalError("toy_run: divergence guard tripped at iteration " +
                               std::to_string(k) + " (q=" + std::to_string(next.q) +
                               ", mu=" + std::to_string(next.mu) + ")",
                           k);
    const double dq = std::abs(next.q - s.q), dmu = std::abs(next.mu - s.mu);
    s = next;
    if ((k + 1) % record_every == 0) out.trajectory.push_back(s);
    if (dq < tol && dmu < tol) {
      if ((k + 1) % record_every != 0) out.trajectory.push_back(s);
      out.final_state = s;
      out.iterations = k + 1;
      out.converged = true;
      return out;
    }
  }
  if (max_iters % record_every != 0) out.trajectory.push_back(s);
  out.final_state = s;
  out.iterations = max_iters;
  out.converged = false;
  return out;
}

std::array<std::array<double, 2>, 2> toy_jacobian(const ToyState& s) {
  return {{{s.q - 1.0, s.mu - 2.0 * s.q + 1.0},
           {-2.0 * s.mu + s.q - 0.5, s.mu - 0.5}}};
}

double toy_q_of_mu(double mu) { return mu + 1.0; }

double toy_mu_of_q(double q) { return q; }

}  // namespace mfq::engine
