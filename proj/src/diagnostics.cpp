#include "mfq/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfq/learner.hpp"

namespace mfq::diag {

BetaResult estimate_beta(const Matrix& m) {
  if (m.rows != m.cols || m.rows == 0)
    throw ConfigError("estimate_beta: matrix must be square and nonempty");
  const std::size_t n = m.rows;
  std::vector<double> colmin(n);
  double beta = 0.0;
  for (std::size_t y = 0; y < n; ++y) {
    double mn = m(0, y);
    for (std::size_t x = 1; x < n; ++x) mn = std::min(mn, m(x, y));
    colmin[y] = mn;
    beta += mn;
  }
  if (!(beta > 0.0))
    throw SolveError("estimate_beta: no uniform minorization (beta = 0)");
  std::vector<double> nu = colmin;
  for (double& v : nu) v /= beta;
  return BetaResult{beta, ProbabilityVector(std::move(nu))};
}

namespace {

std::vector<ProbabilityVector> mu_probe_mesh(std::size_t n, std::size_t n_random,
                                             learner::Rng& rng) {
  std::vector<ProbabilityVector> mesh;
  for (std::size_t i = 0; i < n; ++i) mesh.push_back(ProbabilityVector::point_mass(n, i));
  mesh.push_back(ProbabilityVector::uniform(n));
  for (std::size_t r = 0; r < n_random; ++r) {
    std::vector<double> w(n);
    for (double& v : w) v = -std::log(1.0 - rng.uniform01());  // exponential -> Dirichlet(1)
    mesh.emplace_back(std::move(w));
  }
  return mesh;
}

QTable random_qtable(std::size_t n, std::size_t na, double amplitude,
                     learner::Rng& rng) {
  QTable q(n, na);
  for (double& v : q.values()) v = amplitude * rng.uniform01();
  return q;
}

}  // namespace

AssumptionConstants estimate_lipschitz(const ProblemSpec& spec,
                                       const LipschitzConfig& cfg) {
  const std::size_t n = spec.n_states(), na = spec.n_actions();
  learner::Rng rng(cfg.seed);
  AssumptionConstants ac;

  const auto mesh = mu_probe_mesh(n, 8, rng);

  // --- l_p and l_f: vary mu at fixed greedy policy / fixed (x,a) ---
  std::vector<double> row1(n), row2(n);
  const QTable q_zero(n, na, 0.0);
  const Policy pi0 = greedy_policy(q_zero);
  for (std::size_t i = 0; i < cfg.n_mu_pairs; ++i) {
    const auto& mu1 = mesh[rng.uniform_index(mesh.size())];
    const auto& mu2 = mesh[rng.uniform_index(mesh.size())];
    const double tv = tv_distance(mu1, mu2);
    if (tv < 1e-14) continue;
    for (std::size_t x = 0; x < n; ++x) {
      if (spec.kernel.mu_dependent) {
        spec.kernel.eval_into(x, pi0.action_of[x], mu1, row1);
        spec.kernel.eval_into(x, pi0.action_of[x], mu2, row2);
        double d = 0.0;
        for (std::size_t y = 0; y < n; ++y) d += std::abs(row1[y] - row2[y]);
        ac.l_p = std::max(ac.l_p, std::min(d / tv, cfg.ratio_cap));
      }
      for (std::size_t a = 0; a < na; ++a) {
        const double df = std::abs(spec.cost(x, a, mu1) - spec.cost(x, a, mu2));
        ac.l_f = std::max(ac.l_f, std::min(df / tv, cfg.ratio_cap));
      }
    }
  }
  if (!spec.kernel.mu_dependent) ac.l_p = 0.0;  // exact, not sampled

  // --- f_sup over the mesh ---
  for (const auto& mu : mesh)
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t a = 0; a < na; ++a)
        ac.f_sup = std::max(ac.f_sup, std::abs(spec.cost(x, a, mu)));

  // --- l_q: vary Q at fixed mu; the greedy kernel only moves on argmin flips ---
  const ProbabilityVector mu_fixed = ProbabilityVector::uniform(n);
  std::vector<QTable> q_probes;
  for (std::size_t i = 0; i < cfg.n_q_pairs; ++i)
    q_probes.push_back(random_qtable(n, na, cfg.q_amplitude, rng));

  auto eval_q_pair = [&](const QTable& qa, const QTable& qb) {
    const double dq = sup_norm_diff(qa, qb);
    if (dq < 1e-14) return;
    const Policy pa = greedy_policy(qa), pb = greedy_policy(qb);
    for (std::size_t x = 0; x < n; ++x) {
      spec.kernel.eval_into(x, pa.action_of[x], mu_fixed, row1);
      spec.kernel.eval_into(x, pb.action_of[x], mu_fixed, row2);
      double d = 0.0;
      for (std::size_t y = 0; y < n; ++y) d += std::abs(row1[y] - row2[y]);
      if (d > 0.0 && pa.action_of[x] != pb.action_of[x]) ac.greedy_discontinuity = true;
      const double ratio = d / dq;
      if (ratio >= cfg.ratio_cap) {
        ac.l_q = cfg.ratio_cap;
        ac.greedy_discontinuity = true;
      } else {
        ac.l_q = std::max(ac.l_q, ratio);
      }
    }
  };

  for (std::size_t i = 0; i + 1 < q_probes.size(); ++i)
    eval_q_pair(q_probes[i], q_probes[i + 1]);

  if (cfg.flip_probes && na >= 2) {
    // straddle an argmin tie with an epsilon-separated pair: identical tables
    // except one entry sits just above/just below the per-state minimum, so
    // the sup distance is epsilon while the greedy kernels differ by a jump
    for (std::size_t i = 0; i < std::min<std::size_t>(q_probes.size(), 8); ++i) {
      std::size_t x_best = 0, a_flip = 0;
      double gap_best = std::numeric_limits<double>::infinity();
      for (std::size_t x = 0; x < n; ++x) {
        const std::size_t a_star = q_probes[i].greedy_action(x);
        for (std::size_t a = 0; a < na; ++a) {
          if (a == a_star) continue;
          const double gap = q_probes[i](x, a) - q_probes[i](x, a_star);
          if (gap < gap_best) {
            gap_best = gap;
            x_best = x;
            a_flip = a;
          }
        }
      }
      QTable qa = q_probes[i], qb = q_probes[i];
      const double base = qa(x_best, qa.greedy_action(x_best));
      qa(x_best, a_flip) = base + 5e-10;
      qb(x_best, a_flip) = base - 5e-10;
      eval_q_pair(qa, qb);
    }
  }

  // --- beta: minimum over the probed greedy induced matrices ---
  double beta = std::numeric_limits<double>::infinity();
  std::vector<QTable> beta_probes = {q_zero};
  for (std::size_t i = 0; i < std::min<std::size_t>(q_probes.size(), 8); ++i)
    beta_probes.push_back(q_probes[i]);
  for (const auto& q : beta_probes) {
    const Matrix m = induced_transition(spec, greedy_policy(q), mu_fixed);
    beta = std::min(beta, estimate_beta(m).beta);  // throws if any probe has beta = 0
  }
  ac.beta = beta;
  ac.beta_provenance = Provenance::lower_bound;
  ac.lipschitz_provenance = Provenance::lower_bound;
  return ac;
}

double estimate_Lf(const ProblemSpec& spec, std::size_t n_pairs, std::uint64_t seed) {
  LipschitzConfig cfg;
  cfg.n_mu_pairs = n_pairs;
  cfg.n_q_pairs = 0;
  cfg.flip_probes = false;
  cfg.seed = seed;
  const std::size_t n = spec.n_states(), na = spec.n_actions();
  learner::Rng rng(seed);
  const auto mesh = mu_probe_mesh(n, 8, rng);
  double lf = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto& mu1 = mesh[rng.uniform_index(mesh.size())];
    const auto& mu2 = mesh[rng.uniform_index(mesh.size())];
    const double tv = tv_distance(mu1, mu2);
    if (tv < 1e-14) continue;
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t a = 0; a < na; ++a)
        lf = std::max(lf, std::abs(spec.cost(x, a, mu1) - spec.cost(x, a, mu2)) / tv);
  }
  return lf;
}

CertificateConstants certificate_constants(const AssumptionConstants& ac,
                                   const LearningRates& rates, double gamma, double h,
                                   double w) {
  const double margin = ac.mixing_margin();
  if (!(margin > 0.0))
    throw SolveError("certificate_constants: 2 beta - 1 - l_p <= 0 (mixing regime violated)");
  if (!(w > 0.0)) throw ConfigError("certificate_constants: weight must be positive");
  const double one_minus_disc = -std::expm1(-gamma * h);  // 1 - e^{-gamma h}
  const double egh_minus_1 = std::expm1(gamma * h);       // e^{gamma h} - 1

  CertificateConstants tc;
  tc.w = w;
  tc.rho_mu_max = 1.0 / margin;
  tc.rho_q_max = 1.0 / one_minus_disc;
  tc.lambda_mu = 1.0 - rates.rho_mu * margin;

  const double cost_coupling = ac.l_f + ac.l_p * ac.f_sup / egh_minus_1;
  tc.c1 = rates.rho_q * (one_minus_disc - cost_coupling * h * ac.l_q / margin) -
          2.0 * tc.lambda_mu * ac.l_q / (w * margin);
  tc.c2 = 1.0 - tc.lambda_mu - w * rates.rho_q * h * cost_coupling;
  tc.c = std::min(tc.c1, tc.c2);

  const bool in_box = rates.rho_mu > 0.0 && rates.rho_mu < tc.rho_mu_max &&
                      rates.rho_q > 0.0 && rates.rho_q < tc.rho_q_max;
  tc.valid = in_box && tc.c > 0.0 && tc.c < 1.0;
  if (tc.c > 0.0)
    tc.asymptotic_floor = 2.0 * h * tc.lambda_mu * ac.l_q * rates.rho_q * ac.f_sup /
                          (tc.c * one_minus_disc * margin);
  return tc;
}

double suggest_weight(const AssumptionConstants& ac, const LearningRates& rates,
                      double gamma, double h) {
  const double margin = ac.mixing_margin();
  if (!(margin > 0.0))
    throw SolveError("suggest_weight: 2 beta - 1 - l_p <= 0 (mixing regime violated)");
  const double one_minus_disc = -std::expm1(-gamma * h);
  const double egh_minus_1 = std::expm1(gamma * h);
  const double lambda_mu = 1.0 - rates.rho_mu * margin;
  const double cost_coupling = ac.l_f + ac.l_p * ac.f_sup / egh_minus_1;

  // c1 > 0 needs w > w_lo; requires the rho_q-side coefficient positive
  const double k1 = one_minus_disc - cost_coupling * h * ac.l_q / margin;
  if (!(k1 > 0.0))
    throw SolveError(
        "suggest_weight: coupling too strong, c1 < 0 for every weight (k1 <= 0)");
  const double w_lo =
      ac.l_q > 0.0 ? 2.0 * lambda_mu * ac.l_q / (rates.rho_q * k1 * margin) : 0.0;
  // c2 > 0 needs w < w_hi
  const double w_hi =
      cost_coupling > 0.0
          ? rates.rho_mu * margin / (rates.rho_q * h * cost_coupling)
          : std::numeric_limits<double>::infinity();

  if (w_lo == 0.0 && std::isinf(w_hi)) return 1.0;
  if (std::isinf(w_hi)) return std::max(2.0 * w_lo, 1.0);
  if (!(w_lo < w_hi)) {
    std::ostringstream os;
    os << "suggest_weight: empty admissible interval, w_lo = " << w_lo
       << " >= w_hi = " << w_hi;
    throw SolveError(os.str());
  }
  const double w_lo_eff = w_lo > 0.0 ? w_lo : 1e-6 * w_hi;
  return std::sqrt(w_lo_eff * w_hi);
}

LyapunovValue lyapunov(const ProblemSpec& spec, const QTable& q,
                       const ProbabilityVector& mu,
                       const std::vector<QTable>& reference_solutions, double w,
                       const oracle::MuFixedPointConfig& mu_cfg) {
  if (reference_solutions.empty())
    throw ConfigError("lyapunov: need at least one reference solution");
  LyapunovValue out;
  out.q_gap = std::numeric_limits<double>::infinity();
  for (const auto& q_star : reference_solutions)
    out.q_gap = std::min(out.q_gap, sup_norm_diff(q, q_star));
  const auto eq = oracle::mu_fixed_point(spec, q, mu_cfg, mu);
  out.mu_gap = tv_distance(mu, eq.mu);
  out.value = w * out.q_gap + out.mu_gap;
  return out;
}

MonitorReport monitor_prop_mu(const std::vector<ProbabilityVector>& mu_path,
                              const ProbabilityVector& mu_eq, double lambda_mu,
                              double slack, double degenerate) {
  if (mu_path.size() < 2)
    throw ConfigError("monitor_prop_mu: need at least two iterates");
  MonitorReport rep;
  for (std::size_t k = 0; k + 1 < mu_path.size(); ++k) {
    const double d_k = tv_distance(mu_path[k], mu_eq);
    const double d_next = tv_distance(mu_path[k + 1], mu_eq);
    if (d_k < degenerate && d_next < degenerate) {
      ++rep.skipped;
      continue;
    }
    MonitorStep s;
    s.k = k;
    s.lhs = d_next;
    s.rhs = lambda_mu * d_k + slack;
    s.slack = s.rhs - s.lhs;
    s.violated = s.lhs > s.rhs;
    if (s.violated) ++rep.violations;
    rep.steps.push_back(s);
  }
  return rep;
}

MonitorReport monitor_prop_q(const std::vector<QTable>& q_path,
                             const std::vector<ProbabilityVector>& mu_path,
                             const QTable& q_star, const ProbabilityVector& mu_star,
                             const AssumptionConstants& ac,
                             const LearningRates& rates, double gamma, double h,
                             double slack) {
  if (q_path.size() < 2) throw ConfigError("monitor_prop_q: need at least two iterates");
  if (q_path.size() != mu_path.size())
    throw ConfigError("monitor_prop_q: Q and mu paths must have equal length");
  const double one_minus_disc = -std::expm1(-gamma * h);
  const double egh_minus_1 = std::expm1(gamma * h);
  const double cost_coupling = ac.l_f + ac.l_p * ac.f_sup / egh_minus_1;
  const double contraction = 1.0 - rates.rho_q * one_minus_disc;

  MonitorReport rep;
  for (std::size_t k = 0; k + 1 < q_path.size(); ++k) {
    MonitorStep s;
    s.k = k;
    s.lhs = sup_norm_diff(q_path[k + 1], q_star);
    const double q_gap = sup_norm_diff(q_path[k], q_star);
    const double mu_gap = tv_distance(mu_path[k], mu_star);
    s.rhs = contraction * q_gap + rates.rho_q * h * mu_gap * cost_coupling + slack;
    s.slack = s.rhs - s.lhs;
    s.violated = s.lhs > s.rhs;
    if (s.violated) ++rep.violations;
    rep.steps.push_back(s);
  }
  return rep;
}

UniquenessResult uniqueness_check(const AssumptionConstants& ac, double gamma,
                                  double h, std::optional<double> q_sup) {
  const double margin = ac.mixing_margin();
  if (!(margin > 0.0))
    throw SolveError("uniqueness_check: 2 beta - 1 - l_p <= 0 (mixing regime violated)");
  const double one_minus_disc = -std::expm1(-gamma * h);
  UniquenessResult out;
  out.q_sup_used = q_sup ? *q_sup : h * ac.f_sup / one_minus_disc;
  out.factor = ac.l_q / margin *
               (h * ac.l_f + std::exp(-gamma * h) * ac.l_p * out.q_sup_used) /
               one_minus_disc;
  out.unique = out.factor < 1.0;
  return out;
}

}  // namespace mfq::diag
