#include "mfq/learner.hpp"

#include <cmath>
#include <sstream>

namespace mfq::learner {

std::string Rng::serialize() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::deserialize(const std::string& s) {
  std::istringstream is(s);
  is >> gen_;
  if (is.fail()) throw ConfigError("Rng::deserialize: malformed state string");
}

void EpisodeConfig::validate() const {
  rates.validate();
  if (steps_per_episode == 0)
    throw ConfigError("EpisodeConfig: steps_per_episode must be positive");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw ConfigError("EpisodeConfig: epsilon must be in [0,1]");
  if (rates.rho_mu > 1.0)
    throw ConfigError("EpisodeConfig: rho_mu > 1 leaves the simplex");
  if (record_every == 0) throw ConfigError("EpisodeConfig: record_every must be positive");
}

LearnerState init_learner(const ProblemSpec& spec, const EpisodeConfig& cfg,
                          std::uint64_t seed) {
  spec.validate();
  cfg.validate();
  LearnerState st{QTable(spec.n_states(), spec.n_actions(), 0.0),
                  std::vector<ProbabilityVector>(
                      cfg.steps_per_episode + 1,
                      ProbabilityVector::uniform(spec.n_states())),
                  0, Rng(seed)};
  return st;
}

std::size_t epsilon_greedy(Rng& rng, const QTable& q, std::size_t x, double epsilon) {
  const double u = rng.uniform01();
  if (u < epsilon) return rng.uniform_index(q.n_actions());
  return q.greedy_action(x);
}

namespace {

// in-place stochastic-approximation update toward a point mass
void mu_update(std::vector<double>& mu, std::size_t at, double rho) {
  for (double& v : mu) v *= (1.0 - rho);
  mu[at] += rho;
}

}  // namespace

void run_episode(const ProblemSpec& spec, const EpisodeConfig& cfg, LearnerState& st) {
  const std::size_t n = spec.n_states();
  const double disc = spec.discount();
  const std::size_t T = cfg.steps_per_episode;
  if (st.mu_per_step.size() != T + 1)
    throw ConfigError("run_episode: state/config steps_per_episode mismatch");

  std::vector<double> row(n);
  std::size_t x = st.rng.sample(st.mu_per_step[T]);

  for (std::size_t step_n = 0; step_n < T; ++step_n) {
    // (i) update the step-n distribution with the current state
    std::vector<double> mu_prev;  // pre-update copy, only if the env needs it
    if (cfg.env_mu == EnvMu::previous) mu_prev = st.mu_per_step[step_n].weights();
    {
      std::vector<double> w = st.mu_per_step[step_n].weights();
      mu_update(w, x, cfg.rates.rho_mu);
      st.mu_per_step[step_n] = ProbabilityVector(std::move(w));
    }
    const ProbabilityVector& mu_n = st.mu_per_step[step_n];

    // (ii) action
    const std::size_t a = epsilon_greedy(st.rng, st.q, x, cfg.epsilon);

    // (iii) cost observed with the freshly updated mu_n
    const double f = spec.cost(x, a, mu_n);

    // (iv) next state from the kernel at the configured mu
    if (cfg.env_mu == EnvMu::previous) {
      spec.kernel.eval_into(x, a, ProbabilityVector(std::move(mu_prev)), row);
    } else {
      spec.kernel.eval_into(x, a, mu_n, row);
    }
    const std::size_t x_next = st.rng.sample(std::span<const double>(row));

    // (v) Q update with the one-sample target
    const double target = spec.h * f + disc * st.q.min_over_actions(x_next);
    st.q(x, a) += cfg.rates.rho_q * (target - st.q(x, a));

    x = x_next;
  }

  // terminal-index update with X_T, so mu_T tracks the law of the terminal
  // state and seeds the next episode
  {
    std::vector<double> w = st.mu_per_step[T].weights();
    mu_update(w, x, cfg.rates.rho_mu);
    st.mu_per_step[T] = ProbabilityVector(std::move(w));
  }
  ++st.episode;
}

TrainRecord train(const ProblemSpec& spec, const EpisodeConfig& cfg, LearnerState& st,
                  std::size_t n_episodes) {
  spec.validate();
  cfg.validate();
  TrainRecord rec;
  QTable q_prev = st.q;
  ProbabilityVector mu_prev = st.mu_terminal();

  auto record = [&]() {
    TrainRow row;
    row.episode = st.episode;
    row.q_change_sup = sup_norm_diff(st.q, q_prev);
    row.mu_T_drift_tv = tv_distance(st.mu_terminal(), mu_prev);
    const auto drift = op_P(spec, st.q, st.mu_terminal());
    row.res_P_tv = 0.5 * l1_norm(drift);
    row.res_T_sup = sup_norm(op_T(spec, st.q, st.mu_terminal()));
    row.mu_terminal = st.mu_terminal();
    rec.rows.push_back(std::move(row));
    q_prev = st.q;
    mu_prev = st.mu_terminal();
  };

  for (std::size_t e = 0; e < n_episodes; ++e) {
    run_episode(spec, cfg, st);
    if ((e + 1) % cfg.record_every == 0 || e + 1 == n_episodes) record();
  }
  rec.episodes = n_episodes;
  return rec;
}

}  // namespace mfq::learner
