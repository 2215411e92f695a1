#pragma once
// Sampled tabular two-timescale learner: episodes of T inner steps against a
// single-sample environment, with per-step distribution estimates mu_n
// (n = 0..T) updated by stochastic approximation.
//
// Episode k (exact order; one trajectory drives both estimates):
//   X_0 ~ mu_T of the previous episode          [1 RNG draw]
//   for n = 0..T-1:
//     (i)   mu_n += rho_mu (delta(X_n) - mu_n)
//     (ii)  A_n from epsilon-greedy on Q(X_n,.) [1 draw, +1 on the explore branch]
//     (iii) observe cost f(X_n, A_n, mu_n) with the freshly updated mu_n
//     (iv)  X_{n+1} ~ p(.|X_n, A_n, mu_env)     [1 draw]
//     (v)   Q(X_n,A_n) += rho_q (h f + e^{-gamma h} min_a Q(X_{n+1},a) - Q(X_n,A_n))
//   mu_T += rho_mu (delta(X_T) - mu_T)
// The trailing mu_T update uses the terminal state: the estimate family
// covers all T+1 step indices and the next episode warm-starts from mu_T.
// mu_env is mu_n after (i) by default ("current"), or the pre-update value
// ("previous") for strict-sampling comparisons.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mfq/core.hpp"

namespace mfq::learner {

// mt19937_64 with all variate generation derived from raw 64-bit output so
// streams are bit-portable (std distributions are not):
//   uniform01: (x >> 11) * 2^-53 in [0,1)
//   uniform_index(n): floor(uniform01 * n), clamped to n-1
//   sample(p): inverse-CDF scan with one uniform01 draw
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  std::size_t uniform_index(std::size_t n) {
    auto i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }
  std::size_t sample(std::span<const double> p) {
    const double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.size() - 1;
  }
  std::size_t sample(const ProbabilityVector& p) {
    return sample(std::span<const double>(p.weights()));
  }

  std::string serialize() const;
  void deserialize(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

enum class EnvMu { current, previous };

struct EpisodeConfig {
  LearningRates rates;
  std::size_t steps_per_episode = 100;  // T
  double epsilon = 0.1;
  EnvMu env_mu = EnvMu::current;
  std::size_t record_every = 100;  // episodes between diagnostic records
  void validate() const;
};

struct LearnerState {
  QTable q;
  std::vector<ProbabilityVector> mu_per_step;  // mu_n for n = 0..T
  std::size_t episode = 0;
  Rng rng;

  const ProbabilityVector& mu_terminal() const { return mu_per_step.back(); }
};

// Q = 0, every mu_n uniform, episode counter 0, seeded RNG.
LearnerState init_learner(const ProblemSpec& spec, const EpisodeConfig& cfg,
                          std::uint64_t seed);

// Explore with probability epsilon (uniform over actions), otherwise greedy
// argmin with lowest-index tie break. Draw order documented on Rng.
std::size_t epsilon_greedy(Rng& rng, const QTable& q, std::size_t x, double epsilon);

// One full episode in place.
void run_episode(const ProblemSpec& spec, const EpisodeConfig& cfg, LearnerState& st);

struct TrainRow {
  std::size_t episode = 0;
  double q_change_sup = 0.0;   // sup |Q - Q at previous record|
  double mu_T_drift_tv = 0.0;  // TV(mu_T, mu_T at previous record)
  // deterministic-operator residuals evaluated at (Q, mu_T), for diagnostics
  double res_T_sup = 0.0;
  double res_P_tv = 0.0;
  ProbabilityVector mu_terminal;
};

struct TrainRecord {
  std::vector<TrainRow> rows;
  std::size_t episodes = 0;
};

// Run n_episodes episodes, recording every cfg.record_every episodes (always
// including the final episode).
TrainRecord train(const ProblemSpec& spec, const EpisodeConfig& cfg, LearnerState& st,
                  std::size_t n_episodes);

}  // namespace mfq::learner
