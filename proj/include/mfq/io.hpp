#pragma once
// Artifact serialization: trajectory/summary CSVs and the JSON checkpoint
// format shared by the learner and the oracle solvers. All writers are
// deterministic: same inputs -> byte-identical files. Header comment lines
// start with '#'; comparison utilities skip them so annotated copies still
// compare equal on the data body.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfq/core.hpp"
#include "mfq/engine.hpp"
#include "mfq/learner.hpp"

namespace mfq::io {

// shortest round-trip decimal representation
std::string format_double(double v);

// Trajectory CSV with the fixed schema
//   k, lyapunov, q_gap, mu_gap, res_T_sup, res_P_l1, mu_0..mu_{n-1}
// res_P_l1 stores the TV-scale (half-l1) drift residual; diagnostics columns
// are nan when no hook was attached. `header_comments` lines are emitted
// prefixed with "# ".
void write_trajectory_csv(const std::filesystem::path& file,
                          const std::vector<engine::RecordRow>& rows,
                          std::size_t n_states,
                          const std::vector<std::string>& header_comments = {});

// Same schema for sampled training records (k = episode; residuals are the
// deterministic operators evaluated at (Q, mu_T); lyapunov columns nan).
void write_train_csv(const std::filesystem::path& file,
                     const std::vector<learner::TrainRow>& rows, std::size_t n_states,
                     const std::vector<std::string>& header_comments = {});

// Toy trajectory: k, q, mu.  Rows sit at multiples of record_every except the
// last, which is the state after `iterations` steps.
void write_toy_csv(const std::filesystem::path& file,
                   const std::vector<engine::ToyState>& traj,
                   std::size_t record_every, std::size_t iterations,
                   const std::vector<std::string>& header_comments = {});

// Per-step certificate summary: k, L, q_gap, mu_gap, bound_value, slack.
struct CertificateRow {
  std::size_t k = 0;
  double lyapunov = 0.0;
  double q_gap = 0.0;
  double mu_gap = 0.0;
  double bound_value = 0.0;
  double slack = 0.0;
};
void write_certificate_csv(const std::filesystem::path& file,
                           const std::vector<CertificateRow>& rows,
                           const std::vector<std::string>& header_comments = {});

// Byte comparison of the data bodies (lines not starting with '#').
bool csv_bodies_equal(const std::filesystem::path& a, const std::filesystem::path& b);

// ---- checkpoints ----

struct Checkpoint {
  std::string kind;  // "learner" | "oracle"
  std::vector<double> state_labels;
  std::vector<double> action_labels;
  QTable q;
  std::vector<ProbabilityVector> mu_per_step;  // oracle: single entry
  std::size_t episode = 0;                     // learner only
  std::string rng_state;                       // learner only
  std::optional<double> res_T_sup;             // oracle only
  std::optional<double> res_P_tv;              // oracle only
};

Checkpoint make_learner_checkpoint(const ProblemSpec& spec,
                                   const learner::LearnerState& st);
Checkpoint make_oracle_checkpoint(const ProblemSpec& spec, const QTable& q,
                                  const ProbabilityVector& mu, double res_T_sup,
                                  double res_P_tv);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

// restore a learner from a checkpoint (validates shape against the spec)
learner::LearnerState restore_learner(const ProblemSpec& spec, const Checkpoint& c);

// sup-norm Q difference and TV distance of the terminal/oracle distributions
struct CheckpointDiff {
  double q_sup = 0.0;
  double mu_tv = 0.0;
};
CheckpointDiff checkpoint_diff(const Checkpoint& a, const Checkpoint& b);

}  // namespace mfq::io
