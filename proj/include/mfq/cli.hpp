#pragma once
// Command-line front end. Subcommands:
//   run       unified iteration (deterministic or sampled), trajectory CSV +
//             final checkpoint
//   sweep     rate-ratio sweep with concurrent workers, per-run trajectories
//             + summary CSV
//   oracle    equilibrium-first and optimality-first reference solutions +
//             residual report
//   diagnose  assumption constants, contraction certificate, uniqueness
//             factor; optional certified engine run with per-step envelope
//   toy       scalar toy system trajectory
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 partial
// sweep failure.

namespace mfq::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config_error = 2;
inline constexpr int exit_numerical_error = 3;
inline constexpr int exit_partial_failure = 4;

int cli_main(int argc, const char* const* argv);

}  // namespace mfq::cli
