#include "mfq/cli.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "mfq/core.hpp"
#include "mfq/diagnostics.hpp"
#include "mfq/engine.hpp"
#include "mfq/environments.hpp"
#include "mfq/io.hpp"
#include "mfq/learner.hpp"
#include "mfq/oracles.hpp"

namespace mfq::cli {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
  for (const char* k : required)
    if (!obj.contains(k))
      throw ConfigError(where + ": missing required field '" + k + "'");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || it.key() == k;
    for (const char* k : optional) known = known || it.key() == k;
    if (!known) throw ConfigError(where + ": unknown field '" + it.key() + "'");
  }
}

double get_num(const json& obj, const char* key, const std::string& where) {
  if (!obj.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return obj[key].get<double>();
}

struct GlobalOptions {
  std::string config_path;
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::optional<std::string> env_mu;  // current | previous
  std::optional<std::string> drift;   // displacement | euler
};

struct LoadedConfig {
  json doc;
  ProblemSpec spec;
  bool is_benchmark = false;
  LearningRates rates;
  std::uint64_t seed = 1;
  std::string mode = "deterministic";
};

env::BenchmarkParams benchmark_params_from(const json& prob, const GlobalOptions& g) {
  env::BenchmarkParams p;
  require_keys(prob, "problem", {"kind"},
               {"c1", "c2", "c3", "c4", "c5", "gamma", "sigma", "h", "delta",
                "half_width", "x_c", "drift"});
  if (prob.contains("c1")) p.c1 = get_num(prob, "c1", "problem");
  if (prob.contains("c2")) p.c2 = get_num(prob, "c2", "problem");
  if (prob.contains("c3")) p.c3 = get_num(prob, "c3", "problem");
  if (prob.contains("c4")) p.c4 = get_num(prob, "c4", "problem");
  if (prob.contains("c5")) p.c5 = get_num(prob, "c5", "problem");
  if (prob.contains("gamma")) p.gamma = get_num(prob, "gamma", "problem");
  if (prob.contains("sigma")) p.sigma = get_num(prob, "sigma", "problem");
  if (prob.contains("h")) p.h = get_num(prob, "h", "problem");
  if (prob.contains("delta")) p.delta = get_num(prob, "delta", "problem");
  if (prob.contains("half_width")) p.half_width = get_num(prob, "half_width", "problem");
  if (prob.contains("x_c")) p.x_c = get_num(prob, "x_c", "problem");
  std::string drift = prob.value("drift", "displacement");
  if (g.drift) drift = *g.drift;
  if (drift == "displacement") p.drift = env::DriftMode::displacement;
  else if (drift == "euler") p.drift = env::DriftMode::euler;
  else
    throw ConfigError("problem.drift: expected 'displacement' or 'euler', got '" + drift +
                      "'");
  return p;
}

LoadedConfig load_config(const GlobalOptions& g, bool need_rates = true) {
  if (g.config_path.empty()) throw ConfigError("--config is required for this command");
  std::ifstream in(g.config_path);
  if (!in) throw ConfigError("cannot open config: " + g.config_path);
  LoadedConfig lc;
  try {
    lc.doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  require_keys(lc.doc, "config", {"problem"},
               {"rates", "mode", "seed", "iteration", "episodes", "toy", "oracle",
                "diagnose", "sweep"});

  const json& prob = lc.doc["problem"];
  if (!prob.contains("kind")) throw ConfigError("problem: missing required field 'kind'");
  const std::string kind = prob["kind"].get<std::string>();
  if (kind == "benchmark") {
    lc.spec = env::build_benchmark_spec(benchmark_params_from(prob, g));
    lc.is_benchmark = true;
  } else if (kind == "file") {
    require_keys(prob, "problem", {"kind", "path"});
    if (g.drift) throw ConfigError("--drift only applies to benchmark problems");
    lc.spec = env::load_problem(prob["path"].get<std::string>()).to_spec();
  } else {
    throw ConfigError("problem.kind: expected 'benchmark' or 'file', got '" + kind + "'");
  }

  if (need_rates) {
    if (!lc.doc.contains("rates")) throw ConfigError("config: missing required field 'rates'");
    const json& r = lc.doc["rates"];
    require_keys(r, "rates", {"rho_mu", "rho_q"});
    lc.rates.rho_mu = get_num(r, "rho_mu", "rates");
    lc.rates.rho_q = get_num(r, "rho_q", "rates");
    lc.rates.validate();
  }
  if (lc.doc.contains("seed")) lc.seed = lc.doc["seed"].get<std::uint64_t>();
  if (g.seed) lc.seed = *g.seed;
  if (lc.doc.contains("mode")) {
    lc.mode = lc.doc["mode"].get<std::string>();
    if (lc.mode != "deterministic" && lc.mode != "sampled")
      throw ConfigError("mode: expected 'deterministic' or 'sampled'");
  }
  return lc;
}

engine::IterationConfig iteration_config_from(const LoadedConfig& lc) {
  engine::IterationConfig cfg;
  cfg.rates = lc.rates;
  if (lc.doc.contains("iteration")) {
    const json& it = lc.doc["iteration"];
    require_keys(it, "iteration", {},
                 {"max_iters", "tol_T", "tol_P", "record_every", "record_q"});
    if (it.contains("max_iters")) cfg.max_iters = it["max_iters"].get<std::size_t>();
    if (it.contains("tol_T")) cfg.tol_T = get_num(it, "tol_T", "iteration");
    if (it.contains("tol_P")) cfg.tol_P = get_num(it, "tol_P", "iteration");
    if (it.contains("record_every"))
      cfg.record_every = it["record_every"].get<std::size_t>();
    if (it.contains("record_q")) cfg.record_q = it["record_q"].get<bool>();
  }
  cfg.validate();
  return cfg;
}

learner::EpisodeConfig episode_config_from(const LoadedConfig& lc,
                                           const GlobalOptions& g,
                                           std::size_t* n_episodes) {
  learner::EpisodeConfig cfg;
  cfg.rates = lc.rates;
  *n_episodes = 1000;
  if (lc.doc.contains("episodes")) {
    const json& ep = lc.doc["episodes"];
    require_keys(ep, "episodes", {}, {"count", "steps", "epsilon", "record_every", "env_mu"});
    if (ep.contains("count")) *n_episodes = ep["count"].get<std::size_t>();
    if (ep.contains("steps")) cfg.steps_per_episode = ep["steps"].get<std::size_t>();
    if (ep.contains("epsilon")) cfg.epsilon = get_num(ep, "epsilon", "episodes");
    if (ep.contains("record_every")) cfg.record_every = ep["record_every"].get<std::size_t>();
    if (ep.contains("env_mu")) {
      const std::string v = ep["env_mu"].get<std::string>();
      if (v == "current") cfg.env_mu = learner::EnvMu::current;
      else if (v == "previous") cfg.env_mu = learner::EnvMu::previous;
      else throw ConfigError("episodes.env_mu: expected 'current' or 'previous'");
    }
  }
  if (g.env_mu) {
    if (*g.env_mu == "current") cfg.env_mu = learner::EnvMu::current;
    else if (*g.env_mu == "previous") cfg.env_mu = learner::EnvMu::previous;
    else throw ConfigError("--env-mu: expected 'current' or 'previous'");
  }
  cfg.validate();
  return cfg;
}

oracle::NestedConfig oracle_config_from(const LoadedConfig& lc) {
  oracle::NestedConfig cfg;
  if (lc.doc.contains("oracle")) {
    const json& oc = lc.doc["oracle"];
    require_keys(oc, "oracle", {}, {"tol", "damping", "max_outer", "inner_tol_factor"});
    if (oc.contains("tol")) cfg.tol = get_num(oc, "tol", "oracle");
    if (oc.contains("damping")) cfg.damping = get_num(oc, "damping", "oracle");
    if (oc.contains("max_outer")) cfg.max_outer = oc["max_outer"].get<std::size_t>();
    if (oc.contains("inner_tol_factor"))
      cfg.inner_tol_factor = get_num(oc, "inner_tol_factor", "oracle");
  }
  return cfg;
}

std::vector<std::string> run_header(const LoadedConfig& lc, const std::string& what) {
  std::vector<std::string> h;
  h.push_back("generated: (timestamp omitted for reproducibility)");
  h.push_back(what + ", seed=" + std::to_string(lc.seed) +
              ", rho_mu=" + io::format_double(lc.rates.rho_mu) +
              ", rho_q=" + io::format_double(lc.rates.rho_q));
  h.push_back("res_P_l1 column stores the TV-scale (half-l1) drift residual");
  return h;
}

int cmd_run(const GlobalOptions& g) {
  LoadedConfig lc = load_config(g);
  std::filesystem::create_directories(g.out_dir);
  if (lc.mode == "deterministic") {
    const auto cfg = iteration_config_from(lc);
    const auto rec = engine::run(lc.spec, cfg);
    io::write_trajectory_csv(g.out_dir / "trajectory.csv", rec.rows,
                             lc.spec.n_states(), run_header(lc, "deterministic run"));
    const auto res = oracle::pair_residuals(lc.spec, rec.final_q, rec.final_mu);
    io::save_checkpoint(io::make_oracle_checkpoint(lc.spec, rec.final_q, rec.final_mu,
                                                   res.res_T_sup, res.res_P_tv),
                        g.out_dir / "final_checkpoint.json");
    std::cout << "run: " << rec.iterations << " iterations, converged="
              << (rec.converged ? "yes" : "no") << ", res_T=" << res.res_T_sup
              << ", res_P=" << res.res_P_tv << "\n";
    if (rec.clamped)
      std::cerr << "warning: rho_mu > 1 clamped mu onto the simplex at least once\n";
    return exit_ok;
  }
  // sampled
  std::size_t n_episodes = 0;
  const auto cfg = episode_config_from(lc, g, &n_episodes);
  auto st = learner::init_learner(lc.spec, cfg, lc.seed);
  const auto rec = learner::train(lc.spec, cfg, st, n_episodes);
  io::write_train_csv(g.out_dir / "trajectory.csv", rec.rows, lc.spec.n_states(),
                      run_header(lc, "sampled run"));
  io::save_checkpoint(io::make_learner_checkpoint(lc.spec, st),
                      g.out_dir / "final_checkpoint.json");
  std::cout << "run: " << n_episodes << " episodes of " << cfg.steps_per_episode
            << " steps\n";
  return exit_ok;
}

int cmd_oracle(const GlobalOptions& g) {
  LoadedConfig lc = load_config(g, /*need_rates=*/false);
  std::filesystem::create_directories(g.out_dir);
  const auto cfg = oracle_config_from(lc);
  const auto mfg = oracle::mfg_solve(lc.spec, cfg);
  const auto mfc = oracle::mfc_solve(lc.spec, cfg);
  io::save_checkpoint(io::make_oracle_checkpoint(lc.spec, mfg.q, mfg.mu, mfg.res_T_sup,
                                                 mfg.res_P_tv),
                      g.out_dir / "mfg.json");
  io::save_checkpoint(io::make_oracle_checkpoint(lc.spec, mfc.q, mfc.mu, mfc.res_T_sup,
                                                 mfc.res_P_tv),
                      g.out_dir / "mfc.json");
  std::ofstream rep(g.out_dir / "oracle_report.txt");
  rep << "equilibrium-first (mfg): res_T_sup=" << io::format_double(mfg.res_T_sup)
      << " res_P_tv=" << io::format_double(mfg.res_P_tv)
      << " outer_iterations=" << mfg.outer_iterations << "\n";
  rep << "optimality-first (mfc): res_T_sup=" << io::format_double(mfc.res_T_sup)
      << " res_P_tv=" << io::format_double(mfc.res_P_tv)
      << " outer_iterations=" << mfc.outer_iterations << "\n";
  rep << "pair distance: q_sup=" << io::format_double(sup_norm_diff(mfg.q, mfc.q))
      << " mu_tv=" << io::format_double(tv_distance(mfg.mu, mfc.mu)) << "\n";
  std::cout << "oracle: wrote mfg.json, mfc.json, oracle_report.txt\n";
  return exit_ok;
}

int cmd_toy(const GlobalOptions& g) {
  LoadedConfig lc;
  {  // toy needs no problem section; parse a reduced schema
    if (g.config_path.empty()) throw ConfigError("--config is required for this command");
    std::ifstream in(g.config_path);
    if (!in) throw ConfigError("cannot open config: " + g.config_path);
    try {
      lc.doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    require_keys(lc.doc, "config", {"rates", "toy"}, {"seed"});
    const json& r = lc.doc["rates"];
    require_keys(r, "rates", {"rho_mu", "rho_q"});
    lc.rates.rho_mu = get_num(r, "rho_mu", "rates");
    lc.rates.rho_q = get_num(r, "rho_q", "rates");
    lc.rates.validate();
  }
  const json& t = lc.doc["toy"];
  require_keys(t, "toy", {"q0", "mu0"}, {"tol", "max_iters", "record_every"});
  engine::ToyState s0{get_num(t, "q0", "toy"), get_num(t, "mu0", "toy")};
  const double tol = t.contains("tol") ? get_num(t, "tol", "toy") : 1e-12;
  const std::size_t max_iters =
      t.contains("max_iters") ? t["max_iters"].get<std::size_t>() : 10000000;
  const std::size_t record_every =
      t.contains("record_every") ? t["record_every"].get<std::size_t>() : 1;

  const auto res = engine::toy_run(s0, lc.rates, tol, max_iters, record_every);
  std::filesystem::create_directories(g.out_dir);
  io::write_toy_csv(g.out_dir / "toy.csv", res.trajectory, record_every, res.iterations,
                    {"generated: (timestamp omitted for reproducibility)",
                     "toy run, rho_mu=" + io::format_double(lc.rates.rho_mu) +
                         ", rho_q=" + io::format_double(lc.rates.rho_q)});
  std::cout << "toy: " << res.iterations << " iterations, converged="
            << (res.converged ? "yes" : "no") << ", final q="
            << io::format_double(res.final_state.q)
            << ", mu=" << io::format_double(res.final_state.mu) << "\n";
  return exit_ok;
}

int cmd_diagnose(const GlobalOptions& g) {
  LoadedConfig lc = load_config(g);
  std::filesystem::create_directories(g.out_dir);

  diag::LipschitzConfig dcfg;
  std::optional<double> weight_override;
  bool certificate_run = false;
  engine::IterationConfig run_cfg;
  run_cfg.rates = lc.rates;
  if (lc.doc.contains("diagnose")) {
    const json& d = lc.doc["diagnose"];
    require_keys(d, "diagnose", {},
                 {"n_mu_pairs", "n_q_pairs", "ratio_cap", "flip_probes", "seed",
                  "weight", "certificate_run", "max_iters", "record_every"});
    if (d.contains("n_mu_pairs")) dcfg.n_mu_pairs = d["n_mu_pairs"].get<std::size_t>();
    if (d.contains("n_q_pairs")) dcfg.n_q_pairs = d["n_q_pairs"].get<std::size_t>();
    if (d.contains("ratio_cap")) dcfg.ratio_cap = get_num(d, "ratio_cap", "diagnose");
    if (d.contains("flip_probes")) dcfg.flip_probes = d["flip_probes"].get<bool>();
    if (d.contains("seed")) dcfg.seed = d["seed"].get<std::uint64_t>();
    if (d.contains("weight")) weight_override = get_num(d, "weight", "diagnose");
    if (d.contains("certificate_run")) certificate_run = d["certificate_run"].get<bool>();
    if (d.contains("max_iters")) run_cfg.max_iters = d["max_iters"].get<std::size_t>();
    if (d.contains("record_every"))
      run_cfg.record_every = d["record_every"].get<std::size_t>();
  }

  std::ofstream rep(g.out_dir / "diagnostics_report.txt");
  json constants;

  const auto ac = diag::estimate_lipschitz(lc.spec, dcfg);
  rep << "assumption constants (sampled lower bounds unless noted)\n";
  rep << "  beta            = " << io::format_double(ac.beta) << "\n";
  rep << "  l_p             = " << io::format_double(ac.l_p)
      << (lc.spec.kernel.mu_dependent ? "" : "  (exact: kernel does not read mu)") << "\n";
  rep << "  l_q             = " << io::format_double(ac.l_q) << "\n";
  rep << "  l_f             = " << io::format_double(ac.l_f) << "\n";
  rep << "  f_sup           = " << io::format_double(ac.f_sup) << "\n";
  rep << "  mixing margin   = " << io::format_double(ac.mixing_margin()) << "\n";
  if (ac.greedy_discontinuity)
    rep << "  WARNING: greedy-argmin discontinuity detected; the kernel jumps at\n"
           "  policy switching surfaces, so l_q is not a global Lipschitz constant\n"
           "  and certificates are only meaningful where the greedy policy is\n"
           "  locally constant along the trajectory\n";
  constants["beta"] = ac.beta;
  constants["l_p"] = ac.l_p;
  constants["l_q"] = ac.l_q;
  constants["l_f"] = ac.l_f;
  constants["f_sup"] = ac.f_sup;
  constants["greedy_discontinuity"] = ac.greedy_discontinuity;

  int rc = exit_ok;
  try {
    const double w = weight_override ? *weight_override
                                     : diag::suggest_weight(ac, lc.rates, lc.spec.gamma,
                                                            lc.spec.h);
    const auto tc = diag::certificate_constants(ac, lc.rates, lc.spec.gamma, lc.spec.h, w);
    rep << "contraction certificate (optimistic when constants are lower bounds)\n";
    rep << "  w               = " << io::format_double(tc.w) << "\n";
    rep << "  lambda_mu       = " << io::format_double(tc.lambda_mu) << "\n";
    rep << "  c1              = " << io::format_double(tc.c1) << "\n";
    rep << "  c2              = " << io::format_double(tc.c2) << "\n";
    rep << "  c               = " << io::format_double(tc.c) << "\n";
    rep << "  rate box        = rho_mu < " << io::format_double(tc.rho_mu_max)
        << ", rho_q < " << io::format_double(tc.rho_q_max) << "\n";
    rep << "  asymptotic floor= " << io::format_double(tc.asymptotic_floor) << "\n";
    rep << "  valid           = " << (tc.valid ? "yes" : "no") << "\n";
    constants["certificate"] = {{"w", tc.w},
                                {"lambda_mu", tc.lambda_mu},
                                {"c1", tc.c1},
                                {"c2", tc.c2},
                                {"c", tc.c},
                                {"rho_mu_max", tc.rho_mu_max},
                                {"rho_q_max", tc.rho_q_max},
                                {"asymptotic_floor", tc.asymptotic_floor},
                                {"valid", tc.valid}};

    const auto uq = diag::uniqueness_check(ac, lc.spec.gamma, lc.spec.h);
    rep << "uniqueness factor = " << io::format_double(uq.factor)
        << (uq.unique ? "  (< 1: unique stationary solution)" : "  (>= 1: inconclusive)")
        << "\n";
    constants["uniqueness_factor"] = uq.factor;
    constants["unique"] = uq.unique;

    if (certificate_run && tc.valid) {
      // engine run with the per-step envelope L_k <= (1-c)^k L_0 + floor
      const auto mfg = oracle::mfg_solve(lc.spec);
      const auto mfc = oracle::mfc_solve(lc.spec);
      std::vector<QTable> refs = {mfg.q, mfc.q};
      engine::DiagnosticsHook hook = [&](const QTable& q, const ProbabilityVector& mu) {
        const auto lv = diag::lyapunov(lc.spec, q, mu, refs, tc.w);
        return std::array<double, 3>{lv.value, lv.q_gap, lv.mu_gap};
      };
      const auto rec = engine::run(lc.spec, run_cfg, {}, {}, hook);
      std::vector<io::CertificateRow> rows;
      const double l0 = rec.rows.empty() ? 0.0 : rec.rows.front().lyapunov;
      for (const auto& r : rec.rows) {
        io::CertificateRow cr;
        cr.k = r.k;
        cr.lyapunov = r.lyapunov;
        cr.q_gap = r.q_gap;
        cr.mu_gap = r.mu_gap;
        cr.bound_value = std::pow(1.0 - tc.c, static_cast<double>(r.k)) * l0 +
                         tc.asymptotic_floor;
        cr.slack = cr.bound_value - r.lyapunov;
        rows.push_back(cr);
      }
      io::write_certificate_csv(g.out_dir / "certificate.csv", rows,
                                {"generated: (timestamp omitted for reproducibility)",
                                 "envelope: (1-c)^k L0 + floor"});
      std::size_t violations = 0;
      for (const auto& r : rows)
        if (r.slack < -1e-9) ++violations;
      rep << "certificate run: " << rows.size() << " recorded steps, envelope violations="
          << violations << "\n";
    }
  } catch (const SolveError& e) {
    rep << "certificate unavailable: " << e.what() << "\n";
    constants["certificate_error"] = e.what();
  }

  std::ofstream cj(g.out_dir / "constants.json");
  cj << constants.dump(2) << "\n";
  std::cout << "diagnose: wrote diagnostics_report.txt, constants.json\n";
  return rc;
}

int cmd_sweep(const GlobalOptions& g) {
  LoadedConfig lc = load_config(g);
  std::filesystem::create_directories(g.out_dir);
  if (!lc.doc.contains("sweep")) throw ConfigError("config: missing required field 'sweep'");
  const json& sw = lc.doc["sweep"];
  require_keys(sw, "sweep", {"ratios"}, {"vary"});
  std::vector<double> ratios = sw["ratios"].get<std::vector<double>>();
  if (ratios.empty()) throw ConfigError("sweep.ratios: must be nonempty");
  const std::string vary = sw.value("vary", "fixed_rho_q");
  if (vary != "fixed_rho_q" && vary != "fixed_product")
    throw ConfigError("sweep.vary: expected 'fixed_rho_q' or 'fixed_product'");

  const auto it_cfg = iteration_config_from(lc);
  const auto oc = oracle_config_from(lc);
  const auto mfg = oracle::mfg_solve(lc.spec, oc);
  const auto mfc = oracle::mfc_solve(lc.spec, oc);

  struct Row {
    double ratio = 0.0;
    LearningRates rates;
    bool ok = false;
    std::string error;
    std::size_t iterations = 0;
    bool converged = false;
    double res_t = 0.0, res_p = 0.0;
    double dist_mfg_q = 0.0, dist_mfg_mu = 0.0, dist_mfc_q = 0.0, dist_mfc_mu = 0.0;
    std::size_t between_violations = 0;
    std::vector<double> v;
  };
  std::vector<Row> rows(ratios.size());

  auto job = [&](std::size_t i) {
    Row& row = rows[i];
    row.ratio = ratios[i];
    if (!(row.ratio > 0.0)) {
      row.error = "ratio must be positive";
      return;
    }
    LearningRates r;
    if (vary == "fixed_rho_q") {
      r.rho_q = lc.rates.rho_q;
      r.rho_mu = r.rho_q / row.ratio;
    } else {
      const double product = lc.rates.rho_q * lc.rates.rho_mu;
      r.rho_q = std::sqrt(product * row.ratio);
      r.rho_mu = std::sqrt(product / row.ratio);
    }
    row.rates = r;
    try {
      engine::IterationConfig cfg = it_cfg;
      cfg.rates = r;
      const auto rec = engine::run(lc.spec, cfg);
      row.iterations = rec.iterations;
      row.converged = rec.converged;
      const auto res = oracle::pair_residuals(lc.spec, rec.final_q, rec.final_mu);
      row.res_t = res.res_T_sup;
      row.res_p = res.res_P_tv;
      row.dist_mfg_q = sup_norm_diff(rec.final_q, mfg.q);
      row.dist_mfg_mu = tv_distance(rec.final_mu, mfg.mu);
      row.dist_mfc_q = sup_norm_diff(rec.final_q, mfc.q);
      row.dist_mfc_mu = tv_distance(rec.final_mu, mfc.mu);
      const std::size_t n = lc.spec.n_states();
      row.v.resize(n);
      for (std::size_t x = 0; x < n; ++x) {
        row.v[x] = rec.final_q.min_over_actions(x);
        const double lo = std::min(mfg.q.min_over_actions(x), mfc.q.min_over_actions(x));
        const double hi = std::max(mfg.q.min_over_actions(x), mfc.q.min_over_actions(x));
        if (row.v[x] < lo - 1e-9 || row.v[x] > hi + 1e-9) ++row.between_violations;
      }
      io::write_trajectory_csv(
          g.out_dir / ("sweep_run_" + std::to_string(i) + ".csv"), rec.rows,
          lc.spec.n_states(),
          {"generated: (timestamp omitted for reproducibility)",
           "ratio=" + io::format_double(row.ratio) +
               ", rho_mu=" + io::format_double(r.rho_mu) +
               ", rho_q=" + io::format_double(r.rho_q),
           "res_P_l1 column stores the TV-scale (half-l1) drift residual"});
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  const unsigned workers = std::max(1u, g.workers);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < std::min<std::size_t>(workers, ratios.size()); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < ratios.size(); i = next.fetch_add(1))
        job(i);
    });
  for (auto& t : pool) t.join();

  // summary merged in config order regardless of worker scheduling
  std::ofstream out(g.out_dir / "sweep_summary.csv");
  out << "# generated: (timestamp omitted for reproducibility)\n";
  out << "# between_violations counts states where the terminal value function leaves\n";
  out << "# the band spanned by the two reference solutions\n";
  out << "ratio,rho_q,rho_mu,ok,converged,iterations,res_T_sup,res_P_l1,"
         "dist_mfg_q,dist_mfg_mu,dist_mfc_q,dist_mfc_mu,between_violations";
  for (std::size_t x = 0; x < lc.spec.n_states(); ++x) out << ",v_" << x;
  out << "\n";
  std::size_t failures = 0;
  for (const auto& row : rows) {
    if (!row.ok) ++failures;
    out << io::format_double(row.ratio) << ',' << io::format_double(row.rates.rho_q)
        << ',' << io::format_double(row.rates.rho_mu) << ',' << (row.ok ? 1 : 0) << ','
        << (row.converged ? 1 : 0) << ',' << row.iterations << ','
        << io::format_double(row.res_t) << ',' << io::format_double(row.res_p) << ','
        << io::format_double(row.dist_mfg_q) << ',' << io::format_double(row.dist_mfg_mu)
        << ',' << io::format_double(row.dist_mfc_q) << ','
        << io::format_double(row.dist_mfc_mu) << ',' << row.between_violations;
    for (std::size_t x = 0; x < lc.spec.n_states(); ++x)
      out << ',' << (x < row.v.size() ? io::format_double(row.v[x]) : "nan");
    out << "\n";
  }
  for (const auto& row : rows)
    if (!row.ok)
      std::cerr << "sweep: ratio " << row.ratio << " failed: " << row.error << "\n";
  std::cout << "sweep: " << rows.size() - failures << "/" << rows.size()
            << " runs succeeded, wrote sweep_summary.csv\n";
  return failures == 0 ? exit_ok : exit_partial_failure;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"two-timescale mean-field Q-learning"};
  app.require_subcommand(1);

  GlobalOptions g;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", g.config_path, "path to the JSON config");
    cmd->add_option("--seed", g.seed, "RNG seed override");
    cmd->add_option("--out", g.out_dir, "output directory (default: out)");
    cmd->add_option("--workers", g.workers, "concurrent workers (sweep)");
    cmd->add_option("--env-mu", g.env_mu,
                    "sampled-environment distribution: current|previous");
    cmd->add_option("--drift", g.drift, "benchmark drift mode: displacement|euler");
  };

  CLI::App* c_run = app.add_subcommand("run", "unified two-timescale iteration");
  CLI::App* c_sweep = app.add_subcommand("sweep", "rate-ratio sweep");
  CLI::App* c_oracle = app.add_subcommand("oracle", "reference fixed-point solutions");
  CLI::App* c_diag = app.add_subcommand("diagnose", "assumption constants + certificate");
  CLI::App* c_toy = app.add_subcommand("toy", "scalar toy system");
  for (CLI::App* c : {c_run, c_sweep, c_oracle, c_diag, c_toy}) add_common(c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_config_error;
  }

  try {
    if (c_run->parsed()) return cmd_run(g);
    if (c_sweep->parsed()) return cmd_sweep(g);
    if (c_oracle->parsed()) return cmd_oracle(g);
    if (c_diag->parsed()) return cmd_diagnose(g);
    if (c_toy->parsed()) return cmd_toy(g);
    return exit_config_error;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numerical_error;
  } catch (const SolveError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numerical_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical_error;
  }
}

}  // namespace mfq::cli
