#include "mfq/environments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "nlohmann/json.hpp"

namespace mfq::env {

using nlohmann::json;

namespace {

std::vector<double> grid(double center, double half_width, double delta) {
  // inclusive symmetric grid; count from rounded span to dodge fp drift
  const auto steps = static_cast<std::size_t>(std::llround(2.0 * half_width / delta));
  std::vector<double> g(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) g[i] = center - half_width + delta * i;
  return g;
}

// Phi(b) - Phi(a) for N(0,1), via the tail with less cancellation
double gaussian_interval_mass(double a, double b) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  if (a + b >= 0.0)  // both edges right of the mean: upper-tail form
    return 0.5 * (std::erfc(a * inv_sqrt2) - std::erfc(b * inv_sqrt2));
  return 0.5 * (std::erfc(-b * inv_sqrt2) - std::erfc(-a * inv_sqrt2));
}

}  // namespace

std::size_t BenchmarkParams::n_states() const {
  return static_cast<std::size_t>(std::llround(2.0 * half_width / delta)) + 1;
}

std::size_t BenchmarkParams::n_actions() const { return n_states(); }

void BenchmarkParams::validate() const {
  if (!(delta > 0.0)) throw ConfigError("BenchmarkParams: delta must be positive");
  if (!(half_width > 0.0)) throw ConfigError("BenchmarkParams: half_width must be positive");
  if (!(gamma > 0.0)) throw ConfigError("BenchmarkParams: gamma must be positive");
  if (!(h > 0.0)) throw ConfigError("BenchmarkParams: h must be positive");
  if (sigma < 0.0) throw ConfigError("BenchmarkParams: sigma must be nonnegative");
  const double steps = 2.0 * half_width / delta;
  if (std::abs(steps - std::llround(steps)) > 1e-9)
    throw ConfigError("BenchmarkParams: grid width must be a multiple of delta");
}

double benchmark_cost(const BenchmarkParams& p, double x, double a,
                      const ProbabilityVector& mu, const StateSpace& states) {
  double m = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) m += states.labels[i] * mu[i];
  const double dx1 = x - p.c2 * m;
  const double dx2 = x - p.c4;
  return 0.5 * a * a + p.c1 * dx1 * dx1 + p.c3 * dx2 * dx2 + p.c5 * m * m;
}

KernelFamily build_sde_kernel(const BenchmarkParams& p, const StateSpace& states,
                              const ActionSpace& actions) {
  const std::size_t n = states.size(), na = actions.size();
  const double sd = p.sigma * std::sqrt(p.h);
  auto table = std::make_shared<std::vector<double>>(n * na * n, 0.0);

  if (sd == 0.0)
    std::cerr << "warning: sigma^2 h = 0, kernel degenerates to nearest-bin\n";

  for (std::size_t xi = 0; xi < n; ++xi) {
    const double x = states.labels[xi];
    for (std::size_t ai = 0; ai < na; ++ai) {
      const double a = actions.labels[ai];
      const double mean =
          (p.drift == DriftMode::displacement) ? x + a : x + a * p.h;
      double* row = table->data() + (xi * na + ai) * n;
      if (sd == 0.0) {
        // deterministic: all mass on the nearest bin
        std::size_t best = 0;
        double bd = std::abs(states.labels[0] - mean);
        for (std::size_t y = 1; y < n; ++y) {
          double d = std::abs(states.labels[y] - mean);
          if (d < bd) { bd = d; best = y; }
        }
        row[best] = 1.0;
        continue;
      }
      double sum = 0.0;
      for (std::size_t y = 0; y < n; ++y) {
        const double lo = (states.labels[y] - 0.5 * p.delta - mean) / sd;
        const double hi = (states.labels[y] + 0.5 * p.delta - mean) / sd;
        row[y] = gaussian_interval_mass(lo, hi);
        sum += row[y];
      }
      if (sum <= 0.0) {
        // mean is so far outside the grid that every bin underflows; fall
        // back to the nearest boundary bin
        row[mean < states.labels[0] ? 0 : n - 1] = 1.0;
        continue;
      }
      for (std::size_t y = 0; y < n; ++y) row[y] /= sum;
    }
  }

  KernelFamily k;
  k.mu_dependent = false;
  k.eval_fn = [table, n, na](std::size_t x, std::size_t a, const ProbabilityVector&,
                             std::span<double> out) {
    const double* row = table->data() + (x * na + a) * n;
    std::copy(row, row + n, out.begin());
  };
  return k;
}

ProblemSpec build_benchmark_spec(const BenchmarkParams& p) {
  p.validate();
  ProblemSpec spec;
  spec.states.labels = grid(p.x_c, p.half_width, p.delta);
  spec.actions.labels = grid(0.0, p.half_width, p.delta);
  spec.gamma = p.gamma;
  spec.h = p.h;
  spec.kernel = build_sde_kernel(p, spec.states, spec.actions);
  const BenchmarkParams params = p;
  const StateSpace states = spec.states;
  spec.cost = [params, states](std::size_t x, std::size_t a,
                               const ProbabilityVector& mu) {
    return benchmark_cost(params, states.labels[x],
                          params.delta * static_cast<double>(a) - params.half_width,
                          mu, states);
  };
  spec.validate();
  return spec;
}

// ---- tabular problems ----

double moment_value(const MomentRef& m, const std::vector<double>& states,
                    const ProbabilityVector& mu) {
  if (m.kind == "mean") {
    double s = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) s += states[i] * mu[i];
    return s;
  }
  if (m.kind == "second_moment") {
    double s = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) s += states[i] * states[i] * mu[i];
    return s;
  }
  if (m.kind == "mass_at") {
    for (std::size_t i = 0; i < states.size(); ++i)
      if (std::abs(states[i] - m.at) <= 1e-9) return mu[i];
    throw ConfigError("moment mass_at: no state with label " + std::to_string(m.at));
  }
  throw ConfigError("unknown moment kind '" + m.kind + "'");
}

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

std::vector<double> parse_number_list(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    out.push_back(v.get<double>());
  }
  return out;
}

// nested array -> flat row-major with shape check
std::vector<double> parse_table(const json& arr, std::size_t rows, std::size_t cols,
                                const std::string& where) {
  if (!arr.is_array() || arr.size() != rows)
    throw ConfigError(where + ": expected " + std::to_string(rows) + " rows");
  std::vector<double> out;
  out.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = parse_number_list(arr[r], where + "[" + std::to_string(r) + "]");
    if (row.size() != cols)
      throw ConfigError(where + "[" + std::to_string(r) + "]: expected " +
                        std::to_string(cols) + " entries, got " +
                        std::to_string(row.size()));
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

MomentRef parse_moment(const json& obj, const std::string& where) {
  MomentRef m;
  m.kind = obj.at("moment").get<std::string>();
  if (m.kind != "mean" && m.kind != "second_moment" && m.kind != "mass_at")
    throw ConfigError(where + ": unknown moment '" + m.kind + "'");
  if (m.kind == "mass_at") {
    if (!obj.contains("at")) throw ConfigError(where + ": mass_at requires 'at'");
    m.at = obj.at("at").get<double>();
  } else if (obj.contains("at")) {
    throw ConfigError(where + ": 'at' only valid for mass_at");
  }
  return m;
}

json moment_to_json(const MomentRef& m) {
  json j;
  j["moment"] = m.kind;
  if (m.kind == "mass_at") j["at"] = m.at;
  return j;
}

json table_to_json(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
  json arr = json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < cols; ++c) row.push_back(flat[r * cols + c]);
    arr.push_back(row);
  }
  return arr;
}

}  // namespace

void TabularProblem::refresh_flags() {
  kernel_mu_dependent = !perturbations.empty();
  cost_mu_dependent = !cost_terms.empty();
  clamping_possible = false;
  if (!kernel_mu_dependent) return;
  const std::size_t n = n_states(), na = n_actions();
  // probe mesh: every point mass plus uniform
  std::vector<ProbabilityVector> mesh;
  for (std::size_t i = 0; i < n; ++i) mesh.push_back(ProbabilityVector::point_mass(n, i));
  mesh.push_back(ProbabilityVector::uniform(n));
  for (const auto& mu : mesh) {
    std::vector<double> mvals;
    mvals.reserve(perturbations.size());
    for (const auto& t : perturbations) mvals.push_back(moment_value(t.moment, states, mu));
    for (std::size_t r = 0; r < n * na && !clamping_possible; ++r) {
      for (std::size_t y = 0; y < n; ++y) {
        double v = base_rows[r * n + y];
        for (std::size_t j = 0; j < perturbations.size(); ++j)
          v += mvals[j] * perturbations[j].rows[r * n + y];
        if (v < -1e-12 || v > 1.0 + 1e-12) {
          clamping_possible = true;
          break;
        }
      }
    }
  }
}

ProblemSpec TabularProblem::to_spec() const {
  ProblemSpec spec;
  spec.states.labels = states;
  spec.actions.labels = actions;
  spec.gamma = gamma;
  spec.h = h;

  const std::size_t n = n_states(), na = n_actions();
  const auto self = std::make_shared<TabularProblem>(*this);

  spec.cost = [self, na](std::size_t x, std::size_t a, const ProbabilityVector& mu) {
    double f = self->cost_table[x * na + a];
    for (const auto& t : self->cost_terms)
      f += moment_value(t.moment, self->states, mu) * t.coeff[x * na + a];
    return f;
  };

  KernelFamily k;
  k.mu_dependent = !perturbations.empty();
  k.eval_fn = [self, n, na](std::size_t x, std::size_t a, const ProbabilityVector& mu,
                            std::span<double> out) {
    const double* base = self->base_rows.data() + (x * na + a) * n;
    std::copy(base, base + n, out.begin());
    if (!self->perturbations.empty()) {
      for (const auto& t : self->perturbations) {
        const double m = moment_value(t.moment, self->states, mu);
        const double* pr = t.rows.data() + (x * na + a) * n;
        for (std::size_t y = 0; y < n; ++y) out[y] += m * pr[y];
      }
      double sum = 0.0;
      for (std::size_t y = 0; y < n; ++y) {
        out[y] = std::clamp(out[y], 0.0, 1.0);
        sum += out[y];
      }
      if (sum <= 0.0) throw NumericalError("tabular kernel row clamped to zero mass", 0);
      for (std::size_t y = 0; y < n; ++y) out[y] /= sum;
    }
  };
  spec.kernel = std::move(k);
  spec.validate();
  return spec;
}

TabularProblem load_problem(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open problem file: " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("problem file " + file.string() + ": " + e.what());
  }

  require_keys(doc, "problem", {"states", "actions", "gamma", "h", "cost", "kernel"});
  TabularProblem p;
  p.states = parse_number_list(doc["states"], "states");
  p.actions = parse_number_list(doc["actions"], "actions");
  if (p.states.empty()) throw ConfigError("states: must be nonempty");
  if (p.actions.empty()) throw ConfigError("actions: must be nonempty");
  if (!doc["gamma"].is_number()) throw ConfigError("gamma: expected a number");
  if (!doc["h"].is_number()) throw ConfigError("h: expected a number");
  p.gamma = doc["gamma"].get<double>();
  p.h = doc["h"].get<double>();
  if (!(p.gamma > 0.0)) throw ConfigError("gamma: must be positive");
  if (!(p.h > 0.0)) throw ConfigError("h: must be positive");

  const std::size_t n = p.n_states(), na = p.n_actions();

  const json& cost = doc["cost"];
  require_keys(cost, "cost", {"table"}, {"terms"});
  p.cost_table = parse_table(cost["table"], n, na, "cost.table");
  if (cost.contains("terms")) {
    std::size_t idx = 0;
    for (const auto& t : cost["terms"]) {
      const std::string where = "cost.terms[" + std::to_string(idx++) + "]";
      require_keys(t, where, {"moment", "coeff_table"}, {"at"});
      TabularProblem::CostTerm term;
      term.moment = parse_moment(t, where);
      term.coeff = parse_table(t["coeff_table"], n, na, where + ".coeff_table");
      p.cost_terms.push_back(std::move(term));
    }
  }

  const json& kern = doc["kernel"];
  require_keys(kern, "kernel", {"base_rows"}, {"perturbations"});
  p.base_rows = parse_table(kern["base_rows"], n * na, n, "kernel.base_rows");
  for (std::size_t r = 0; r < n * na; ++r) {
    double sum = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      const double v = p.base_rows[r * n + y];
      if (v < -1e-12)
        throw ConfigError("kernel.base_rows[" + std::to_string(r) + "]: negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("kernel.base_rows[" + std::to_string(r) +
                        "]: row sums to " + std::to_string(sum) +
                        ", not stochastic within 1e-9");
  }
  if (kern.contains("perturbations")) {
    std::size_t idx = 0;
    for (const auto& t : kern["perturbations"]) {
      const std::string where = "kernel.perturbations[" + std::to_string(idx++) + "]";
      require_keys(t, where, {"moment", "rows"}, {"at"});
      TabularProblem::KernelTerm term;
      term.moment = parse_moment(t, where);
      term.rows = parse_table(t["rows"], n * na, n, where + ".rows");
      for (std::size_t r = 0; r < n * na; ++r) {
        double sum = 0.0;
        for (std::size_t y = 0; y < n; ++y) sum += term.rows[r * n + y];
        if (std::abs(sum) > 1e-9)
          throw ConfigError(where + ".rows[" + std::to_string(r) +
                            "]: perturbation row must sum to 0");
      }
      p.perturbations.push_back(std::move(term));
    }
  }

  p.refresh_flags();
  // moment references must resolve against the state labels
  for (const auto& t : p.cost_terms) moment_value(t.moment, p.states, ProbabilityVector::uniform(n));
  for (const auto& t : p.perturbations) moment_value(t.moment, p.states, ProbabilityVector::uniform(n));
  return p;
}

void save_problem(const TabularProblem& p, const std::filesystem::path& file) {
  const std::size_t n = p.n_states(), na = p.n_actions();
  json doc;
  doc["states"] = p.states;
  doc["actions"] = p.actions;
  doc["gamma"] = p.gamma;
  doc["h"] = p.h;
  doc["cost"]["table"] = table_to_json(p.cost_table, n, na);
  if (!p.cost_terms.empty()) {
    json terms = json::array();
    for (const auto& t : p.cost_terms) {
      json jt = moment_to_json(t.moment);
      jt["coeff_table"] = table_to_json(t.coeff, n, na);
      terms.push_back(jt);
    }
    doc["cost"]["terms"] = terms;
  }
  doc["kernel"]["base_rows"] = table_to_json(p.base_rows, n * na, n);
  if (!p.perturbations.empty()) {
    json terms = json::array();
    for (const auto& t : p.perturbations) {
      json jt = moment_to_json(t.moment);
      jt["rows"] = table_to_json(t.rows, n * na, n);
      terms.push_back(jt);
    }
    doc["kernel"]["perturbations"] = terms;
  }
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write problem file: " + file.string());
  out << doc.dump(2) << "\n";
}

}  // namespace mfq::env
