#include "mfq/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>

#include "nlohmann/json.hpp"

namespace mfq::io {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // prefer the shortest representation that round-trips
  for (int prec = 1; prec <= 16; ++prec) {
    char tmp[40];
    std::snprintf(tmp, sizeof(tmp), "%.*g", prec, v);
    if (std::strtod(tmp, nullptr) == v) return tmp;
  }
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write file: " + file.string());
  return out;
}

void write_comments(std::ofstream& out, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << "\n";
}

void write_schema_header(std::ofstream& out, std::size_t n_states) {
  out << "k,lyapunov,q_gap,mu_gap,res_T_sup,res_P_l1";
  for (std::size_t i = 0; i < n_states; ++i) out << ",mu_" << i;
  out << "\n";
}

}  // namespace

void write_trajectory_csv(const std::filesystem::path& file,
                          const std::vector<engine::RecordRow>& rows,
                          std::size_t n_states,
                          const std::vector<std::string>& header_comments) {
  auto out = open_out(file);
  write_comments(out, header_comments);
  write_schema_header(out, n_states);
  for (const auto& r : rows) {
    out << r.k << ',' << format_double(r.lyapunov) << ',' << format_double(r.q_gap)
        << ',' << format_double(r.mu_gap) << ',' << format_double(r.res_T_sup) << ','
        << format_double(r.res_P_tv);
    for (std::size_t i = 0; i < n_states; ++i) out << ',' << format_double(r.mu[i]);
    out << "\n";
  }
}

void write_train_csv(const std::filesystem::path& file,
                     const std::vector<learner::TrainRow>& rows, std::size_t n_states,
                     const std::vector<std::string>& header_comments) {
  auto out = open_out(file);
  write_comments(out, header_comments);
  write_schema_header(out, n_states);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows) {
    out << r.episode << ',' << format_double(nan) << ',' << format_double(nan) << ','
        << format_double(nan) << ',' << format_double(r.res_T_sup) << ','
        << format_double(r.res_P_tv);
    for (std::size_t i = 0; i < n_states; ++i)
      out << ',' << format_double(r.mu_terminal[i]);
    out << "\n";
  }
}

void write_toy_csv(const std::filesystem::path& file,
                   const std::vector<engine::ToyState>& traj, std::size_t record_every,
                   std::size_t iterations,
                   const std::vector<std::string>& header_comments) {
  auto out = open_out(file);
  write_comments(out, header_comments);
  out << "k,q,mu\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const std::size_t k = (i + 1 == traj.size()) ? iterations : i * record_every;
    out << k << ',' << format_double(traj[i].q) << ',' << format_double(traj[i].mu)
        << "\n";
  }
}

void write_certificate_csv(const std::filesystem::path& file,
                           const std::vector<CertificateRow>& rows,
                           const std::vector<std::string>& header_comments) {
  auto out = open_out(file);
  write_comments(out, header_comments);
  out << "k,L,q_gap,mu_gap,bound_value,slack\n";
  for (const auto& r : rows)
    out << r.k << ',' << format_double(r.lyapunov) << ',' << format_double(r.q_gap)
        << ',' << format_double(r.mu_gap) << ',' << format_double(r.bound_value) << ','
        << format_double(r.slack) << "\n";
}

bool csv_bodies_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
  auto body = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read file: " + p.string());
    std::string line, out;
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] == '#') continue;
      out += line;
      out += '\n';
    }
    return out;
  };
  return body(a) == body(b);
}

// ---- checkpoints ----

Checkpoint make_learner_checkpoint(const ProblemSpec& spec,
                                   const learner::LearnerState& st) {
  Checkpoint c;
  c.kind = "learner";
  c.state_labels = spec.states.labels;
  c.action_labels = spec.actions.labels;
  c.q = st.q;
  c.mu_per_step = st.mu_per_step;
  c.episode = st.episode;
  c.rng_state = st.rng.serialize();
  return c;
}

Checkpoint make_oracle_checkpoint(const ProblemSpec& spec, const QTable& q,
                                  const ProbabilityVector& mu, double res_T_sup,
                                  double res_P_tv) {
  Checkpoint c;
  c.kind = "oracle";
  c.state_labels = spec.states.labels;
  c.action_labels = spec.actions.labels;
  c.q = q;
  c.mu_per_step = {mu};
  c.res_T_sup = res_T_sup;
  c.res_P_tv = res_P_tv;
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& file) {
  json doc;
  doc["kind"] = c.kind;
  doc["states"] = c.state_labels;
  doc["actions"] = c.action_labels;
  json q_rows = json::array();
  for (std::size_t x = 0; x < c.q.n_states(); ++x) {
    json row = json::array();
    for (std::size_t a = 0; a < c.q.n_actions(); ++a) row.push_back(c.q(x, a));
    q_rows.push_back(row);
  }
  doc["q"] = q_rows;
  json mus = json::array();
  for (const auto& mu : c.mu_per_step) mus.push_back(mu.weights());
  doc["mu_per_step"] = mus;
  if (c.kind == "learner") {
    doc["episode"] = c.episode;
    doc["rng_state"] = c.rng_state;
  } else {
    doc["residuals"]["res_T_sup"] = c.res_T_sup.value_or(0.0);
    doc["residuals"]["res_P_tv"] = c.res_P_tv.value_or(0.0);
  }
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write checkpoint: " + file.string());
  out << doc.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open checkpoint: " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint " + file.string() + ": " + e.what());
  }
  Checkpoint c;
  c.kind = doc.at("kind").get<std::string>();
  if (c.kind != "learner" && c.kind != "oracle")
    throw ConfigError("checkpoint: unknown kind '" + c.kind + "'");
  c.state_labels = doc.at("states").get<std::vector<double>>();
  c.action_labels = doc.at("actions").get<std::vector<double>>();
  const auto& q_rows = doc.at("q");
  const std::size_t n = c.state_labels.size(), na = c.action_labels.size();
  if (q_rows.size() != n) throw ConfigError("checkpoint: q row count mismatch");
  c.q = QTable(n, na);
  for (std::size_t x = 0; x < n; ++x) {
    if (q_rows[x].size() != na) throw ConfigError("checkpoint: q column count mismatch");
    for (std::size_t a = 0; a < na; ++a) c.q(x, a) = q_rows[x][a].get<double>();
  }
  for (const auto& m : doc.at("mu_per_step"))
    c.mu_per_step.emplace_back(m.get<std::vector<double>>());
  if (c.mu_per_step.empty()) throw ConfigError("checkpoint: empty mu_per_step");
  if (c.kind == "learner") {
    c.episode = doc.at("episode").get<std::size_t>();
    c.rng_state = doc.at("rng_state").get<std::string>();
  } else if (doc.contains("residuals")) {
    c.res_T_sup = doc["residuals"].at("res_T_sup").get<double>();
    c.res_P_tv = doc["residuals"].at("res_P_tv").get<double>();
  }
  return c;
}

learner::LearnerState restore_learner(const ProblemSpec& spec, const Checkpoint& c) {
  if (c.kind != "learner") throw ConfigError("restore_learner: not a learner checkpoint");
  if (c.state_labels.size() != spec.n_states() ||
      c.action_labels.size() != spec.n_actions())
    throw ConfigError("restore_learner: checkpoint shape does not match problem");
  learner::LearnerState st{c.q, c.mu_per_step, c.episode, learner::Rng(0)};
  st.rng.deserialize(c.rng_state);
  return st;
}

CheckpointDiff checkpoint_diff(const Checkpoint& a, const Checkpoint& b) {
  CheckpointDiff d;
  d.q_sup = sup_norm_diff(a.q, b.q);
  d.mu_tv = tv_distance(a.mu_per_step.back(), b.mu_per_step.back());
  return d;
}

}  // namespace mfq::io
