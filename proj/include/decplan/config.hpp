#pragma once

// Experiment files: YAML in, fully materialized YAML out.
//
//   name: noise-sweep
//   scenario:
//     horizon: 35
//     agents:
//       - {start: [0, 0, 0, 0], goal: [5, 3, 0, 0]}
//   controllers:
//     - {kind: MPC}
//     - {kind: TLQR2, threshold: 0.02}
//   sweep: {axis: epsilon, grid: [0, 0.1, 0.2]}
//   monte_carlo: {episodes: 100, seed_base: 0}
//
// Anything left out takes its default, and save_config() writes every value back so a run
// directory describes itself. Weight matrices are diagonal lists or full nested lists.

#include "decplan/simulation.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace decplan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  ScenarioDefaults params;
  std::vector<AgentTask> agents;

  Scenario build() const { return make_scenario(agents, params); }
};

struct ExperimentConfig {
  std::string name = "experiment";
  ScenarioConfig scenario;
  std::vector<ControllerConfig> controllers;
  SweepAxis axis = SweepAxis::epsilon;
  std::vector<double> grid;
  double epsilon = 0.1;  // noise level when the axis is not epsilon
  int episodes = 100;
  std::uint64_t seed_base = 0;
  SolverSettings solver;
  bool write_episodes = true;
  std::string output = "results";
};

/// Shortest round-trip decimal form, independent of locale.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  if (m.is_null()) return "";
  return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

[[noreturn]] inline void field_error(const std::string& field, const std::string& msg, const YAML::Node& n = {}) {
  throw ConfigError(field + ": " + msg + where(n));
}

inline void known_keys(const YAML::Node& n, const std::string& field, std::initializer_list<const char*> keys) {
  if (!n.IsMap()) field_error(field, "expected a mapping", n);
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& kv : n) {
    const auto k = kv.first.as<std::string>();
    if (!allowed.count(k)) field_error(field.empty() ? k : field + "." + k, "unknown key", kv.first);
  }
}

inline std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) field_error(field, "expected a scalar", n);
  try {
    if constexpr (std::is_same_v<T, double>) {
      const auto s = n.Scalar();
      if (s == "inf" || s == ".inf") return std::numeric_limits<double>::infinity();
    }
    return n.as<T>();
  } catch (const YAML::Exception&) {
    field_error(field, "cannot parse '" + n.Scalar() + "'", n);
  }
}

template <typename T>
void read(const YAML::Node& parent, const std::string& parent_field, const char* key, T& out) {
  const YAML::Node n = parent[key];
  if (n) out = scalar<T>(n, join(parent_field, key));
}

inline Vector vector_of(const YAML::Node& n, const std::string& field, int size) {
  if (!n.IsSequence()) field_error(field, "expected a list of numbers", n);
  if (size >= 0 && static_cast<int>(n.size()) != size)
    field_error(field, "expected " + std::to_string(size) + " numbers, got " + std::to_string(n.size()), n);
  Vector v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = scalar<double>(n[i], field + "[" + std::to_string(i) + "]");
  return v;
}

/// A diagonal list [d1, ..., dn] or a full nested n x n list.
inline Matrix matrix_of(const YAML::Node& n, const std::string& field, int size) {
  if (!n.IsSequence()) field_error(field, "expected a list", n);
  if (n.size() > 0 && n[0].IsSequence()) {
    if (static_cast<int>(n.size()) != size) field_error(field, "expected " + std::to_string(size) + " rows", n);
    Matrix m(size, size);
    for (int r = 0; r < size; ++r)
      m.row(r) = vector_of(n[static_cast<std::size_t>(r)], field + "[" + std::to_string(r) + "]", size).transpose();
    return m;
  }
  return vector_of(n, field, size).asDiagonal();
}

inline bool is_diagonal(const Matrix& m) { return (m - Matrix(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0; }

// --- emitting ---------------------------------------------------------------

inline void emit_number(YAML::Emitter& e, double v) { e << format_number(v); }

inline void emit_vector(YAML::Emitter& e, const Vector& v) {
  e << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index i = 0; i < v.size(); ++i) emit_number(e, v[i]);
  e << YAML::EndSeq;
}

inline void emit_matrix(YAML::Emitter& e, const Matrix& m) {
  if (is_diagonal(m)) {
    emit_vector(e, m.diagonal());
    return;
  }
  e << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index r = 0; r < m.rows(); ++r) emit_vector(e, m.row(r).transpose());
  e << YAML::EndSeq;
}

}  // namespace detail

inline ControllerConfig parse_controller(const YAML::Node& n, const std::string& field) {
  detail::known_keys(n, field, {"kind", "control_horizon", "threshold", "trigger"});
  ControllerConfig c;
  if (!n["kind"]) detail::field_error(field + ".kind", "missing", n);
  try {
    c.kind = controller_kind_from_string(detail::scalar<std::string>(n["kind"], field + ".kind"));
  } catch (const InvalidArgument& e) {
    detail::field_error(field + ".kind", e.what(), n["kind"]);
  }
  detail::read(n, field, "control_horizon", c.control_horizon);
  detail::read(n, field, "threshold", c.threshold);
  if (n["trigger"]) {
    try {
      c.trigger = trigger_mode_from_string(detail::scalar<std::string>(n["trigger"], field + ".trigger"));
    } catch (const InvalidArgument& e) {
      detail::field_error(field + ".trigger", e.what(), n["trigger"]);
    }
  }
  if (c.control_horizon < 1) detail::field_error(field + ".control_horizon", "must be >= 1", n["control_horizon"]);
  if (!(c.threshold >= 0.0) || std::isnan(c.threshold))
    detail::field_error(field + ".threshold", "must be >= 0", n["threshold"]);
  return c;
}

inline ScenarioConfig parse_scenario(const YAML::Node& n) {
  const std::string f = "scenario";
  detail::known_keys(n, f, {"horizon", "phi_max", "car", "limits", "weights", "collision", "noise_covariance", "lqr",
                            "agents"});
  ScenarioConfig sc;
  auto& p = sc.params;
  detail::read(n, f, "horizon", p.horizon);
  detail::read(n, f, "phi_max", p.phi_max);
  if (p.horizon < 1) detail::field_error("scenario.horizon", "must be >= 1", n["horizon"]);
  if (!(p.phi_max > 0.0 && p.phi_max < M_PI / 2)) detail::field_error("scenario.phi_max", "must be in (0, pi/2)", n["phi_max"]);

  if (const auto c = n["car"]) {
    detail::known_keys(c, "scenario.car", {"wheelbase", "dt"});
    detail::read(c, "scenario.car", "wheelbase", p.car.wheelbase);
    detail::read(c, "scenario.car", "dt", p.car.dt);
    if (!(p.car.wheelbase > 0.0)) detail::field_error("scenario.car.wheelbase", "must be > 0", c["wheelbase"]);
    if (!(p.car.dt > 0.0)) detail::field_error("scenario.car.dt", "must be > 0", c["dt"]);
  }
  if (const auto l = n["limits"]) {
    const std::string lf = "scenario.limits";
    detail::known_keys(l, lf, {"u_min", "u_max", "du_max"});
    if (l["u_min"]) p.limits.u_min = detail::vector_of(l["u_min"], lf + ".u_min", 2);
    if (l["u_max"]) p.limits.u_max = detail::vector_of(l["u_max"], lf + ".u_max", 2);
    if (l["du_max"]) p.limits.du_max = detail::vector_of(l["du_max"], lf + ".du_max", 2);
    if (!(p.limits.u_min.array() < p.limits.u_max.array()).all()) detail::field_error(lf, "u_min < u_max required", l);
    if (!(p.limits.u_min.array() <= 0.0).all() || !(p.limits.u_max.array() >= 0.0).all())
      detail::field_error(lf, "limits must straddle zero", l);
    if (!(p.limits.du_max.array() > 0.0).all()) detail::field_error(lf + ".du_max", "must be > 0", l["du_max"]);
  }
  if (const auto w = n["weights"]) {
    const std::string wf = "scenario.weights";
    detail::known_keys(w, wf, {"state", "control", "terminal_scale", "terminal"});
    if (w["state"]) p.state_weight = detail::matrix_of(w["state"], wf + ".state", 4);
    if (w["control"]) p.control_weight = detail::matrix_of(w["control"], wf + ".control", 2);
    detail::read(w, wf, "terminal_scale", p.terminal_scale);
    if (w["terminal"]) p.terminal_weight = detail::matrix_of(w["terminal"], wf + ".terminal", 4);
    if (!(p.terminal_scale >= 0.0)) detail::field_error(wf + ".terminal_scale", "must be >= 0", w["terminal_scale"]);
    const auto psd = [](const Matrix& m, double floor) {
      return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 &&
             Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().minCoeff() > floor;
    };
    if (!psd(p.state_weight, -1e-12)) detail::field_error(wf + ".state", "must be symmetric PSD", w["state"]);
    if (!psd(p.control_weight, 0.0)) detail::field_error(wf + ".control", "must be symmetric PD", w["control"]);
    if (!psd(p.terminal(), -1e-12)) detail::field_error(wf + ".terminal", "must be symmetric PSD", w["terminal"]);
  }
  if (const auto c = n["collision"]) {
    detail::known_keys(c, "scenario.collision", {"enabled", "scale", "r_thresh"});
    detail::read(c, "scenario.collision", "enabled", p.collision_enabled);
    detail::read(c, "scenario.collision", "scale", p.collision.scale);
    detail::read(c, "scenario.collision", "r_thresh", p.collision.r_thresh);
    if (!(p.collision.scale > 0.0)) detail::field_error("scenario.collision.scale", "must be > 0", c["scale"]);
    if (!(p.collision.r_thresh > 0.0)) detail::field_error("scenario.collision.r_thresh", "must be > 0", c["r_thresh"]);
  }
  if (const auto c = n["noise_covariance"]) {
    p.noise_covariance = detail::matrix_of(c, "scenario.noise_covariance", 2);
    try {
      NoiseModel{0.0, p.noise_covariance, p.limits.u_max}.validate();
    } catch (const InvalidArgument& e) {
      detail::field_error("scenario.noise_covariance", e.what(), c);
    }
  }
  if (const auto q = n["lqr"]) {
    detail::known_keys(q, "scenario.lqr", {"Q", "R", "Qf"});
    LQRWeights lw{p.state_weight, p.control_weight, p.terminal()};
    if (q["Q"]) lw.Q = detail::matrix_of(q["Q"], "scenario.lqr.Q", 4);
    if (q["R"]) lw.R = detail::matrix_of(q["R"], "scenario.lqr.R", 2);
    if (q["Qf"]) lw.Qf = detail::matrix_of(q["Qf"], "scenario.lqr.Qf", 4);
    try {
      lw.validate();
    } catch (const InvalidArgument& e) {
      detail::field_error("scenario.lqr", e.what(), q);
    }
    p.lqr = lw;
  }
  const auto a = n["agents"];
  if (!a || !a.IsSequence() || a.size() == 0) detail::field_error("scenario.agents", "need at least one agent", n);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string af = "scenario.agents[" + std::to_string(i) + "]";
    detail::known_keys(a[i], af, {"start", "goal"});
    if (!a[i]["start"] || !a[i]["goal"]) detail::field_error(af, "start and goal are required", a[i]);
    AgentTask t{detail::vector_of(a[i]["start"], af + ".start", 4), detail::vector_of(a[i]["goal"], af + ".goal", 4)};
    if (std::abs(t.start[3]) >= M_PI / 2 - kSteeringGuard)
      detail::field_error(af + ".start", "steering angle outside the guard", a[i]["start"]);
    sc.agents.push_back(std::move(t));
  }
  return sc;
}

inline ExperimentConfig parse_config(const YAML::Node& root) {
  detail::known_keys(root, "", {"name", "scenario", "controllers", "sweep", "monte_carlo", "solver", "output",
                                "write_episodes"});
  ExperimentConfig c;
  detail::read(root, "", "name", c.name);
  if (c.name.empty() || c.name.find_first_of("/\\ ") != std::string::npos)
    detail::field_error("name", "must be nonempty without spaces or slashes", root["name"]);
  if (!root["scenario"]) detail::field_error("scenario", "missing", root);
  c.scenario = parse_scenario(root["scenario"]);

  const auto cs = root["controllers"];
  if (!cs || !cs.IsSequence() || cs.size() == 0) detail::field_error("controllers", "need at least one controller", root);
  for (std::size_t i = 0; i < cs.size(); ++i)
    c.controllers.push_back(parse_controller(cs[i], "controllers[" + std::to_string(i) + "]"));

  const auto s = root["sweep"];
  if (!s) detail::field_error("sweep", "missing", root);
  detail::known_keys(s, "sweep", {"axis", "grid", "epsilon"});
  if (s["axis"]) {
    try {
      c.axis = sweep_axis_from_string(detail::scalar<std::string>(s["axis"], "sweep.axis"));
    } catch (const InvalidArgument& e) {
      detail::field_error("sweep.axis", e.what(), s["axis"]);
    }
  }
  if (!s["grid"]) detail::field_error("sweep.grid", "missing", s);
  const Vector g = detail::vector_of(s["grid"], "sweep.grid", -1);
  if (g.size() == 0) detail::field_error("sweep.grid", "must be nonempty", s["grid"]);
  c.grid.assign(g.data(), g.data() + g.size());
  detail::read(s, "sweep", "epsilon", c.epsilon);
  if (!(c.epsilon >= 0.0) || std::isinf(c.epsilon)) detail::field_error("sweep.epsilon", "must be finite and >= 0", s["epsilon"]);
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    const double v = c.grid[i];
    const std::string gf = "sweep.grid[" + std::to_string(i) + "]";
    if (!(v >= 0.0) || std::isinf(v)) detail::field_error(gf, "must be finite and >= 0", s["grid"]);
    if (c.axis == SweepAxis::horizon && (v < 1.0 || v != std::floor(v)))
      detail::field_error(gf, "horizon values must be integers >= 1", s["grid"]);
  }

  if (const auto m = root["monte_carlo"]) {
    detail::known_keys(m, "monte_carlo", {"episodes", "seed_base"});
    detail::read(m, "monte_carlo", "episodes", c.episodes);
    detail::read(m, "monte_carlo", "seed_base", c.seed_base);
    if (c.episodes < 1) detail::field_error("monte_carlo.episodes", "must be >= 1", m["episodes"]);
  }
  if (const auto v = root["solver"]) {
    auto& ss = c.solver;
    detail::known_keys(v, "solver", {"max_iterations", "tolerance", "cost_tolerance", "regularization_init",
                                     "regularization_growth", "armijo", "backtrack", "max_backtracks"});
    detail::read(v, "solver", "max_iterations", ss.max_iterations);
    detail::read(v, "solver", "tolerance", ss.tolerance);
    detail::read(v, "solver", "cost_tolerance", ss.cost_tolerance);
    detail::read(v, "solver", "regularization_init", ss.regularization_init);
    detail::read(v, "solver", "regularization_growth", ss.regularization_growth);
    detail::read(v, "solver", "armijo", ss.armijo);
    detail::read(v, "solver", "backtrack", ss.backtrack);
    detail::read(v, "solver", "max_backtracks", ss.max_backtracks);
    try {
      ss.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string(e.what()) + detail::where(v));
    }
  }
  detail::read(root, "", "write_episodes", c.write_episodes);
  detail::read(root, "", "output", c.output);
  if (c.output.empty()) detail::field_error("output", "must be nonempty", root["output"]);

  try {
    c.scenario.build();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("parse error at line " + std::to_string(e.mark.line + 1) + ", column " +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  return parse_config(root);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Materialized config with every default written out. `with_output` = false leaves out the
/// output location, which is what the result hash covers.
inline std::string save_config(const ExperimentConfig& c, bool with_output = true) {
  using detail::emit_matrix;
  using detail::emit_number;
  using detail::emit_vector;
  const auto& p = c.scenario.params;
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << c.name;

  e << YAML::Key << "scenario" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "horizon" << YAML::Value << p.horizon;
  e << YAML::Key << "phi_max" << YAML::Value;
  emit_number(e, p.phi_max);
  e << YAML::Key << "car" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "wheelbase" << YAML::Value;
  emit_number(e, p.car.wheelbase);
  e << YAML::Key << "dt" << YAML::Value;
  emit_number(e, p.car.dt);
  e << YAML::EndMap;
  e << YAML::Key << "limits" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "u_min" << YAML::Value;
  emit_vector(e, p.limits.u_min);
  e << YAML::Key << "u_max" << YAML::Value;
  emit_vector(e, p.limits.u_max);
  e << YAML::Key << "du_max" << YAML::Value;
  emit_vector(e, p.limits.du_max);
  e << YAML::EndMap;
  e << YAML::Key << "weights" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "state" << YAML::Value;
  emit_matrix(e, p.state_weight);
  e << YAML::Key << "control" << YAML::Value;
  emit_matrix(e, p.control_weight);
  e << YAML::Key << "terminal_scale" << YAML::Value;
  emit_number(e, p.terminal_scale);
  e << YAML::Key << "terminal" << YAML::Value;
  emit_matrix(e, p.terminal());
  e << YAML::EndMap;
  e << YAML::Key << "collision" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "enabled" << YAML::Value << p.collision_enabled;
  e << YAML::Key << "scale" << YAML::Value;
  emit_number(e, p.collision.scale);
  e << YAML::Key << "r_thresh" << YAML::Value;
  emit_number(e, p.collision.r_thresh);
  e << YAML::EndMap;
  e << YAML::Key << "noise_covariance" << YAML::Value;
  emit_matrix(e, p.noise_covariance);
  const LQRWeights lw = p.lqr.value_or(LQRWeights{p.state_weight, p.control_weight, p.terminal()});
  e << YAML::Key << "lqr" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "Q" << YAML::Value;
  emit_matrix(e, lw.Q);
  e << YAML::Key << "R" << YAML::Value;
  emit_matrix(e, lw.R);
  e << YAML::Key << "Qf" << YAML::Value;
  emit_matrix(e, lw.Qf);
  e << YAML::EndMap;
  e << YAML::Key << "agents" << YAML::Value << YAML::BeginSeq;
  for (const auto& a : c.scenario.agents) {
    e << YAML::BeginMap;
    e << YAML::Key << "start" << YAML::Value;
    emit_vector(e, a.start);
    e << YAML::Key << "goal" << YAML::Value;
    emit_vector(e, a.goal);
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;
  e << YAML::EndMap;

  e << YAML::Key << "controllers" << YAML::Value << YAML::BeginSeq;
  for (const auto& k : c.controllers) {
    e << YAML::Flow << YAML::BeginMap;
    e << YAML::Key << "kind" << YAML::Value << std::string(to_string(k.kind));
    e << YAML::Key << "control_horizon" << YAML::Value << k.control_horizon;
    e << YAML::Key << "threshold" << YAML::Value;
    emit_number(e, k.threshold);
    e << YAML::Key << "trigger" << YAML::Value << std::string(to_string(k.trigger));
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;

  e << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "axis" << YAML::Value << std::string(to_string(c.axis));
  e << YAML::Key << "grid" << YAML::Value;
  emit_vector(e, Eigen::Map<const Vector>(c.grid.data(), static_cast<Eigen::Index>(c.grid.size())));
  e << YAML::Key << "epsilon" << YAML::Value;
  emit_number(e, c.epsilon);
  e << YAML::EndMap;

  e << YAML::Key << "monte_carlo" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "episodes" << YAML::Value << c.episodes;
  e << YAML::Key << "seed_base" << YAML::Value << c.seed_base;
  e << YAML::EndMap;

  const auto& s = c.solver;
  e << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "max_iterations" << YAML::Value << s.max_iterations;
  e << YAML::Key << "tolerance" << YAML::Value;
  emit_number(e, s.tolerance);
  e << YAML::Key << "cost_tolerance" << YAML::Value;
  emit_number(e, s.cost_tolerance);
  e << YAML::Key << "regularization_init" << YAML::Value;
  emit_number(e, s.regularization_init);
  e << YAML::Key << "regularization_growth" << YAML::Value;
  emit_number(e, s.regularization_growth);
  e << YAML::Key << "armijo" << YAML::Value;
  emit_number(e, s.armijo);
  e << YAML::Key << "backtrack" << YAML::Value;
  emit_number(e, s.backtrack);
  e << YAML::Key << "max_backtracks" << YAML::Value << s.max_backtracks;
  e << YAML::EndMap;

  e << YAML::Key << "write_episodes" << YAML::Value << c.write_episodes;
  if (with_output) e << YAML::Key << "output" << YAML::Value << c.output;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that affects results (the output location is excluded).
inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(save_config(c, false))));
  return buf;
}

}  // namespace decplan
