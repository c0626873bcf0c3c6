#pragma once

// Seeded closed-loop episodes and their Monte Carlo aggregation.

#include "decplan/controllers.hpp"
#include "decplan/stats.hpp"

#include <atomic>
#include <charconv>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <thread>

namespace decplan {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for one (seed, step, agent) cell. Draws do not depend on the order in
/// which cells are visited, so every controller sees the same noise for a given seed.
inline std::mt19937_64 noise_stream(std::uint64_t seed, int t, int agent) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ static_cast<std::uint64_t>(t));
  k = splitmix64(k ^ (static_cast<std::uint64_t>(agent) << 32));
  return std::mt19937_64(k);
}

/// Unscaled stacked noise w_t for all agents.
inline ControlVec draw_noise(const Scenario& sc, std::uint64_t seed, int t) {
  ControlVec w(sc.system.nu());
  for (int j = 0; j < sc.agents(); ++j) {
    auto rng = noise_stream(seed, t, j);
    w.segment<kAgentControlDim>(kAgentControlDim * j) = sample_noise(rng, sc.noise_model(j, 0.0));
  }
  return w;
}

struct EpisodeSpec {
  const Scenario* scenario = nullptr;
  ControllerConfig controller;
  double epsilon = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(scenario != nullptr, "episode: scenario missing");
    require(epsilon >= 0.0 && std::isfinite(epsilon), "episode: epsilon must be >= 0");
    controller.validate();
  }
};

struct RolloutRecord {
  StateSeq states;          // x_0 .. x_T
  ControlSeq controls;      // applied (pre-noise) u_0 .. u_{T-1}
  ControlSeq noise;         // unscaled w_0 .. w_{T-1}
  std::vector<double> stage_costs;
  double terminal_cost = 0.0;
  double cost = 0.0;            // executed J
  double first_plan_cost = 0.0;
  double nominal_cost = 0.0;    // normalizer: full-horizon deterministic optimum from x_0
  double ratio = 0.0;           // J / nominal_cost
  std::vector<int> replan_steps;
  std::vector<double> plan_time;    // [s] per step
  std::vector<char> replanned;
  std::vector<char> nonconverged;
  int solves = 0;
  int solver_iterations = 0;
  double min_distance = std::numeric_limits<double>::infinity();  // closest approach of any agent pair
  bool failed = false;
  std::string failure;
  double epsilon = 0.0;
  std::uint64_t seed = 0;

  int replans() const { return static_cast<int>(replan_steps.size()); }
  double total_plan_time() const {
    double s = 0.0;
    for (double v : plan_time) s += v;
    return s;
  }
};

inline double min_pairwise_distance(const StateVec& x, int agents) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < agents; ++i)
    for (int j = i + 1; j < agents; ++j)
      best = std::min(best, std::hypot(x[4 * i] - x[4 * j], x[4 * i + 1] - x[4 * j + 1]));
  return best;
}

/// Deterministic optimum J* of the full-horizon OCP from the scenario's start.
inline double reference_nominal_cost(const Scenario& sc, const SolverSettings& settings = {}) {
  return solve_ocp(sc.problem(sc.x0, sc.horizon, ControlVec::Zero(sc.system.nu())), std::nullopt, settings).cost;
}

inline RolloutRecord run_episode(const EpisodeSpec& spec, const SolverSettings& settings = {},
                                 std::optional<double> reference_cost = std::nullopt) {
  spec.validate();
  const Scenario& sc = *spec.scenario;
  RolloutRecord rec;
  rec.epsilon = spec.epsilon;
  rec.seed = spec.seed;
  rec.nominal_cost = reference_cost ? *reference_cost : reference_nominal_cost(sc, settings);

  Controller ctrl(sc, spec.controller, settings);
  StateVec x = sc.x0;
  rec.states.push_back(x);
  for (int t = 0; t < sc.horizon; ++t) {
    try {
      const auto dec = ctrl.act(x, t);
      if (t == 0) rec.first_plan_cost = ctrl.state().plan.cost;
      const ControlVec w = draw_noise(sc, spec.seed, t);
      const StateVec next = step_noisy(x, dec.u, w, spec.epsilon, sc.system);
      const auto upd = ctrl.observe(x, dec.u, next, t);

      rec.controls.push_back(dec.u);
      rec.noise.push_back(w);
      rec.stage_costs.push_back(stage_cost(x, dec.u, sc.cost));
      rec.plan_time.push_back(dec.planning_time + upd.planning_time);
      const bool replanned = dec.replanned || upd.replanned;
      rec.replanned.push_back(replanned ? 1 : 0);
      rec.nonconverged.push_back(dec.nonconverged || upd.nonconverged ? 1 : 0);
      if (replanned) rec.replan_steps.push_back(t);
      x = next;
      rec.states.push_back(x);
    } catch (const DynamicsError& e) {
      rec.failed = true;
      rec.failure = e.what();
      break;
    }
  }
  rec.solves = ctrl.state().solves;
  rec.solver_iterations = ctrl.state().solver_iterations;
  if (sc.agents() >= 2)
    for (const auto& s : rec.states) rec.min_distance = std::min(rec.min_distance, min_pairwise_distance(s, sc.agents()));
  if (rec.failed) {
    rec.cost = rec.ratio = std::numeric_limits<double>::quiet_NaN();
    return rec;
  }
  rec.terminal_cost = terminal_cost(rec.states.back(), sc.cost);
  rec.cost = trajectory_cost(rec.states, rec.controls, sc.cost);
  rec.ratio = rec.cost / rec.nominal_cost;
  return rec;
}

/// Re-simulates the logged states from x_0, applied controls and logged noise.
inline StateSeq replay_states(const RolloutRecord& rec, const Scenario& sc) {
  StateSeq xs{rec.states.front()};
  for (std::size_t t = 0; t < rec.controls.size(); ++t)
    xs.push_back(step_noisy(xs.back(), rec.controls[t], rec.noise[t], rec.epsilon, sc.system));
  return xs;
}

// ---------------------------------------------------------------------------

struct MonteCarloSummary {
  int episodes = 0;
  int failures = 0;
  double mean_ratio = 0.0, var_ratio = 0.0;
  double mean_cost = 0.0, var_cost = 0.0;
  double mean_replans = 0.0, sd_replans = 0.0;
  double mean_plan_time = 0.0;   // per episode [s]
  double total_plan_time = 0.0;  // over all episodes [s]
  double nonconvergence_rate = 0.0;  // fraction of solves flagged
  double failure_rate = 0.0;
  double nominal_cost = 0.0;
};

/// Statistics over successful episodes, reduced in index order.
inline MonteCarloSummary summarize(const std::vector<RolloutRecord>& records) {
  MonteCarloSummary s;
  s.episodes = static_cast<int>(records.size());
  std::vector<double> ratios, costs, replans, times;
  int flagged = 0, solves = 0;
  for (const auto& r : records) {
    s.nominal_cost = r.nominal_cost;
    times.push_back(r.total_plan_time());
    for (char f : r.nonconverged) flagged += f;
    solves += r.solves;
    if (r.failed) {
      ++s.failures;
      continue;
    }
    ratios.push_back(r.ratio);
    costs.push_back(r.cost);
    replans.push_back(static_cast<double>(r.replans()));
  }
  s.mean_ratio = mean(ratios);
  s.var_ratio = variance(ratios);
  s.mean_cost = mean(costs);
  s.var_cost = variance(costs);
  s.mean_replans = mean(replans);
  s.sd_replans = std::sqrt(variance(replans));
  s.mean_plan_time = mean(times);
  s.total_plan_time = 0.0;
  for (double t : times) s.total_plan_time += t;
  s.nonconvergence_rate = solves > 0 ? static_cast<double>(flagged) / solves : 0.0;
  s.failure_rate = s.episodes > 0 ? static_cast<double>(s.failures) / s.episodes : 0.0;
  return s;
}

struct MonteCarloResult {
  MonteCarloSummary summary;
  std::vector<RolloutRecord> records;
};

/// N episodes with seeds seed_base + i, spread over `workers` threads. Results do not depend on
/// the worker count or completion order.
inline MonteCarloResult run_monte_carlo(const EpisodeSpec& base, int episodes, std::uint64_t seed_base,
                                        const SolverSettings& settings = {}, int workers = 1,
                                        std::optional<double> reference_cost = std::nullopt) {
  base.validate();
  require(episodes >= 1, "run_monte_carlo: need at least one episode");
  const double ref = reference_cost ? *reference_cost : reference_nominal_cost(*base.scenario, settings);
  MonteCarloResult out;
  out.records.resize(static_cast<std::size_t>(episodes));
  std::atomic<int> next{0};
  const auto work = [&] {
    for (int i = next++; i < episodes; i = next++) {
      EpisodeSpec spec = base;
      spec.seed = seed_base + static_cast<std::uint64_t>(i);
      out.records[static_cast<std::size_t>(i)] = run_episode(spec, settings, ref);
    }
  };
  const int n = std::clamp(workers, 1, episodes);
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  out.summary = summarize(out.records);
  return out;
}

// ---------------------------------------------------------------------------

enum class SweepAxis { epsilon, threshold, horizon };

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::epsilon: return "epsilon";
    case SweepAxis::threshold: return "threshold";
    case SweepAxis::horizon: return "horizon";
  }
  return "?";
}

inline SweepAxis sweep_axis_from_string(std::string_view s) {
  for (auto a : {SweepAxis::epsilon, SweepAxis::threshold, SweepAxis::horizon})
    if (s == to_string(a)) return a;
  throw InvalidArgument("unknown sweep axis '" + std::string(s) + "'");
}

struct SweepRow {
  std::size_t controller_index = 0;
  ControllerConfig controller;  // effective configuration at this grid point
  double value = 0.0;           // grid value
  double epsilon = 0.0;
  MonteCarloResult result;
};

struct SweepSpec {
  const Scenario* scenario = nullptr;
  std::vector<ControllerConfig> controllers;
  SweepAxis axis = SweepAxis::epsilon;
  std::vector<double> grid;
  double epsilon = 0.0;  // used when the axis is not epsilon
  int episodes = 100;
  std::uint64_t seed_base = 0;
};

/// Applies a grid value to a controller. Values only touch the parameters a kind actually uses.
inline ControllerConfig apply_axis(ControllerConfig c, SweepAxis axis, double value) {
  if (axis == SweepAxis::threshold && c.replans_on_trigger()) c.threshold = value;
  if (axis == SweepAxis::horizon && c.short_horizon()) c.control_horizon = static_cast<int>(std::lround(value));
  return c;
}

/// One Monte Carlo run per (controller, grid value). Every point uses the same seed bank, so
/// controllers are compared on identical noise. Configurations that a grid value leaves unchanged
/// are computed once and reused.
inline std::vector<SweepRow> sweep(const SweepSpec& spec, const SolverSettings& settings = {}, int workers = 1) {
  require(spec.scenario != nullptr, "sweep: scenario missing");
  require(!spec.grid.empty(), "sweep: grid must be nonempty");
  require(!spec.controllers.empty(), "sweep: no controllers");
  const double ref = reference_nominal_cost(*spec.scenario, settings);
  std::map<std::tuple<int, int, double, double>, std::size_t> cache;
  std::vector<SweepRow> rows;
  for (double value : spec.grid)
    for (std::size_t ci = 0; ci < spec.controllers.size(); ++ci) {
      SweepRow row;
      row.controller_index = ci;
      row.value = value;
      row.controller = apply_axis(spec.controllers[ci], spec.axis, value);
      row.epsilon = spec.axis == SweepAxis::epsilon ? value : spec.epsilon;
      const auto& c = row.controller;
      const auto key = std::make_tuple(static_cast<int>(c.kind), c.short_horizon() ? c.control_horizon : 0,
                                       c.replans_on_trigger() ? c.threshold : 0.0, row.epsilon);
      if (auto it = cache.find(key); it != cache.end()) {
        row.result = rows[it->second].result;
      } else {
        EpisodeSpec ep{spec.scenario, c, row.epsilon, 0};
        row.result = run_monte_carlo(ep, spec.episodes, spec.seed_base, settings, workers, ref);
        cache.emplace(key, rows.size());
      }
      rows.push_back(std::move(row));
    }
  return rows;
}

struct TimingProfile {
  std::vector<double> mean_per_step;  // [s]
  double total = 0.0;                 // sum of mean_per_step
};

/// Per-step mean planning time over records (failed episodes count their executed steps only).
inline TimingProfile timing_profile(const std::vector<RolloutRecord>& records) {
  TimingProfile p;
  if (records.empty()) return p;
  std::size_t T = 0;
  for (const auto& r : records) T = std::max(T, r.plan_time.size());
  p.mean_per_step.assign(T, 0.0);
  for (const auto& r : records)
    for (std::size_t t = 0; t < r.plan_time.size(); ++t) p.mean_per_step[t] += r.plan_time[t];
  for (double& v : p.mean_per_step) {
    v /= static_cast<double>(records.size());
    p.total += v;
  }
  return p;
}

}  // namespace decplan
