#pragma once

// Receding-horizon baselines and the trajectory-optimized LQR family behind one
// stepwise interface. The same code drives single- and multi-agent scenarios; in
// the multi-agent case the nominal is joint and the feedback is per-agent.

#include "decplan/scenario.hpp"

#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

namespace decplan {

enum class ControllerKind { MPC, MPC_SH, TLQR, TLQR2, TLQR2_SH };

inline std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::MPC: return "MPC";
    case ControllerKind::MPC_SH: return "MPC_SH";
    case ControllerKind::TLQR: return "TLQR";
    case ControllerKind::TLQR2: return "TLQR2";
    case ControllerKind::TLQR2_SH: return "TLQR2_SH";
  }
  return "?";
}

inline ControllerKind controller_kind_from_string(std::string_view s) {
  for (auto k : {ControllerKind::MPC, ControllerKind::MPC_SH, ControllerKind::TLQR, ControllerKind::TLQR2,
                 ControllerKind::TLQR2_SH})
    if (s == to_string(k)) return k;
  throw InvalidArgument("unknown controller kind '" + std::string(s) + "'");
}

/// How the fractional cost deviation is compared against the threshold.
enum class TriggerMode {
  magnitude,  // |J - J_bar| / J_bar > threshold
  signed_,    // (J - J_bar) / J_bar > threshold
};

inline std::string_view to_string(TriggerMode m) { return m == TriggerMode::magnitude ? "magnitude" : "signed"; }

inline TriggerMode trigger_mode_from_string(std::string_view s) {
  if (s == "magnitude") return TriggerMode::magnitude;
  if (s == "signed") return TriggerMode::signed_;
  throw InvalidArgument("unknown trigger mode '" + std::string(s) + "'");
}

struct ControllerConfig {
  ControllerKind kind = ControllerKind::TLQR2;
  int control_horizon = 7;   // used by the short-horizon kinds
  double threshold = 0.02;   // fractional cost deviation, used by the TLQR2 kinds
  TriggerMode trigger = TriggerMode::magnitude;

  bool short_horizon() const { return kind == ControllerKind::MPC_SH || kind == ControllerKind::TLQR2_SH; }
  bool replans_on_trigger() const { return kind == ControllerKind::TLQR2 || kind == ControllerKind::TLQR2_SH; }
  bool receding() const { return kind == ControllerKind::MPC || kind == ControllerKind::MPC_SH; }

  void validate() const {
    require(control_horizon >= 1, "controller.horizon must be >= 1");
    require(threshold >= 0.0 && !std::isnan(threshold), "controller.threshold must be >= 0");
  }

  /// Display label, e.g. "TLQR2_SH(Hc=7,thr=0.02)".
  std::string label() const {
    std::string s(to_string(kind));
    if (short_horizon()) s += "(Hc=" + std::to_string(control_horizon) + ")";
    if (replans_on_trigger()) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "[thr=%g%s]", threshold, trigger == TriggerMode::signed_ ? ",signed" : "");
      s += buf;
    }
    return s;
  }
};

inline constexpr double kDegenerateBaseline = 1e-9;

/// True iff the fractional deviation (J - J_bar) / J_bar exceeds the threshold (in absolute value
/// for TriggerMode::magnitude). A baseline at or below 1e-9 never triggers and is reported through
/// `degenerate`.
inline bool replan_trigger(double J, double J_bar, double threshold, TriggerMode mode = TriggerMode::magnitude,
                           bool* degenerate = nullptr) {
  const bool bad = !(J_bar > kDegenerateBaseline);
  if (degenerate) *degenerate = bad;
  if (bad) return false;
  const double deviation = (J - J_bar) / J_bar;
  return (mode == TriggerMode::magnitude ? std::abs(deviation) : deviation) > threshold;
}

/// Box clamp to [u_min, u_max], then rate clamp of u - u_prev to +-du_max. Identity on feasible input.
inline ControlVec constrain(const ControlVec& u, const ControlVec& u_prev, const Vector& u_min, const Vector& u_max,
                            const Vector& du_max) {
  require(u.size() == u_prev.size() && u.size() == u_min.size(), "constrain: dimension mismatch");
  ControlVec out = u;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] < u_min[i]) out[i] = u_min[i];
    else if (out[i] > u_max[i]) out[i] = u_max[i];
    if (out[i] - u_prev[i] > du_max[i]) out[i] = u_prev[i] + du_max[i];
    else if (u_prev[i] - out[i] > du_max[i]) out[i] = u_prev[i] - du_max[i];
  }
  return out;
}

inline ControlVec constrain(const ControlVec& u, const ControlVec& u_prev, const ControlLimits& lim) {
  return constrain(u, u_prev, lim.u_min, lim.u_max, lim.du_max);
}

inline ControlVec constrain(const ControlVec& u, const ControlVec& u_prev, const AgentSystem& sys) {
  return constrain(u, u_prev, sys.u_min(), sys.u_max(), sys.du_max());
}

/// Running cost bookkeeping against the active plan, reset at every (re)plan.
///
/// After the transition x_t -> x_{t+1} the executed side is
///   J_t = sum_{s=start..t} c(x_s, u_s) + c_x(x_{t+1})
/// and the nominal side is the same expression on the plan, so the newest state (the only one
/// carrying the latest noise) enters the comparison. c_x is the terminal cost when x_{t+1} is the
/// plan's last state and the state part of the stage cost otherwise.
struct CostTracker {
  double running = 0.0;   // executed stage costs since plan start; nondecreasing
  double actual = 0.0;    // J_t
  double nominal = 0.0;   // J_bar_t
};

struct ControllerState {
  NominalPlan plan;
  GainSchedule gains;          // joint block-diagonal schedule (T-LQR family)
  bool has_plan = false;
  int plan_start = 0;
  CostTracker costs;
  ControlVec last_applied;
  std::vector<int> replan_steps;
  int solves = 0;
  int solver_iterations = 0;  // SQP iterations over all solves
  int degenerate_events = 0;
};

/// Adds c(x_t, u_t) and recomputes J_t and J_bar_t for the step ending in x_next.
inline void accumulate_costs(ControllerState& st, const StateVec& x, const ControlVec& u, const StateVec& x_next,
                             int t, const CostModel& cost) {
  const int i = t - st.plan_start;
  const int H = st.plan.horizon();
  require(st.has_plan && i >= 0 && i < H, "accumulate_costs: step outside the active plan");
  st.costs.running += stage_cost(x, u, cost);
  const bool last = i + 1 == H;
  const StateVec& xn_bar = st.plan.states[static_cast<std::size_t>(i + 1)];
  st.costs.actual = st.costs.running + (last ? terminal_cost(x_next, cost) : state_cost(x_next, cost));
  st.costs.nominal = nominal_cost_prefix(st.plan, i) + (last ? terminal_cost(xn_bar, cost) : state_cost(xn_bar, cost));
}

class Controller {
 public:
  struct Decision {
    ControlVec u;
    double planning_time = 0.0;  // [s], OCP solve plus gain synthesis
    bool planned = false;
    bool replanned = false;
    bool nonconverged = false;
  };

  struct Update {
    double planning_time = 0.0;
    bool replanned = false;
    bool nonconverged = false;
    bool degenerate = false;
  };

  Controller(const Scenario& scenario, ControllerConfig config, SolverSettings settings = {})
      : sc_(scenario), cfg_(config), settings_(settings), lqr_(split_weights(scenario.lqr_weights(), scenario.agents())) {
    scenario.validate();
    config.validate();
    settings.validate();
    st_.last_applied = ControlVec::Zero(sc_.system.nu());
  }

  const ControllerConfig& config() const { return cfg_; }
  const ControllerState& state() const { return st_; }

  /// Chooses u_t for the measured state x_t. Returned controls already satisfy box and rate limits.
  Decision act(const StateVec& x, int t) {
    require(t >= 0 && t < sc_.horizon, "Controller::act: step out of range");
    Decision out;
    if (cfg_.receding()) {
      const int steps = std::min(cfg_.short_horizon() ? cfg_.control_horizon : sc_.horizon, sc_.horizon - t);
      std::optional<ControlSeq> guess;
      if (st_.has_plan) guess = shifted_guess(st_.plan.controls, 1, steps);
      out.planning_time = timed([&] { plan_from(x, t, steps, std::move(guess), /*gains=*/false); });
      out.planned = out.replanned = true;
      out.nonconverged = !st_.plan.converged;
      out.u = constrain(st_.plan.controls.front(), st_.last_applied, sc_.system);
    } else {
      if (!st_.has_plan) {
        const int steps = cfg_.short_horizon() ? std::min(cfg_.control_horizon, sc_.horizon) : sc_.horizon;
        out.planning_time = timed([&] { plan_from(x, t, steps, std::nullopt, /*gains=*/true); });
        out.planned = true;
        out.nonconverged = !st_.plan.converged;
      }
      out.u = constrain(feedback_control(x, t), st_.last_applied, sc_.system);
    }
    st_.last_applied = out.u;
    return out;
  }

  /// Records the transition and, for the replanning kinds, evaluates the trigger. A replan takes
  /// effect from x_next.
  Update observe(const StateVec& x, const ControlVec& u, const StateVec& x_next, int t) {
    Update out;
    if (cfg_.receding()) return out;
    accumulate_costs(st_, x, u, x_next, t, sc_.cost);
    if (!cfg_.replans_on_trigger() || t + 1 >= sc_.horizon) return out;

    const int i = t - st_.plan_start;
    const bool exhausted = i + 1 >= st_.plan.horizon();
    bool degenerate = false;
    const bool fire = replan_trigger(st_.costs.actual, st_.costs.nominal, cfg_.threshold, cfg_.trigger, &degenerate);
    if (degenerate) {
      ++st_.degenerate_events;
      out.degenerate = true;
    }
    if (!(exhausted || fire)) return out;

    const int remaining = sc_.horizon - t - 1;
    const int steps = cfg_.short_horizon() ? std::min(cfg_.control_horizon, remaining) : remaining;
    auto guess = shifted_guess(st_.plan.controls, i + 1, steps);
    out.planning_time = timed([&] { plan_from(x_next, t + 1, steps, std::move(guess), /*gains=*/true); });
    out.replanned = true;
    out.nonconverged = !st_.plan.converged;
    st_.replan_steps.push_back(t);
    return out;
  }

  /// Unconstrained tracking law u_bar_t - L_t (x - x_bar_t) of the active plan.
  ControlVec feedback_control(const StateVec& x, int t) const {
    require(st_.has_plan && !cfg_.receding(), "feedback_control: no active tracking plan");
    const auto i = static_cast<std::size_t>(t - st_.plan_start);
    require(i < st_.plan.controls.size(), "feedback_control: step outside the active plan");
    return apply_feedback(st_.plan.controls[i], st_.gains.L[i], x, st_.plan.states[i]);
  }

 private:
  template <typename F>
  static double timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  /// Controls of `prev` from `offset` on, padded with the last control, cut to `steps`.
  static ControlSeq shifted_guess(const ControlSeq& prev, int offset, int steps) {
    ControlSeq g;
    g.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
      const int src = std::min(offset + k, static_cast<int>(prev.size()) - 1);
      g.push_back(prev[static_cast<std::size_t>(src)]);
    }
    return g;
  }

  void plan_from(const StateVec& x, int t, int steps, std::optional<ControlSeq> guess, bool gains) {
    st_.plan = solve_ocp(sc_.problem(x, steps, st_.last_applied), guess, settings_);
    if (gains) st_.gains = assemble_block_diagonal(decoupled_gains(st_.plan, sc_.system, lqr_));
    st_.has_plan = true;
    st_.plan_start = t;
    st_.costs = {};
    ++st_.solves;
    st_.solver_iterations += st_.plan.iterations;
  }

  const Scenario& sc_;
  ControllerConfig cfg_;
  SolverSettings settings_;
  std::vector<LQRWeights> lqr_;
  ControllerState st_;
};

/// Joint controller: one joint nominal (collision penalty included when M >= 2), per-agent
/// trackers, and a trigger evaluated on the joint cost with centralized information. With M = 1
/// this is the single-agent controller.
inline Controller multi_agent_wrap(const ControllerConfig& config, const Scenario& joint,
                                   const SolverSettings& settings = {}) {
  require(joint.agents() >= 1, "multi_agent_wrap: needs at least one agent");
  return Controller(joint, config, settings);
}

}  // namespace decplan
