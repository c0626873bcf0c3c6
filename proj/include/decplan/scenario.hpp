#pragma once

#include "decplan/feedback.hpp"

namespace decplan {

/// Everything that defines one planning task: system, start, costs, horizon and noise shape.
struct Scenario {
  AgentSystem system;
  StateVec x0;
  CostModel cost;
  int horizon = 35;
  double phi_max = 0.6;
  Matrix noise_covariance = Matrix::Identity(kAgentControlDim, kAgentControlDim);
  std::optional<LQRWeights> lqr;  // defaults to the cost weights

  int agents() const { return system.agents(); }

  void validate() const {
    system.validate();
    cost.weights.validate();
    if (cost.collision) cost.collision->validate();
    require(cost.agents == system.agents(), "scenario: cost agent count mismatch");
    require(x0.size() == system.nx() && x0.allFinite(), "scenario: x0 must be finite with n_x entries");
    require(horizon >= 1, "scenario: horizon must be >= 1");
    if (lqr) {
      lqr->validate();
      require(lqr->Q.rows() == system.nx() && lqr->R.rows() == system.nu(), "scenario: lqr weight shape mismatch");
    }
    noise_model(0, 0.0).validate();
  }

  LQRWeights lqr_weights() const {
    return lqr.value_or(LQRWeights{cost.weights.state, cost.weights.control, cost.weights.terminal});
  }

  NoiseModel noise_model(int agent, double epsilon) const {
    return NoiseModel{epsilon, noise_covariance, system.limits[static_cast<std::size_t>(agent)].u_max};
  }

  OCPProblem problem(const StateVec& start, int steps, const ControlVec& u_init) const {
    OCPProblem p;
    p.x0 = start;
    p.horizon = steps;
    p.u_init = u_init;
    p.system = system;
    p.cost = cost;
    p.phi_max = phi_max;
    return p;
  }
};

/// Per-agent pose pair used to build scenarios.
struct AgentTask {
  StateVec start;  // (x, y, heading, steering)
  StateVec goal;
};

/// Per-agent parameters shared by every agent of a scenario. Weights are per-agent blocks.
struct ScenarioDefaults {
  CarParams car{};
  ControlLimits limits{};
  Matrix state_weight = Vector((Vector(4) << 5.0, 5.0, 1.0, 0.1).finished()).asDiagonal();
  Matrix control_weight = Matrix::Identity(2, 2);
  double terminal_scale = 100.0;
  std::optional<Matrix> terminal_weight;  // overrides terminal_scale * state_weight
  bool collision_enabled = true;          // only meaningful with two or more agents
  CollisionPenaltyParams collision{};
  int horizon = 35;
  double phi_max = 0.6;
  Matrix noise_covariance = Matrix::Identity(2, 2);
  std::optional<LQRWeights> lqr;  // per-agent tracking weights; defaults to the cost weights

  Matrix terminal() const { return terminal_weight.value_or(terminal_scale * state_weight); }
};

namespace detail {

inline Matrix block_repeat(const Matrix& block, int M) {
  Matrix out = Matrix::Zero(block.rows() * M, block.cols() * M);
  for (int j = 0; j < M; ++j) out.block(block.rows() * j, block.cols() * j, block.rows(), block.cols()) = block;
  return out;
}

}  // namespace detail

/// Stacks per-agent tasks into a joint scenario with block-diagonal weights; the collision
/// penalty is attached when enabled and there are two or more agents.
inline Scenario make_scenario(const std::vector<AgentTask>& tasks, const ScenarioDefaults& d = {}) {
  require(!tasks.empty(), "make_scenario: no agents");
  require(d.state_weight.rows() == 4 && d.state_weight.cols() == 4, "weights.state must be 4x4 per agent");
  require(d.control_weight.rows() == 2 && d.control_weight.cols() == 2, "weights.control must be 2x2 per agent");
  require(d.terminal().rows() == 4 && d.terminal().cols() == 4, "weights.terminal must be 4x4 per agent");
  require(d.terminal_scale >= 0.0 && std::isfinite(d.terminal_scale), "weights.terminal_scale must be >= 0");
  const int M = static_cast<int>(tasks.size());
  Scenario s;
  s.system = AgentSystem(M, d.car, d.limits);
  std::vector<Vector> starts, goals;
  for (const auto& t : tasks) {
    require(t.start.size() == 4 && t.goal.size() == 4, "make_scenario: poses need 4 entries");
    starts.push_back(t.start);
    goals.push_back(t.goal);
  }
  s.x0 = stack_agents(starts);
  s.cost.weights.state = detail::block_repeat(d.state_weight, M);
  s.cost.weights.control = detail::block_repeat(d.control_weight, M);
  s.cost.weights.terminal = detail::block_repeat(d.terminal(), M);
  s.cost.weights.goal = stack_agents(goals);
  s.cost.agents = M;
  if (M >= 2 && d.collision_enabled) s.cost.collision = d.collision;
  s.horizon = d.horizon;
  s.phi_max = d.phi_max;
  s.noise_covariance = d.noise_covariance;
  if (d.lqr) {
    d.lqr->validate();
    require(d.lqr->Q.rows() == 4 && d.lqr->R.rows() == 2, "lqr weights must be per-agent 4x4 / 2x2");
    s.lqr = LQRWeights{detail::block_repeat(d.lqr->Q, M), detail::block_repeat(d.lqr->R, M),
                       detail::block_repeat(d.lqr->Qf, M)};
  }
  s.validate();
  return s;
}

}  // namespace decplan
