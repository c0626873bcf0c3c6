#pragma once

// Quadratic goal-deviation costs and the pairwise inter-agent collision penalty.

#include "decplan/types.hpp"

#include <cmath>
#include <optional>

namespace decplan {

/// Costs are charged on the deviation (x - goal). Stage: dx' Wx dx + u' Wu u; terminal: dx' Wxf dx.
struct CostWeights {
  Matrix state;     // Wx, symmetric PSD
  Matrix control;   // Wu, symmetric PD
  Matrix terminal;  // Wxf, symmetric PSD
  Vector goal;

  void validate() const {
    require(state.rows() == state.cols() && terminal.rows() == state.rows() && terminal.cols() == state.rows(),
            "weights: state/terminal must be square and equal-sized");
    require(control.rows() == control.cols(), "weights: control weight must be square");
    require(goal.size() == state.rows(), "weights: goal dimension mismatch");
    const auto symmetric = [](const Matrix& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12; };
    require(symmetric(state) && symmetric(control) && symmetric(terminal), "weights: matrices must be symmetric");
    require(Eigen::SelfAdjointEigenSolver<Matrix>(state).eigenvalues().minCoeff() >= -1e-12,
            "weights.state must be positive semidefinite");
    require(Eigen::SelfAdjointEigenSolver<Matrix>(terminal).eigenvalues().minCoeff() >= -1e-12,
            "weights.terminal must be positive semidefinite");
    require(Eigen::SelfAdjointEigenSolver<Matrix>(control).eigenvalues().minCoeff() > 0.0,
            "weights.control must be positive definite");
  }
};

/// Psi(i, j) = scale * exp(-(|p_i - p_j|^2 - r_thresh^2)) on planar positions.
struct CollisionPenaltyParams {
  double scale = 100.0;
  double r_thresh = 0.5;  // [m]

  void validate() const {
    require(scale > 0.0 && std::isfinite(scale), "collision.scale must be > 0");
    require(r_thresh > 0.0 && std::isfinite(r_thresh), "collision.r_thresh must be > 0");
  }
};

/// Weights plus the optional collision term for an M-agent system.
struct CostModel {
  CostWeights weights;
  std::optional<CollisionPenaltyParams> collision;
  int agents = 1;
};

inline double quadratic_form(const Vector& v, const Matrix& w) { return v.dot(w * v); }

inline double stage_cost(const Vector& x, const Vector& u, const CostWeights& w) {
  require(x.size() == w.goal.size() && u.size() == w.control.rows(), "stage_cost: dimension mismatch");
  return quadratic_form(x - w.goal, w.state) + quadratic_form(u, w.control);
}

inline double terminal_cost(const Vector& x, const CostWeights& w) {
  require(x.size() == w.goal.size(), "terminal_cost: dimension mismatch");
  return quadratic_form(x - w.goal, w.terminal);
}

inline double collision_penalty(const Vector& x, const CollisionPenaltyParams& p, int agents) {
  require(x.size() == kAgentStateDim * agents, "collision_penalty: dimension mismatch");
  const double r2 = p.r_thresh * p.r_thresh;
  double total = 0.0;
  for (int i = 0; i < agents; ++i)
    for (int j = i + 1; j < agents; ++j) {
      const double dx = x[kAgentStateDim * i] - x[kAgentStateDim * j];
      const double dy = x[kAgentStateDim * i + 1] - x[kAgentStateDim * j + 1];
      total += p.scale * std::exp(-(dx * dx + dy * dy - r2));
    }
  return total;
}

inline double stage_cost(const Vector& x, const Vector& u, const CostModel& m) {
  double c = stage_cost(x, u, m.weights);
  if (m.collision && m.agents >= 2) c += collision_penalty(x, *m.collision, m.agents);
  return c;
}

inline double terminal_cost(const Vector& x, const CostModel& m) { return terminal_cost(x, m.weights); }

/// State-only part of the stage cost (goal deviation plus collision), used when a state is charged
/// before its control is known.
inline double state_cost(const Vector& x, const CostModel& m) {
  double c = quadratic_form(x - m.weights.goal, m.weights.state);
  if (m.collision && m.agents >= 2) c += collision_penalty(x, *m.collision, m.agents);
  return c;
}

/// Sum of stage costs over t < T plus the terminal cost at x_T. Collision enters stage terms only.
inline double trajectory_cost(const StateSeq& states, const ControlSeq& controls, const CostWeights& w,
                              const std::optional<CollisionPenaltyParams>& collision = std::nullopt,
                              int agents = 1) {
  require(states.size() == controls.size() + 1, "trajectory_cost: need |states| = |controls| + 1");
  const CostModel m{w, collision, agents};
  double total = 0.0;
  for (std::size_t t = 0; t < controls.size(); ++t) total += stage_cost(states[t], controls[t], m);
  return total + terminal_cost(states.back(), m);
}

inline double trajectory_cost(const StateSeq& states, const ControlSeq& controls, const CostModel& m) {
  return trajectory_cost(states, controls, m.weights, m.collision, m.agents);
}

// ---------------------------------------------------------------------------
// Derivatives used by the trajectory optimizer.

struct StateCostDerivatives {
  Vector grad;
  Matrix hess;
};

/// Gradient and Hessian of the stage state part (terminal=false) or the terminal cost.
inline StateCostDerivatives state_cost_derivatives(const Vector& x, const CostModel& m, bool terminal) {
  const Matrix& w = terminal ? m.weights.terminal : m.weights.state;
  StateCostDerivatives d{2.0 * w * (x - m.weights.goal), 2.0 * w};
  if (terminal || !m.collision || m.agents < 2) return d;
  const auto& p = *m.collision;
  const double r2 = p.r_thresh * p.r_thresh;
  for (int i = 0; i < m.agents; ++i)
    for (int j = i + 1; j < m.agents; ++j) {
      const int a = kAgentStateDim * i, b = kAgentStateDim * j;
      const Eigen::Vector2d diff(x[a] - x[b], x[a + 1] - x[b + 1]);
      const double psi = p.scale * std::exp(-(diff.squaredNorm() - r2));
      const Eigen::Vector2d g = -2.0 * psi * diff;
      const Eigen::Matrix2d h = psi * (4.0 * diff * diff.transpose() - 2.0 * Eigen::Matrix2d::Identity());
      d.grad.segment<2>(a) += g;
      d.grad.segment<2>(b) -= g;
      d.hess.block<2, 2>(a, a) += h;
      d.hess.block<2, 2>(b, b) += h;
      d.hess.block<2, 2>(a, b) -= h;
      d.hess.block<2, 2>(b, a) -= h;
    }
  return d;
}

}  // namespace decplan
