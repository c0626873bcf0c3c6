#pragma once

// Deterministic optimal control problem with control box, control-rate and
// steering-angle constraints, solved by a feasible-iterate SQP over the
// single-shooting control sequence.
//
// Every constraint is linear in the control sequence (the steering angle is a
// running sum of steering rates), so each QP step stays inside the feasible
// polytope for any step length in [0, 1].

#include "decplan/costs.hpp"
#include "decplan/dynamics.hpp"
#include "decplan/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace decplan {

struct OCPProblem {
  StateVec x0;
  int horizon = 1;
  ControlVec u_init;  // previously applied control; anchors the first rate constraint
  AgentSystem system;
  CostModel cost;      // weights (with goal) and optional collision penalty
  double phi_max = 0.6;

  void validate() const {
    system.validate();
    cost.weights.validate();
    if (cost.collision) cost.collision->validate();
    require(horizon >= 1, "ocp: horizon must be >= 1");
    require(x0.size() == system.nx() && x0.allFinite(), "ocp: x0 must be finite with n_x entries");
    require(u_init.size() == system.nu() && u_init.allFinite(), "ocp: u_init must be finite with n_u entries");
    require(cost.weights.goal.size() == system.nx(), "ocp: goal dimension mismatch");
    require(cost.agents == system.agents(), "ocp: cost agent count mismatch");
    require(phi_max > 0.0 && phi_max < std::numbers::pi / 2.0 - kSteeringGuard, "ocp: phi_max out of range");
  }
};

struct SolverSettings {
  int max_iterations = 200;
  double tolerance = 1e-6;         // on the infinity norm of the SQP step
  double cost_tolerance = 1e-13;   // on the predicted decrease, relative to 1 + J
  double regularization_init = 1e-8;
  double regularization_growth = 10.0;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;

  void validate() const {
    require(max_iterations >= 1, "solver.max_iterations must be >= 1");
    require(tolerance > 0.0 && cost_tolerance > 0.0, "solver tolerances must be > 0");
    require(regularization_init > 0.0 && regularization_growth > 1.0, "solver regularization settings invalid");
    require(armijo > 0.0 && armijo < 0.5, "solver.armijo must be in (0, 0.5)");
    require(backtrack > 0.0 && backtrack < 1.0, "solver.backtrack must be in (0, 1)");
    require(max_backtracks >= 1, "solver.max_backtracks must be >= 1");
  }
};

struct NominalPlan {
  ControlSeq controls;            // u_0 .. u_{H-1}
  StateSeq states;                // x_0 .. x_H
  std::vector<double> stage_costs;
  double terminal = 0.0;
  double cost = 0.0;              // stage costs summed in order, then terminal

  bool converged = false;
  int iterations = 0;
  double step_norm = 0.0;         // last SQP step, a stationarity proxy
  bool warm_start_projected = false;

  int horizon() const { return static_cast<int>(controls.size()); }
};

inline StateSeq rollout_nominal(const StateVec& x0, const ControlSeq& controls, const AgentSystem& sys) {
  StateSeq xs;
  xs.reserve(controls.size() + 1);
  xs.push_back(x0);
  for (const auto& u : controls) {
    require(u.allFinite(), "rollout_nominal: non-finite control");
    xs.push_back(step_nominal(xs.back(), u, sys));
  }
  return xs;
}

/// Stage costs through step t (terminal cost included only at t = H).
inline double nominal_cost_prefix(const NominalPlan& plan, int t) {
  const int H = plan.horizon();
  if (t < 0 || t > H) throw InvalidArgument("nominal_cost_prefix: step out of range");
  double acc = 0.0;
  for (int s = 0; s <= std::min(t, H - 1); ++s) acc += plan.stage_costs[static_cast<std::size_t>(s)];
  if (t == H) acc += plan.terminal;
  return acc;
}

/// Fills states, stage costs and totals of a plan from its controls.
inline void evaluate_plan(NominalPlan& plan, const StateVec& x0, const AgentSystem& sys, const CostModel& cost) {
  plan.states = rollout_nominal(x0, plan.controls, sys);
  plan.stage_costs.resize(plan.controls.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < plan.controls.size(); ++t) {
    plan.stage_costs[t] = stage_cost(plan.states[t], plan.controls[t], cost);
    acc += plan.stage_costs[t];
  }
  plan.terminal = terminal_cost(plan.states.back(), cost);
  plan.cost = acc + plan.terminal;
}

// ---------------------------------------------------------------------------

/// Control-sequence constraint set of one OCP instance.
class FeasibleSet {
 public:
  explicit FeasibleSet(const OCPProblem& p)
      : sys_(p.system), H_(p.horizon), nu_(p.system.nu()), u_min_(p.system.u_min()), u_max_(p.system.u_max()),
        du_max_(p.system.du_max()), u_init_(p.u_init.cwiseMax(u_min_).cwiseMin(u_max_)), x0_(p.x0) {
    // Steering bounds: phi_max wherever the canonical (zero-seeking) sequence can respect it, otherwise
    // relaxed to what that sequence reaches. This keeps the set nonempty from any valid state.
    const int M = sys_.agents();
    phi_bound_.assign(static_cast<std::size_t>(M), std::vector<double>(static_cast<std::size_t>(H_ + 1), p.phi_max));
    canonical_ = ControlSeq(static_cast<std::size_t>(H_), Vector::Zero(nu_));
    sweep(canonical_, &phi_bound_);
  }

  int horizon() const { return H_; }
  const ControlVec& u_init() const { return u_init_; }
  const ControlSeq& canonical() const { return canonical_; }
  double phi_bound(int agent, int t) const {
    return phi_bound_[static_cast<std::size_t>(agent)][static_cast<std::size_t>(t)];
  }

  /// Sequential clamp into the set. Identity on feasible sequences. Returns false when the
  /// steering bound could not be met along the way (caller falls back to canonical()).
  bool project(ControlSeq& U) const { return sweep(U, nullptr); }

  /// Largest violation of any constraint (0 when feasible).
  double violation(const ControlSeq& U) const {
    double worst = 0.0;
    Vector prev = u_init_;
    Vector phi = steering(x0_);
    for (int t = 0; t < H_; ++t) {
      const Vector& u = U[static_cast<std::size_t>(t)];
      worst = std::max(worst, (u - u_max_).maxCoeff());
      worst = std::max(worst, (u_min_ - u).maxCoeff());
      worst = std::max(worst, ((u - prev).cwiseAbs() - du_max_).maxCoeff());
      for (int a = 0; a < sys_.agents(); ++a) {
        phi[a] = phi[a] + u[2 * a + 1] * sys_.cars[a].dt;
        worst = std::max(worst, std::abs(phi[a]) - phi_bound(a, t + 1));
      }
      prev = u;
    }
    return worst;
  }

  /// Linear inequality rows on a step d (time-major index t * nu + c) around the sequence U.
  SparseRows rows(const ControlSeq& U, const StateSeq& X) const {
    SparseRows A(static_cast<Eigen::Index>(H_) * nu_);
    for (int t = 0; t < H_; ++t) {
      const Vector& u = U[static_cast<std::size_t>(t)];
      const Vector& prev = t == 0 ? u_init_ : U[static_cast<std::size_t>(t - 1)];
      for (int c = 0; c < nu_; ++c) {
        const Eigen::Index k = static_cast<Eigen::Index>(t) * nu_ + c;
        A.begin_row(u_max_[c] - u[c]);
        A.add(k, 1.0);
        A.begin_row(u[c] - u_min_[c]);
        A.add(k, -1.0);
        const double diff = u[c] - prev[c];
        A.begin_row(du_max_[c] - diff);
        A.add(k, 1.0);
        if (t > 0) A.add(k - nu_, -1.0);
        A.begin_row(du_max_[c] + diff);
        A.add(k, -1.0);
        if (t > 0) A.add(k - nu_, 1.0);
      }
    }
    for (int a = 0; a < sys_.agents(); ++a) {
      const int c = 2 * a + 1;
      const double dt = sys_.cars[a].dt;
      for (int t = 1; t <= H_; ++t) {
        const double phi = X[static_cast<std::size_t>(t)][4 * a + 3];
        const double b = phi_bound(a, t);
        A.begin_row(b - phi);
        for (int s = 0; s < t; ++s) A.add(static_cast<Eigen::Index>(s) * nu_ + c, dt);
        A.begin_row(b + phi);
        for (int s = 0; s < t; ++s) A.add(static_cast<Eigen::Index>(s) * nu_ + c, -dt);
      }
    }
    A.finish();
    return A;
  }

 private:
  Vector steering(const Vector& x) const {
    Vector phi(sys_.agents());
    for (int a = 0; a < sys_.agents(); ++a) phi[a] = x[4 * a + 3];
    return phi;
  }

  static void clamp_into(double& v, double lo, double hi) {
    if (v < lo)
      v = lo;
    else if (v > hi)
      v = hi;
  }

  // With `relax` set, unreachable steering bounds are widened in place instead of reported.
  bool sweep(ControlSeq& U, std::vector<std::vector<double>>* relax) const {
    bool ok = true;
    Vector prev = u_init_;
    Vector phi = steering(x0_);
    for (int t = 0; t < H_; ++t) {
      Vector& u = U[static_cast<std::size_t>(t)];
      for (int c = 0; c < nu_; ++c) {
        const double lo = std::max(u_min_[c], prev[c] - du_max_[c]);
        const double hi = std::min(u_max_[c], prev[c] + du_max_[c]);
        if (c % 2 == 1) {
          const int a = c / 2;
          const double dt = sys_.cars[a].dt;
          const double b = phi_bound(a, t + 1);
          const double plo = (-b - phi[a]) / dt, phi_hi = (b - phi[a]) / dt;
          if (std::max(lo, plo) <= std::min(hi, phi_hi)) {
            clamp_into(u[c], std::max(lo, plo), std::min(hi, phi_hi));
          } else {
            u[c] = phi_hi < lo ? lo : hi;  // closest reachable rate
            const double reached = std::abs(phi[a] + u[c] * dt);
            if (relax)
              (*relax)[static_cast<std::size_t>(a)][static_cast<std::size_t>(t + 1)] = std::max(b, reached);
            else if (reached > b)
              ok = false;
          }
          phi[a] = phi[a] + u[c] * dt;
        } else {
          clamp_into(u[c], lo, hi);
        }
      }
      prev = u;
    }
    return ok;
  }

  const AgentSystem& sys_;
  int H_;
  int nu_;
  Vector u_min_, u_max_, du_max_, u_init_;
  StateVec x0_;
  std::vector<std::vector<double>> phi_bound_;
  ControlSeq canonical_;
};

namespace detail {

struct Expansion {
  Vector gradient;
  Matrix hessian;
};

/// Gradient (adjoint sweep) and exact Hessian (second-order adjoint) of the single-shooting cost.
inline Expansion expand(const OCPProblem& p, const ControlSeq& U, const StateSeq& X) {
  const AgentSystem& sys = p.system;
  const int H = p.horizon, nx = sys.nx(), nu = sys.nu(), M = sys.agents();
  const Eigen::Index n = static_cast<Eigen::Index>(H) * nu;

  std::vector<Matrix> As(static_cast<std::size_t>(H)), Bs(static_cast<std::size_t>(H));
  for (int t = 0; t < H; ++t) {
    auto [A, B] = jacobians(X[static_cast<std::size_t>(t)], U[static_cast<std::size_t>(t)], sys);
    As[static_cast<std::size_t>(t)] = std::move(A);
    Bs[static_cast<std::size_t>(t)] = std::move(B);
  }

  Expansion e{Vector::Zero(n), Matrix::Zero(n, n)};
  const Matrix Wu2 = 2.0 * p.cost.weights.control;

  // Adjoint sweep.
  std::vector<Vector> lambda(static_cast<std::size_t>(H + 1));
  const auto terminal = state_cost_derivatives(X.back(), p.cost, true);
  lambda[static_cast<std::size_t>(H)] = terminal.grad;
  std::vector<Matrix> stage_hess(static_cast<std::size_t>(H));
  for (int t = H - 1; t >= 0; --t) {
    const auto st = state_cost_derivatives(X[static_cast<std::size_t>(t)], p.cost, false);
    const Vector& next = lambda[static_cast<std::size_t>(t + 1)];
    e.gradient.segment(static_cast<Eigen::Index>(t) * nu, nu) =
        Wu2 * U[static_cast<std::size_t>(t)] + Bs[static_cast<std::size_t>(t)].transpose() * next;
    lambda[static_cast<std::size_t>(t)] = st.grad + As[static_cast<std::size_t>(t)].transpose() * next;

    Matrix K = Matrix::Zero(nx + nu, nx + nu);
    K.topLeftCorner(nx, nx) = st.hess;
    K.bottomRightCorner(nu, nu) = Wu2;
    for (int a = 0; a < M; ++a) {
      const Matrix h = weighted_second_derivative(X[static_cast<std::size_t>(t)].segment<4>(4 * a),
                                                  U[static_cast<std::size_t>(t)].segment<2>(2 * a),
                                                  next.segment<4>(4 * a), sys.cars[a]);
      K.block<4, 4>(4 * a, 4 * a) += h.topLeftCorner<4, 4>();
      K.block<4, 2>(4 * a, nx + 2 * a) += h.topRightCorner<4, 2>();
      K.block<2, 4>(nx + 2 * a, 4 * a) += h.bottomLeftCorner<2, 4>();
      K.block<2, 2>(nx + 2 * a, nx + 2 * a) += h.bottomRightCorner<2, 2>();
    }
    stage_hess[static_cast<std::size_t>(t)] = std::move(K);
  }

  // Forward sensitivities S_t = dx_t / dU (only the first t*nu columns are nonzero).
  Matrix S = Matrix::Zero(nx, n);
  for (int t = 0; t < H; ++t) {
    const Matrix& K = stage_hess[static_cast<std::size_t>(t)];
    const Eigen::Index c = static_cast<Eigen::Index>(t) * nu;
    if (c > 0) {
      const auto Sx = S.leftCols(c);
      e.hessian.topLeftCorner(c, c).noalias() += Sx.transpose() * K.topLeftCorner(nx, nx) * Sx;
      const Matrix cross = Sx.transpose() * K.topRightCorner(nx, nu);
      e.hessian.block(0, c, c, nu) += cross;
      e.hessian.block(c, 0, nu, c) += cross.transpose();
    }
    e.hessian.block(c, c, nu, nu) += K.bottomRightCorner(nu, nu);
    // S_{t+1} = A_t S_t + B_t E_t
    if (c > 0) S.leftCols(c) = (As[static_cast<std::size_t>(t)] * S.leftCols(c)).eval();
    S.block(0, c, nx, nu) = Bs[static_cast<std::size_t>(t)];
  }
  e.hessian.noalias() += S.transpose() * terminal.hess * S;
  e.hessian = 0.5 * (e.hessian + e.hessian.transpose()).eval();
  return e;
}

inline double total_cost(const OCPProblem& p, const ControlSeq& U, StateSeq& X) {
  X = rollout_nominal(p.x0, U, p.system);
  double acc = 0.0;
  for (int t = 0; t < p.horizon; ++t) acc += stage_cost(X[static_cast<std::size_t>(t)], U[static_cast<std::size_t>(t)], p.cost);
  return acc + terminal_cost(X.back(), p.cost);
}

inline ControlSeq add_step(const ControlSeq& U, const Vector& d, double alpha, int nu) {
  ControlSeq out = U;
  for (std::size_t t = 0; t < out.size(); ++t) out[t] += alpha * d.segment(static_cast<Eigen::Index>(t) * nu, nu);
  return out;
}

}  // namespace detail

/// Solves the OCP to a local minimum. A supplied guess is projected into the feasible set first
/// (flagged as warm_start_projected when that changed it). Hitting the iteration limit returns the
/// best feasible iterate with converged = false.
inline NominalPlan solve_ocp(const OCPProblem& problem, const std::optional<ControlSeq>& guess = std::nullopt,
                             const SolverSettings& settings = {}) {
  problem.validate();
  settings.validate();
  const int H = problem.horizon, nu = problem.system.nu();
  const FeasibleSet set(problem);

  NominalPlan plan;
  ControlSeq U = set.canonical();
  if (guess) {
    require(static_cast<int>(guess->size()) == H, "solve_ocp: guess length must equal the horizon");
    ControlSeq projected = *guess;
    for (const auto& u : projected) require(u.size() == nu && u.allFinite(), "solve_ocp: invalid guess entry");
    const bool ok = set.project(projected);
    for (std::size_t t = 0; t < projected.size(); ++t)
      if (projected[t] != (*guess)[t]) plan.warm_start_projected = true;
    if (ok) U = std::move(projected);
    else plan.warm_start_projected = true;
  }

  StateSeq X;
  double J = detail::total_cost(problem, U, X);
  const QpSettings qp_settings{};

  const auto try_cost = [&](const ControlSeq& trial, StateSeq& Xt) {
    try {
      return detail::total_cost(problem, trial, Xt);
    } catch (const DynamicsError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  for (int it = 0; it < settings.max_iterations; ++it) {
    plan.iterations = it + 1;
    const detail::Expansion e = detail::expand(problem, U, X);
    const SparseRows rows = set.rows(U, X);
    const double base =
        settings.regularization_init * (1.0 + e.hessian.diagonal().cwiseAbs().maxCoeff());

    // Curvature along controls pinned at a box bound (gradient pushing outward) is decoupled from the
    // rest; the reduced Hessian on the free directions is left exact.
    Matrix model = e.hessian;
    if (Eigen::LLT<Matrix>(model).info() != Eigen::Success) {
      const Vector lo = problem.system.u_min(), hi = problem.system.u_max();
      for (int t = 0; t < H; ++t)
        for (int c = 0; c < nu; ++c) {
          const Eigen::Index k = static_cast<Eigen::Index>(t) * nu + c;
          const double u = U[static_cast<std::size_t>(t)][c];
          const double tol = 1e-9 * (hi[c] - lo[c]);
          const bool pinned = (u >= hi[c] - tol && e.gradient[k] < 0.0) || (u <= lo[c] + tol && e.gradient[k] > 0.0);
          if (!pinned) continue;
          const double diag = std::max(std::abs(model(k, k)), base);
          model.row(k).setZero();
          model.col(k).setZero();
          model(k, k) = diag;
        }
      // Remaining negative curvature: mirror it (|lambda|) rather than shifting every direction.
      if (Eigen::LLT<Matrix>(model).info() != Eigen::Success) {
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(model);
        const Vector mag = eig.eigenvalues().cwiseAbs().cwiseMax(base);
        model = eig.eigenvectors() * mag.asDiagonal() * eig.eigenvectors().transpose();
        model = 0.5 * (model + model.transpose()).eval();
      }
    }

    double reg = 0.0;
    bool accepted = false;
    bool done = false;
    for (int attempt = 0; attempt < 30 && !accepted && !done; ++attempt) {
      Matrix Hreg = model;
      if (reg > 0.0) Hreg.diagonal().array() += reg;
      if (Eigen::LLT<Matrix>(Hreg).info() != Eigen::Success) {
        reg = reg == 0.0 ? base : reg * settings.regularization_growth;
        continue;
      }
      const QpResult q = solve_qp(Hreg, e.gradient, rows, qp_settings);
      const Vector& d = q.d;
      const double slope = e.gradient.dot(d);
      const double predicted = -(slope + 0.5 * d.dot(Hreg * d));
      plan.step_norm = d.lpNorm<Eigen::Infinity>();

      if (plan.step_norm <= settings.tolerance || predicted <= settings.cost_tolerance * (1.0 + std::abs(J))) {
        done = true;
        plan.converged = true;
        ControlSeq trial = detail::add_step(U, d, 1.0, nu);
        if (set.project(trial)) {
          StateSeq Xt;
          const double Jt = try_cost(trial, Xt);
          if (Jt <= J) {
            U = std::move(trial);
            X = std::move(Xt);
            J = Jt;
          }
        }
        break;
      }

      double alpha = 1.0;
      for (int k = 0; k < settings.max_backtracks; ++k, alpha *= settings.backtrack) {
        ControlSeq trial = detail::add_step(U, d, alpha, nu);
        if (!set.project(trial)) continue;
        StateSeq Xt;
        const double Jt = try_cost(trial, Xt);
        if (Jt <= J + settings.armijo * alpha * slope) {
          U = std::move(trial);
          X = std::move(Xt);
          J = Jt;
          accepted = true;
          break;
        }
      }
      if (!accepted) reg = reg == 0.0 ? base : reg * settings.regularization_growth;
    }
    if (done || !accepted) break;
  }

  plan.controls = std::move(U);
  evaluate_plan(plan, problem.x0, problem.system, problem.cost);
  return plan;
}

}  // namespace decplan
