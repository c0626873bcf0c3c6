#pragma once

// Kinematic car model, stacked multi-agent system and the actuator-noise model.

#include "decplan/types.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <utility>

namespace decplan {

/// States with |steering angle| at or beyond pi/2 - kSteeringGuard are rejected.
inline constexpr double kSteeringGuard = 1e-3;

struct CarParams {
  double wheelbase = 0.5;  // [m]
  double dt = 0.1;         // [s]

  void validate() const {
    require(wheelbase > 0.0 && std::isfinite(wheelbase), "car.wheelbase must be > 0");
    require(dt > 0.0 && std::isfinite(dt), "car.dt must be > 0");
  }
};

/// Per-agent control bounds: u_min <= u <= u_max and |u_t - u_{t-1}| <= du_max.
struct ControlLimits {
  Vector u_min = Vector::Constant(kAgentControlDim, -2.0);
  Vector u_max = Vector::Constant(kAgentControlDim, 2.0);
  Vector du_max = Vector::Constant(kAgentControlDim, 1.0);

  void validate() const {
    require(u_min.size() == kAgentControlDim && u_max.size() == kAgentControlDim &&
                du_max.size() == kAgentControlDim,
            "limits: vectors must have 2 entries");
    require(all_finite(u_min) && all_finite(u_max) && all_finite(du_max), "limits: non-finite entry");
    require((u_min.array() < u_max.array()).all(), "limits: u_min < u_max required");
    require((du_max.array() > 0.0).all(), "limits: du_max > 0 required");
  }
};

/// Actuator noise w = u_max * nu with nu ~ N(0, sigma_w); the executed input is u + epsilon * w.
struct NoiseModel {
  double epsilon = 0.0;
  Matrix sigma_w = Matrix::Identity(kAgentControlDim, kAgentControlDim);
  Vector u_max = Vector::Constant(kAgentControlDim, 2.0);

  void validate() const {
    require(epsilon >= 0.0 && std::isfinite(epsilon), "noise.epsilon must be >= 0");
    require(sigma_w.rows() == kAgentControlDim && sigma_w.cols() == kAgentControlDim,
            "noise.covariance must be 2x2");
    require((sigma_w - sigma_w.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
            "noise.covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_w);
    require(eig.eigenvalues().minCoeff() >= -1e-12, "noise.covariance must be positive semidefinite");
    require(u_max.size() == kAgentControlDim, "noise.u_max must have 2 entries");
  }
};

/// M transition-independent cars; stacked state is agent-major (4 entries per agent).
struct AgentSystem {
  std::vector<CarParams> cars{CarParams{}};
  std::vector<ControlLimits> limits{ControlLimits{}};

  AgentSystem() = default;
  AgentSystem(int agents, CarParams car, ControlLimits lim)
      : cars(static_cast<std::size_t>(agents), car), limits(static_cast<std::size_t>(agents), lim) {}

  int agents() const { return static_cast<int>(cars.size()); }
  int nx() const { return kAgentStateDim * agents(); }
  int nu() const { return kAgentControlDim * agents(); }

  Vector u_min() const { return stack_limit(&ControlLimits::u_min); }
  Vector u_max() const { return stack_limit(&ControlLimits::u_max); }
  Vector du_max() const { return stack_limit(&ControlLimits::du_max); }

  void validate() const {
    require(agents() >= 1, "system: at least one agent required");
    require(limits.size() == cars.size(), "system: one limit block per agent required");
    for (const auto& c : cars) c.validate();
    for (const auto& l : limits) l.validate();
  }

 private:
  Vector stack_limit(Vector ControlLimits::*field) const {
    Vector out(nu());
    for (int j = 0; j < agents(); ++j) out.segment<kAgentControlDim>(kAgentControlDim * j) = limits[j].*field;
    return out;
  }
};

namespace detail {

inline void check_car_state(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) {
  if (!x.allFinite() || !u.allFinite()) throw DynamicsError("non-finite state or control");
  if (std::abs(x[3]) >= std::numbers::pi / 2.0 - kSteeringGuard)
    throw DynamicsError("steering angle at singularity: |phi| = " + std::to_string(std::abs(x[3])));
}

inline void check_dims(const AgentSystem& sys, const Vector& x, const Vector& u) {
  if (x.size() != sys.nx() || u.size() != sys.nu())
    throw InvalidArgument("dimension mismatch: expected state " + std::to_string(sys.nx()) + ", control " +
                          std::to_string(sys.nu()));
}

}  // namespace detail

/// One car: f(x) + B(x) u with f(x) = x and
/// B(x) = dt * [[cos th, 0], [sin th, 0], [tan phi / L, 0], [0, 1]].
inline Vector step_nominal(const Vector& x, const Vector& u, const CarParams& p) {
  require(x.size() == kAgentStateDim && u.size() == kAgentControlDim, "step_nominal: expects a single car");
  detail::check_car_state(x, u);
  const double v = u[0];
  Vector next(kAgentStateDim);
  next[0] = x[0] + v * std::cos(x[2]) * p.dt;
  next[1] = x[1] + v * std::sin(x[2]) * p.dt;
  next[2] = x[2] + v / p.wheelbase * std::tan(x[3]) * p.dt;
  next[3] = x[3] + u[1] * p.dt;
  return next;
}

inline Vector step_noisy(const Vector& x, const Vector& u, const Vector& w, double epsilon, const CarParams& p) {
  require(w.size() == u.size(), "step_noisy: noise dimension mismatch");
  return step_nominal(x, u + epsilon * w, p);
}

/// Analytic Jacobians (A, B) of the car update at (x, u).
inline std::pair<Matrix, Matrix> jacobians(const Vector& x, const Vector& u, const CarParams& p) {
  require(x.size() == kAgentStateDim && u.size() == kAgentControlDim, "jacobians: expects a single car");
  detail::check_car_state(x, u);
  const double v = u[0], c = std::cos(x[2]), s = std::sin(x[2]);
  const double t = std::tan(x[3]), sec2 = 1.0 + t * t;
  Matrix A = Matrix::Identity(kAgentStateDim, kAgentStateDim);
  A(0, 2) = -v * s * p.dt;
  A(1, 2) = v * c * p.dt;
  A(2, 3) = v / p.wheelbase * sec2 * p.dt;
  Matrix B = Matrix::Zero(kAgentStateDim, kAgentControlDim);
  B(0, 0) = c * p.dt;
  B(1, 0) = s * p.dt;
  B(2, 0) = t / p.wheelbase * p.dt;
  B(3, 1) = p.dt;
  return {std::move(A), std::move(B)};
}

/// Sum_i lambda_i * Hessian of component i of the car update over z = (x, u), a 6x6 matrix.
inline Matrix weighted_second_derivative(const Vector& x, const Vector& u, const Vector& lambda,
                                         const CarParams& p) {
  const double v = u[0], c = std::cos(x[2]), s = std::sin(x[2]);
  const double t = std::tan(x[3]), sec2 = 1.0 + t * t;
  Matrix h = Matrix::Zero(6, 6);
  // heading-heading and heading-velocity terms from the position rows
  h(2, 2) = p.dt * (-lambda[0] * v * c - lambda[1] * v * s);
  h(2, 4) = h(4, 2) = p.dt * (-lambda[0] * s + lambda[1] * c);
  // steering terms from the heading row
  h(3, 3) = lambda[2] * p.dt * v / p.wheelbase * 2.0 * sec2 * t;
  h(3, 4) = h(4, 3) = lambda[2] * p.dt * sec2 / p.wheelbase;
  return h;
}

/// Central-difference Jacobians of an arbitrary step function f(x, u).
template <typename StepFn>
std::pair<Matrix, Matrix> fd_jacobians(StepFn&& f, const Vector& x, const Vector& u, double h) {
  require(h > 0.0, "fd_jacobians: step size must be positive");
  const Vector f0 = f(x, u);
  Matrix A(f0.size(), x.size()), B(f0.size(), u.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    A.col(i) = (f(xp, u) - f(xm, u)) / (2.0 * h);
  }
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    Vector up = u, um = u;
    up[i] += h;
    um[i] -= h;
    B.col(i) = (f(x, up) - f(x, um)) / (2.0 * h);
  }
  return {std::move(A), std::move(B)};
}

inline std::pair<Matrix, Matrix> fd_jacobians(const Vector& x, const Vector& u, double h, const CarParams& p) {
  return fd_jacobians([&p](const Vector& xs, const Vector& us) { return step_nominal(xs, us, p); }, x, u, h);
}

// ---------------------------------------------------------------------------
// Agent stacking. Ordering is agent-major and fixed.

inline Vector stack_agents(const std::vector<Vector>& parts) {
  require(!parts.empty(), "stack_agents: no agents");
  const Eigen::Index block = parts.front().size();
  Vector out(block * static_cast<Eigen::Index>(parts.size()));
  for (std::size_t j = 0; j < parts.size(); ++j) {
    require(parts[j].size() == block, "stack_agents: inconsistent block sizes");
    out.segment(block * static_cast<Eigen::Index>(j), block) = parts[j];
  }
  return out;
}

inline std::vector<Vector> unstack_agents(const Vector& stacked, int agents) {
  require(agents >= 1 && stacked.size() % agents == 0, "unstack_agents: size not divisible by agent count");
  const Eigen::Index block = stacked.size() / agents;
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(agents));
  for (int j = 0; j < agents; ++j) out.emplace_back(stacked.segment(block * j, block));
  return out;
}

// ---------------------------------------------------------------------------
// Stacked-system versions.

inline Vector step_nominal(const Vector& x, const Vector& u, const AgentSystem& sys) {
  detail::check_dims(sys, x, u);
  Vector next(x.size());
  for (int j = 0; j < sys.agents(); ++j)
    next.segment<kAgentStateDim>(kAgentStateDim * j) =
        step_nominal(Vector(x.segment<kAgentStateDim>(kAgentStateDim * j)),
                     Vector(u.segment<kAgentControlDim>(kAgentControlDim * j)), sys.cars[j]);
  return next;
}

inline Vector step_noisy(const Vector& x, const Vector& u, const Vector& w, double epsilon, const AgentSystem& sys) {
  require(w.size() == u.size(), "step_noisy: noise dimension mismatch");
  return step_nominal(x, u + epsilon * w, sys);
}

/// Block-diagonal Jacobians of the stacked system; cross-agent blocks are exactly zero.
inline std::pair<Matrix, Matrix> jacobians(const Vector& x, const Vector& u, const AgentSystem& sys) {
  detail::check_dims(sys, x, u);
  Matrix A = Matrix::Zero(sys.nx(), sys.nx());
  Matrix B = Matrix::Zero(sys.nx(), sys.nu());
  for (int j = 0; j < sys.agents(); ++j) {
    auto [Aj, Bj] = jacobians(Vector(x.segment<kAgentStateDim>(kAgentStateDim * j)),
                              Vector(u.segment<kAgentControlDim>(kAgentControlDim * j)), sys.cars[j]);
    A.block<kAgentStateDim, kAgentStateDim>(kAgentStateDim * j, kAgentStateDim * j) = Aj;
    B.block<kAgentStateDim, kAgentControlDim>(kAgentStateDim * j, kAgentControlDim * j) = Bj;
  }
  return {std::move(A), std::move(B)};
}

inline std::pair<Matrix, Matrix> fd_jacobians(const Vector& x, const Vector& u, double h, const AgentSystem& sys) {
  return fd_jacobians([&sys](const Vector& xs, const Vector& us) { return step_nominal(xs, us, sys); }, x, u, h);
}

// ---------------------------------------------------------------------------
// Noise.

/// Maps a unit draw nu to w = u_max * (chol(sigma_w) nu).
inline Vector scale_noise(const Vector& nu, const NoiseModel& model) {
  require(nu.size() == kAgentControlDim, "scale_noise: expects a 2-vector");
  Matrix root;
  if (model.sigma_w.isDiagonal(0.0)) {
    root = model.sigma_w.diagonal().cwiseSqrt().asDiagonal();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(model.sigma_w);
    root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           eig.eigenvectors().transpose();
  }
  return model.u_max.cwiseProduct(root * nu);
}

/// Draws one actuator-noise vector for one agent; epsilon is applied by step_noisy.
template <typename Engine>
Vector sample_noise(Engine& rng, const NoiseModel& model) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector nu(kAgentControlDim);
  for (int i = 0; i < kAgentControlDim; ++i) nu[i] = normal(rng);
  return scale_noise(nu, model);
}

}  // namespace decplan
