#pragma once

// Exact dynamic programming on a tiny discrete system, compared against the greedy policy
// argmin_u c(x, u) as noise swamps the dynamics.
//
// System: a 1-D double integrator on a ring of positions. Velocity v in [-V, V], acceleration
// a in [-A, A]. With probability 1 - lambda the step is the nominal one
//
//   v' = clamp(v + a, -V, V),   p' = (p + v') mod P
//
// and with probability lambda the next state is drawn uniformly from the grid, whatever the
// action. lambda = eps^2 / (1 + eps^2) is the noise share of the next-state spread, so eps = 0 is
// deterministic and eps = +inf is the fully swamped limit.
//
// Stage cost q(p, v) + r a^2 charges ring distance to the goal and speed, so the greedy policy
// never accelerates: moving costs now and pays off later.

#include "decplan/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace decplan {

struct DpProblem {
  int positions = 31;
  int max_speed = 3;
  int max_accel = 2;
  int horizon = 10;
  int goal = 0;
  double position_weight = 1.0;
  double speed_weight = 0.1;
  double control_weight = 2.0;

  static constexpr int kMaxCells = 10000;
  static constexpr int kMaxActions = 9;
  static constexpr int kMaxHorizon = 10;

  int speeds() const { return 2 * max_speed + 1; }
  int cells() const { return positions * speeds(); }
  int actions() const { return 2 * max_accel + 1; }

  void validate() const {
    require(positions >= 2, "dp: positions must be >= 2");
    require(max_speed >= 1, "dp: max_speed must be >= 1");
    require(max_accel >= 1, "dp: max_accel must be >= 1");
    require(horizon >= 1, "dp: horizon must be >= 1");
    require(goal >= 0 && goal < positions, "dp: goal outside the ring");
    require(position_weight >= 0.0 && speed_weight >= 0.0 && control_weight > 0.0,
            "dp: weights must be nonnegative (control weight positive)");
    require(cells() <= kMaxCells, "dp: state grid exceeds 10000 cells");
    require(actions() <= kMaxActions, "dp: more than 9 actions");
    require(horizon <= kMaxHorizon, "dp: horizon exceeds 10 steps");
  }
};

struct DpPoint {
  double epsilon = 0.0;        // +inf for the fully swamped limit
  double agreement = 0.0;      // fraction of (t, state) pairs where greedy is DP-optimal
  double optimal_cost = 0.0;   // mean optimal cost-to-go from t = 0 over all states
  double greedy_cost = 0.0;    // same for the greedy policy
  double relative_gap = 0.0;   // (greedy - optimal) / optimal
};

struct DpReport {
  std::vector<DpPoint> points;
  bool nondecreasing = true;   // agreement along the supplied grid order
};

namespace detail {

inline int ring_distance(int a, int b, int n) {
  const int d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

}  // namespace detail

inline double dp_state_cost(const DpProblem& pb, int p, int v) {
  const double d = detail::ring_distance(p, pb.goal, pb.positions);
  return pb.position_weight * d * d + pb.speed_weight * v * v;
}

inline double swamping_ratio(double epsilon) {
  if (std::isinf(epsilon)) return 1.0;
  return epsilon * epsilon / (1.0 + epsilon * epsilon);
}

/// Exact optimal and greedy evaluation at one noise level.
inline DpPoint dp_evaluate(const DpProblem& pb, double epsilon) {
  pb.validate();
  require(epsilon >= 0.0 && !std::isnan(epsilon), "dp: epsilon must be >= 0");
  const int P = pb.positions, V = pb.max_speed, A = pb.max_accel, S = pb.speeds();
  const double lambda = swamping_ratio(epsilon);
  const auto index = [&](int p, int v) { return static_cast<std::size_t>(p * S + (v + V)); };

  const std::size_t n = static_cast<std::size_t>(pb.cells());
  std::vector<double> Vopt(n), Vgreedy(n);
  for (int p = 0; p < P; ++p)
    for (int v = -V; v <= V; ++v) Vopt[index(p, v)] = Vgreedy[index(p, v)] = dp_state_cost(pb, p, v);

  const auto mean_of = [&](const std::vector<double>& x) {
    double m = 0.0;
    for (double e : x) m += e;
    return m / static_cast<double>(x.size());
  };
  // E[V(x')] given (p, v, a); the uniform branch is the same for every action.
  const auto expected = [&](const std::vector<double>& Vn, double uniform, int p, int v, int a) {
    const int vn = std::clamp(v + a, -V, V);
    const int pn = ((p + vn) % P + P) % P;
    return (1.0 - lambda) * Vn[index(pn, vn)] + lambda * uniform;
  };

  long agree = 0, total = 0;
  std::vector<double> nextOpt(n), nextGreedy(n);
  for (int t = pb.horizon - 1; t >= 0; --t) {
    const double mOpt = mean_of(Vopt), mGreedy = mean_of(Vgreedy);
    for (int p = 0; p < P; ++p)
      for (int v = -V; v <= V; ++v) {
        const double q = dp_state_cost(pb, p, v);
        double best = std::numeric_limits<double>::infinity();
        double q_greedy = 0.0;
        for (int a = -A; a <= A; ++a) {
          const double Q = q + pb.control_weight * a * a + expected(Vopt, mOpt, p, v, a);
          best = std::min(best, Q);
          if (a == 0) q_greedy = Q;
        }
        // argmin_a c(x, a) is a = 0 because q does not depend on a
        if (q_greedy <= best + 1e-12 * (1.0 + std::abs(best))) ++agree;
        ++total;
        nextOpt[index(p, v)] = best;
        nextGreedy[index(p, v)] = q + expected(Vgreedy, mGreedy, p, v, 0);
      }
    Vopt.swap(nextOpt);
    Vgreedy.swap(nextGreedy);
  }

  DpPoint out;
  out.epsilon = epsilon;
  out.agreement = static_cast<double>(agree) / static_cast<double>(total);
  out.optimal_cost = mean_of(Vopt);
  out.greedy_cost = mean_of(Vgreedy);
  out.relative_gap = out.optimal_cost > 0.0 ? (out.greedy_cost - out.optimal_cost) / out.optimal_cost : 0.0;
  return out;
}

/// Runs dp_evaluate along `grid` (use +inf for the swamped limit).
inline DpReport high_noise_dp_check(const DpProblem& pb, const std::vector<double>& grid) {
  require(!grid.empty(), "dp: epsilon grid must be nonempty");
  DpReport r;
  for (double eps : grid) {
    r.points.push_back(dp_evaluate(pb, eps));
    if (r.points.size() >= 2 && r.points.back().agreement < r.points[r.points.size() - 2].agreement)
      r.nondecreasing = false;
  }
  return r;
}

inline std::vector<double> default_dp_grid() {
  return {0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, std::numeric_limits<double>::infinity()};
}

}  // namespace decplan
