#include "decplan/scenario.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace decplan;

namespace {
Vector v4(double a, double b, double c, double d) { return (Vector(4) << a, b, c, d).finished(); }
}  // namespace

TEST(Cost, StageAtGoalIsControlEnergy) {
  const Scenario sc = make_scenario({{v4(0, 0, 0, 0), v4(5, 3, 0, 0)}});
  const Vector u = (Vector(2) << 1, 2).finished();
  EXPECT_DOUBLE_EQ(stage_cost(v4(5, 3, 0, 0), u, sc.cost), 5.0);
  EXPECT_DOUBLE_EQ(stage_cost(v4(0, 0, 0, 0), Vector::Zero(2), sc.cost), 5 * 25 + 5 * 9);
}

TEST(Cost, CollisionPenaltyAtThreshold) {
  CollisionPenaltyParams p;
  Vector x = Vector::Zero(8);
  x[4] = 0.5;  // agents exactly r_thresh apart
  EXPECT_DOUBLE_EQ(collision_penalty(x, p, 2), p.scale);
  x[4] = 0.0;
  EXPECT_DOUBLE_EQ(collision_penalty(x, p, 2), p.scale * std::exp(0.25));
}

TEST(Cost, TrajectoryMatchesIndependentSum) {
  const Scenario sc = make_scenario(
      {{v4(0, 0, 0, 0), v4(4, 2, 0, 0)}, {v4(0, 2, 0, 0), v4(4, 0, 0, 0)}, {v4(0, 4, 0, 0), v4(4, 4, 0, 0)}});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1, 1);
  StateSeq xs;
  ControlSeq us;
  for (int t = 0; t <= 10; ++t) {
    Vector x(12);
    for (auto& e : x) e = 2 * U(rng);
    xs.push_back(x);
    if (t < 10) {
      Vector u(6);
      for (auto& e : u) e = U(rng);
      us.push_back(u);
    }
  }
  const double mine = trajectory_cost(xs, us, sc.cost);
  const double ref = oracle::trajectory(xs, us, sc.cost.weights.goal);
  EXPECT_NEAR(mine, ref, 1e-10 * ref);
}

TEST(Cost, TerminalHasNoCollisionTerm) {
  const Scenario sc = make_scenario({{v4(0, 0, 0, 0), v4(0, 0, 0, 0)}, {v4(0, 0, 0, 0), v4(0, 0, 0, 0)}});
  EXPECT_EQ(terminal_cost(Vector::Zero(8), sc.cost), 0.0);
  EXPECT_GT(state_cost(Vector::Zero(8), sc.cost), 0.0);
}

TEST(Cost, RejectsIndefiniteWeights) {
  ScenarioDefaults d;
  d.control_weight = (Matrix(2, 2) << 1, 0, 0, -1).finished();
  EXPECT_THROW(make_scenario({{v4(0, 0, 0, 0), v4(1, 0, 0, 0)}}, d), InvalidArgument);
}

TEST(Cost, DerivativesMatchFiniteDifferences) {
  const Scenario sc = make_scenario({{v4(0, 0, 0, 0), v4(2, 1, 0, 0)}, {v4(0.3, 0.2, 0, 0), v4(0, 2, 0, 0)}});
  const Vector x = (Vector(8) << 0.1, 0.2, 0.3, 0.1, 0.5, 0.1, -0.2, 0.05).finished();
  for (bool terminal : {false, true}) {
    const auto d = state_cost_derivatives(x, sc.cost, terminal);
    const auto f = [&](const Vector& z) {
      return (Vector(1) << (terminal ? terminal_cost(z, sc.cost) : state_cost(z, sc.cost))).finished();
    };
    const Matrix g = oracle::central_jacobian(f, x, 1e-6);
    EXPECT_LE((d.grad - g.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-5 * (1 + g.cwiseAbs().maxCoeff()));
    const Matrix Hf = oracle::central_jacobian(
        [&](const Vector& z) { return state_cost_derivatives(z, sc.cost, terminal).grad; }, x, 1e-6);
    EXPECT_LE((d.hess - Hf).cwiseAbs().maxCoeff(), 1e-4 * (1 + Hf.cwiseAbs().maxCoeff()));
  }
}
