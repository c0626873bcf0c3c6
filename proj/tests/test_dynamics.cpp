#include "decplan/dynamics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace decplan;

namespace {
Vector v4(double a, double b, double c, double d) { return (Vector(4) << a, b, c, d).finished(); }
Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }
}  // namespace

TEST(Step, StraightLine) {
  const Vector n = step_nominal(v4(0, 0, 0, 0), v2(1, 0), CarParams{});
  EXPECT_DOUBLE_EQ(n[0], 0.1);
  EXPECT_EQ(n[1], 0.0);
  EXPECT_EQ(n[2], 0.0);
  EXPECT_EQ(n[3], 0.0);
}

TEST(Step, SteeringRateOnly) {
  const Vector n = step_nominal(v4(1, 2, 0.3, 0.1), v2(0, 1), CarParams{});
  EXPECT_EQ(n.head<3>(), v4(1, 2, 0.3, 0).head<3>());
  EXPECT_DOUBLE_EQ(n[3], 0.2);
}

TEST(Step, MatchesOracleOnRandomStates) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-2, 2), P(-1.2, 1.2);
  for (int k = 0; k < 500; ++k) {
    const Vector x = v4(U(rng), U(rng), U(rng), P(rng)), u = v2(U(rng), U(rng));
    EXPECT_LE((step_nominal(x, u, CarParams{}) - oracle::car_step(x, u)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Step, NoisyIsNominalWithPerturbedInput) {
  const Vector x = v4(0.3, -1, 0.4, 0.2), u = v2(1, -0.5), w = v2(0.7, -1.1);
  EXPECT_EQ(step_noisy(x, u, w, 0.3, CarParams{}), step_nominal(x, Vector(u + 0.3 * w), CarParams{}));
  EXPECT_EQ(step_noisy(x, u, w, 0.0, CarParams{}), step_nominal(x, u, CarParams{}));
}

TEST(Step, SteeringGuard) {
  const double bad = std::numbers::pi / 2;
  EXPECT_THROW(step_nominal(v4(0, 0, 0, bad), v2(1, 0), CarParams{}), DynamicsError);
  EXPECT_THROW(step_nominal(v4(0, 0, 0, 0), v2(std::nan(""), 0), CarParams{}), DynamicsError);
}

TEST(Step, MultiAgentStacksIndependentCars) {
  const AgentSystem sys(2, CarParams{}, ControlLimits{});
  const Vector a = v4(0, 0, 0.2, 0.1), b = v4(3, 1, -0.5, -0.2), ua = v2(1, 0.5), ub = v2(-0.4, 0.2);
  const Vector next = step_nominal(stack_agents({a, b}), stack_agents({ua, ub}), sys);
  EXPECT_EQ(next.head<4>(), step_nominal(a, ua, CarParams{}));
  EXPECT_EQ(next.tail<4>(), step_nominal(b, ub, CarParams{}));
}

TEST(Jacobian, CentralDifferenceOn1000States) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-3, 3), P(-1.2, 1.2);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const Vector x = v4(U(rng), U(rng), U(rng), P(rng)), u = v2(U(rng) / 1.5, U(rng) / 1.5);
    const auto [A, B] = jacobians(x, u, CarParams{});
    const Matrix Af = oracle::central_jacobian([&](const Vector& s) { return oracle::car_step(s, u); }, x, 1e-6);
    const Matrix Bf = oracle::central_jacobian([&](const Vector& c) { return oracle::car_step(x, c); }, u, 1e-6);
    worst = std::max({worst, (A - Af).cwiseAbs().maxCoeff(), (B - Bf).cwiseAbs().maxCoeff()});
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Jacobian, FdErrorShrinksQuadratically) {
  const Vector x = v4(0.2, -0.1, 0.7, 0.4), u = v2(1.3, 0.4);
  const auto [A, B] = jacobians(x, u, CarParams{});
  const auto err = [&](double h) {
    const auto [Af, Bf] = fd_jacobians(x, u, h, CarParams{});
    return std::max((A - Af).cwiseAbs().maxCoeff(), (B - Bf).cwiseAbs().maxCoeff());
  };
  const double e1 = err(1e-2), e2 = err(5e-3);
  EXPECT_NEAR(e1 / e2, 4.0, 0.5);
}

TEST(Jacobian, OriginExample) {
  const auto [A, B] = jacobians(v4(0, 0, 0, 0), v2(1, 0), CarParams{});
  Matrix Ae = Matrix::Identity(4, 4);
  Ae(1, 2) = 0.1;
  Ae(2, 3) = 0.2;
  Matrix Be = Matrix::Zero(4, 2);
  Be(0, 0) = 0.1;
  Be(3, 1) = 0.1;
  EXPECT_LE((A - Ae).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((B - Be).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Jacobian, CrossAgentBlocksAreExactlyZero) {
  const AgentSystem sys(3, CarParams{}, ControlLimits{});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  Vector x(12), u(6);
  for (auto& e : x) e = U(rng);
  for (auto& e : u) e = U(rng);
  const auto [A, B] = jacobians(x, u, sys);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      EXPECT_TRUE(A.block(4 * i, 4 * j, 4, 4).isZero(0.0));
      EXPECT_TRUE(B.block(4 * i, 2 * j, 4, 2).isZero(0.0));
    }
}

TEST(Noise, ScalesByLimitAndCovariance) {
  NoiseModel m;
  m.sigma_w = (Matrix(2, 2) << 4, 0, 0, 0.25).finished();
  const Vector w = scale_noise(v2(1, 1), m);
  EXPECT_DOUBLE_EQ(w[0], 4.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
}

TEST(Noise, SampleMomentsMatchCovariance) {
  NoiseModel m;
  m.sigma_w = (Matrix(2, 2) << 1, 0.5, 0.5, 1).finished();
  std::mt19937_64 rng(4);
  const int N = 200000;
  Matrix S = Matrix::Zero(2, 2);
  Vector mu = Vector::Zero(2);
  for (int k = 0; k < N; ++k) {
    const Vector w = sample_noise(rng, m);
    mu += w;
    S += w * w.transpose();
  }
  mu /= N;
  S /= N;
  // cov(w) = diag(u_max) sigma diag(u_max) = 4 sigma
  EXPECT_LE(mu.cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LE((S - 4 * m.sigma_w).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Noise, RejectsIndefiniteCovariance) {
  NoiseModel m;
  m.sigma_w = (Matrix(2, 2) << 1, 2, 2, 1).finished();
  EXPECT_THROW(m.validate(), InvalidArgument);
}
