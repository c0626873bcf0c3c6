#include "decplan/scenario.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace decplan;

namespace {
Matrix randn(std::mt19937_64& rng, int r, int c, double s) {
  std::normal_distribution<double> N(0, s);
  Matrix m(r, c);
  for (int i = 0; i < r * c; ++i) m(i / c, i % c) = N(rng);
  return m;
}
Matrix one(double v) { return Matrix::Constant(1, 1, v); }
}  // namespace

TEST(Riccati, ScalarOneStep) {
  const LinearizedSystem lin{{one(1)}, {one(1)}};
  const auto g = riccati_backward(lin, {one(1), one(1), one(1)});
  EXPECT_EQ(g.L[0](0, 0), 0.5);
  EXPECT_EQ(g.P[0](0, 0), 1.5);
}

TEST(Riccati, ScalarTwoSteps) {
  const LinearizedSystem lin{{one(1), one(1)}, {one(1), one(1)}};
  const auto g = riccati_backward(lin, {one(1), one(1), one(1)});
  EXPECT_EQ(g.L[0](0, 0), 0.6);
  EXPECT_EQ(g.P[0](0, 0), 1.6);
  EXPECT_EQ(g.L[1](0, 0), 0.5);
}

TEST(Riccati, ClosedLoopCostMatchesBatchOptimum) {
  std::mt19937_64 rng(9);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    LinearizedSystem lin;
    for (int t = 0; t < 10; ++t) {
      lin.A.push_back(Matrix::Identity(4, 4) + randn(rng, 4, 4, 0.3));
      lin.B.push_back(randn(rng, 4, 2, 1));
    }
    const Matrix q = randn(rng, 4, 4, 1), r = randn(rng, 2, 2, 1);
    const LQRWeights w{q * q.transpose(), r * r.transpose() + 0.1 * Matrix::Identity(2, 2), 3 * Matrix::Identity(4, 4)};
    const Vector x0 = randn(rng, 4, 1, 1);
    const auto g = riccati_backward(lin, w);
    Vector x = x0;
    double J = 0;
    for (int t = 0; t < 10; ++t) {
      const Vector u = -g.L[t] * x;
      J += x.dot(w.Q * x) + u.dot(w.R * u);
      x = lin.A[t] * x + lin.B[t] * u;
    }
    J += x.dot(w.Qf * x);
    const double ref = oracle::batch_lq(lin.A, lin.B, w.Q, w.R, w.Qf, x0);
    worst = std::max(worst, std::abs(J - ref) / ref);
    // value function: x0' P0 x0
    EXPECT_NEAR(x0.dot(g.P[0] * x0), ref, 1e-8 * ref);
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(Riccati, GainsSatisfyStationarity) {
  std::mt19937_64 rng(10);
  LinearizedSystem lin;
  for (int t = 0; t < 5; ++t) {
    lin.A.push_back(Matrix::Identity(4, 4) + randn(rng, 4, 4, 0.2));
    lin.B.push_back(randn(rng, 4, 2, 1));
  }
  const LQRWeights w{Matrix::Identity(4, 4), Matrix::Identity(2, 2), Matrix::Identity(4, 4)};
  const auto g = riccati_backward(lin, w);
  for (int t = 0; t < 5; ++t) {
    const Matrix& P = g.P[t + 1];
    const Matrix res = (w.R + lin.B[t].transpose() * P * lin.B[t]) * g.L[t] - lin.B[t].transpose() * P * lin.A[t];
    EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((g.P[t] - g.P[t].transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Riccati, RejectsIndefiniteR) {
  const LinearizedSystem lin{{one(1)}, {one(1)}};
  EXPECT_THROW(riccati_backward(lin, {one(1), one(-1), one(1)}), InvalidArgument);
}

TEST(Feedback, ScalarExample) {
  const Vector u = apply_feedback(Vector::Constant(1, 1.0), one(0.5), Vector::Constant(1, 2.0), Vector::Zero(1));
  EXPECT_EQ(u[0], 0.0);
}

TEST(Feedback, JointMatchesPerAgentDesign) {
  const Scenario sc = make_scenario({{Vector::Zero(4), (Vector(4) << 4, 2, 0, 0).finished()},
                                     {(Vector(4) << 0, 2, 0, 0).finished(), (Vector(4) << 4, 0, 0, 0).finished()},
                                     {(Vector(4) << 0, 4, 0, 0).finished(), (Vector(4) << 4, 4, 0, 0).finished()}});
  const NominalPlan plan = solve_ocp(sc.problem(sc.x0, sc.horizon, Vector::Zero(6)));
  const auto joint = riccati_backward(linearize_along(plan, sc.system), sc.lqr_weights());
  const auto blocks = assemble_block_diagonal(decoupled_gains(plan, sc.system, split_weights(sc.lqr_weights(), 3)));
  for (std::size_t t = 0; t < joint.L.size(); ++t) {
    EXPECT_LE((joint.L[t] - blocks.L[t]).cwiseAbs().maxCoeff(), 1e-10 * (1 + joint.L[t].cwiseAbs().maxCoeff()));
    EXPECT_LE((joint.P[t] - blocks.P[t]).cwiseAbs().maxCoeff(), 1e-10 * (1 + joint.P[t].cwiseAbs().maxCoeff()));
  }
  // off-diagonal blocks of the joint design vanish
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) {
        EXPECT_LE(joint.P[0].block(4 * i, 4 * j, 4, 4).cwiseAbs().maxCoeff(), 1e-10);
      }
}
