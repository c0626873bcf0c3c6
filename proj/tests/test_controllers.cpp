#include "decplan/simulation.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace decplan;

namespace {
Vector v4(double a, double b, double c, double d) { return (Vector(4) << a, b, c, d).finished(); }
Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

const Scenario& single() {
  static const Scenario sc = make_scenario({{v4(0, 0, 0, 0), v4(5, 3, 0, 0)}});
  return sc;
}

const Scenario& three() {
  static const Scenario sc = make_scenario(
      {{v4(0, 0, 0, 0), v4(4, 2, 0, 0)}, {v4(0, 2, 0, 0), v4(4, 0, 0, 0)}, {v4(0, 4, 0, 0), v4(4, 4, 0, 0)}});
  return sc;
}

RolloutRecord episode(const Scenario& sc, ControllerConfig c, double eps, std::uint64_t seed) {
  return run_episode(EpisodeSpec{&sc, c, eps, seed});
}

ControllerConfig cfg(ControllerKind k, int hc = 7, double thr = 0.02) {
  ControllerConfig c;
  c.kind = k;
  c.control_horizon = hc;
  c.threshold = thr;
  return c;
}
}  // namespace

TEST(Constrain, Example) {
  const ControlVec u = constrain(v2(5, 0), v2(2, 0), ControlLimits{});
  EXPECT_EQ(u, v2(2, 0));
}

TEST(Constrain, IsComponentwiseProjection) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-6, 6), P(-2, 2);
  for (int k = 0; k < 1000; ++k) {
    const Vector u = v2(U(rng), U(rng)), prev = v2(P(rng), P(rng));
    const Vector out = constrain(u, prev, ControlLimits{});
    for (int i = 0; i < 2; ++i) {
      const double lo = std::max(-2.0, prev[i] - 1.0), hi = std::min(2.0, prev[i] + 1.0);
      EXPECT_EQ(out[i], std::clamp(u[i], lo, hi));
    }
    EXPECT_EQ(oracle::constraint_violation({out}, prev), 0.0);
    EXPECT_EQ(constrain(out, prev, ControlLimits{}), out);
  }
}

TEST(Trigger, Semantics) {
  EXPECT_TRUE(replan_trigger(1.1, 1.0, 0.05));
  EXPECT_FALSE(replan_trigger(1.02, 1.0, 0.05));
  EXPECT_TRUE(replan_trigger(0.9, 1.0, 0.05));
  EXPECT_FALSE(replan_trigger(0.9, 1.0, 0.05, TriggerMode::signed_));
  EXPECT_TRUE(replan_trigger(1.1, 1.0, 0.05, TriggerMode::signed_));
  // strict inequality
  EXPECT_FALSE(replan_trigger(1.5, 1.0, 0.5));
  EXPECT_TRUE(replan_trigger(1.0 + 1e-12, 1.0, 0.0));
  EXPECT_FALSE(replan_trigger(1.0, 1.0, 0.0));
}

TEST(Trigger, DegenerateBaselineNeverFires) {
  bool degenerate = false;
  EXPECT_FALSE(replan_trigger(5.0, 0.0, 0.01, TriggerMode::magnitude, &degenerate));
  EXPECT_TRUE(degenerate);
  EXPECT_FALSE(replan_trigger(5.0, std::nan(""), 0.01, TriggerMode::magnitude, &degenerate));
  EXPECT_TRUE(degenerate);
  replan_trigger(5.0, 1.0, 0.01, TriggerMode::magnitude, &degenerate);
  EXPECT_FALSE(degenerate);
}

TEST(Controllers, ZeroNoiseAllMatchTheNominalPlan) {
  const Scenario& sc = single();
  const double ref = reference_nominal_cost(sc);
  for (auto k : {ControllerKind::MPC, ControllerKind::TLQR, ControllerKind::TLQR2}) {
    const auto rec = episode(sc, cfg(k), 0.0, 1);
    EXPECT_NEAR(rec.ratio, 1.0, 1e-6) << to_string(k);
    EXPECT_NEAR(rec.cost, ref, 1e-6 * ref);
  }
  EXPECT_EQ(episode(sc, cfg(ControllerKind::TLQR2), 0.0, 1).replans(), 0);
  EXPECT_EQ(episode(sc, cfg(ControllerKind::TLQR), 0.3, 1).replans(), 0);
  EXPECT_EQ(episode(sc, cfg(ControllerKind::MPC), 0.0, 1).replans(), sc.horizon);
}

TEST(Controllers, AppliedControlsAlwaysFeasible) {
  const Scenario& sc = single();
  for (auto k : {ControllerKind::MPC_SH, ControllerKind::TLQR, ControllerKind::TLQR2_SH}) {
    const auto rec = episode(sc, cfg(k, 5), 1.0, 3);
    EXPECT_EQ(oracle::constraint_violation(rec.controls, Vector::Zero(2)), 0.0) << to_string(k);
  }
}

TEST(Controllers, SteeringBlowupIsRecordedAsFailure) {
  const Scenario& sc = single();
  // T-LQR never replans, so large steering noise can carry it past the singularity
  const auto rec = episode(sc, cfg(ControllerKind::TLQR), 1.0, 3);
  ASSERT_TRUE(rec.failed);
  EXPECT_NE(rec.failure.find("steering"), std::string::npos);
  EXPECT_TRUE(std::isnan(rec.cost));
  EXPECT_EQ(rec.states.size(), rec.controls.size() + 1);
  EXPECT_LT(static_cast<int>(rec.controls.size()), sc.horizon);
  const auto sum = summarize({rec, episode(sc, cfg(ControllerKind::TLQR), 0.1, 3)});
  EXPECT_EQ(sum.failures, 1);
  EXPECT_DOUBLE_EQ(sum.failure_rate, 0.5);
  EXPECT_TRUE(std::isfinite(sum.mean_ratio));
}

TEST(Controllers, ZeroThresholdReplansEveryStepLikeMpc) {
  const Scenario& sc = single();
  for (std::uint64_t seed : {0, 1}) {
    const auto a = episode(sc, cfg(ControllerKind::TLQR2, 7, 0.0), 0.4, seed);
    const auto b = episode(sc, cfg(ControllerKind::MPC), 0.4, seed);
    EXPECT_EQ(a.replans(), sc.horizon - 1);
    EXPECT_NEAR(a.cost, b.cost, 1e-6 * b.cost);
    for (std::size_t t = 0; t < a.controls.size(); ++t) EXPECT_LE((a.controls[t] - b.controls[t]).norm(), 1e-5);
  }
}

TEST(Controllers, FullLengthShortHorizonIsTheFullController) {
  const Scenario& sc = single();
  const auto a = episode(sc, cfg(ControllerKind::MPC_SH, sc.horizon), 0.3, 4);
  const auto b = episode(sc, cfg(ControllerKind::MPC), 0.3, 4);
  EXPECT_EQ(a.cost, b.cost);
  const auto c = episode(sc, cfg(ControllerKind::TLQR2_SH, sc.horizon, 0.05), 0.3, 4);
  const auto d = episode(sc, cfg(ControllerKind::TLQR2, 7, 0.05), 0.3, 4);
  EXPECT_EQ(c.cost, d.cost);
  EXPECT_EQ(c.replan_steps, d.replan_steps);
}

TEST(Controllers, ShortHorizonPlansRespectTheWindow) {
  const Scenario& sc = single();
  Controller ctrl(sc, cfg(ControllerKind::TLQR2_SH, 5, 1e9));
  StateVec x = sc.x0;
  for (int t = 0; t < sc.horizon; ++t) {
    const auto dec = ctrl.act(x, t);
    EXPECT_LE(ctrl.state().plan.horizon(), 5);
    const StateVec next = step_nominal(x, dec.u, sc.system);
    ctrl.observe(x, dec.u, next, t);
    x = next;
  }
  // replans only when a window runs out
  EXPECT_EQ(ctrl.state().replan_steps, (std::vector<int>{4, 9, 14, 19, 24, 29}));
}

TEST(Controllers, LowerThresholdNeverReplansLessOnAverage) {
  const Scenario& sc = single();
  double prev = 1e9;
  for (double thr : {0.0, 0.05, 0.5}) {
    double total = 0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) total += episode(sc, cfg(ControllerKind::TLQR2, 7, thr), 0.4, seed).replans();
    EXPECT_LE(total, prev);
    prev = total;
  }
}

TEST(Controllers, AgentFeedbackIsDecoupled) {
  const Scenario& sc = three();
  Controller ctrl = multi_agent_wrap(cfg(ControllerKind::TLQR), sc);
  ctrl.act(sc.x0, 0);
  StateVec x = sc.x0;
  x.segment(0, 4) += v4(0.2, -0.1, 0.05, 0.02);
  const ControlVec base = ctrl.feedback_control(sc.x0, 0), moved = ctrl.feedback_control(x, 0);
  EXPECT_NE(moved.segment(0, 2), base.segment(0, 2));
  EXPECT_EQ(moved.segment(2, 4), base.segment(2, 4));
}

TEST(Controllers, SingleAgentWrapIsThePlainController) {
  const Scenario& sc = single();
  Controller a = multi_agent_wrap(cfg(ControllerKind::TLQR), sc);
  Controller b(sc, cfg(ControllerKind::TLQR));
  EXPECT_EQ(a.act(sc.x0, 0).u, b.act(sc.x0, 0).u);
}

TEST(Controllers, RejectsBadConfig) {
  EXPECT_THROW(Controller(single(), cfg(ControllerKind::TLQR2_SH, 0)), InvalidArgument);
  EXPECT_THROW(Controller(single(), cfg(ControllerKind::TLQR2, 7, -0.1)), InvalidArgument);
  EXPECT_THROW(controller_kind_from_string("LQG"), InvalidArgument);
}
