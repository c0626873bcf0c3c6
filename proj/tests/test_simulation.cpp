#include "decplan/simulation.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace decplan;

namespace {
Vector v4(double a, double b, double c, double d) { return (Vector(4) << a, b, c, d).finished(); }

const Scenario& single() {
  static const Scenario sc = make_scenario({{v4(0, 0, 0, 0), v4(5, 3, 0, 0)}});
  return sc;
}

const Scenario& pair() {
  static const Scenario sc = make_scenario({{v4(0, 0, 0, 0), v4(4, 2, 0, 0)}, {v4(0, 2, 0, 0), v4(4, 0, 0, 0)}});
  return sc;
}

ControllerConfig cfg(ControllerKind k, double thr = 0.02) {
  ControllerConfig c;
  c.kind = k;
  c.threshold = thr;
  return c;
}

void expect_same(const RolloutRecord& a, const RolloutRecord& b) {
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t t = 0; t < a.states.size(); ++t) EXPECT_EQ(a.states[t], b.states[t]);
  for (std::size_t t = 0; t < a.controls.size(); ++t) EXPECT_EQ(a.controls[t], b.controls[t]);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.replan_steps, b.replan_steps);
  EXPECT_EQ(a.solver_iterations, b.solver_iterations);
}
}  // namespace

TEST(Noise, StreamsAreKeyedNotSequential) {
  const Scenario& sc = pair();
  const ControlVec late = draw_noise(sc, 42, 17);
  for (int t = 0; t < 17; ++t) draw_noise(sc, 42, t);
  EXPECT_EQ(draw_noise(sc, 42, 17), late);
  std::set<double> seen;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (int t = 0; t < 5; ++t) {
      const ControlVec w = draw_noise(sc, seed, t);
      for (auto e : w) seen.insert(e);
    }
  EXPECT_EQ(seen.size(), 5u * 5u * 4u);
}

TEST(Noise, AgentStreamDoesNotDependOnTeamSize) {
  const ControlVec one = draw_noise(single(), 9, 3), two = draw_noise(pair(), 9, 3);
  EXPECT_EQ(two.head(2), one);
}

TEST(Episode, ControllersShareTheNoiseOfASeed) {
  const Scenario& sc = single();
  const auto a = run_episode({&sc, cfg(ControllerKind::TLQR), 0.3, 5});
  const auto b = run_episode({&sc, cfg(ControllerKind::TLQR2), 0.3, 5});
  ASSERT_EQ(a.noise.size(), b.noise.size());
  for (std::size_t t = 0; t < a.noise.size(); ++t) {
    EXPECT_EQ(a.noise[t], b.noise[t]);
    EXPECT_EQ(a.noise[t], draw_noise(sc, 5, static_cast<int>(t)));
  }
}

TEST(Episode, TransitionsFollowTheNoisyModel) {
  const Scenario& sc = single();
  const auto rec = run_episode({&sc, cfg(ControllerKind::TLQR2), 0.5, 2});
  for (std::size_t t = 0; t < rec.controls.size(); ++t) {
    const Vector ref = oracle::car_step(rec.states[t], rec.controls[t] + 0.5 * rec.noise[t]);
    EXPECT_LE((ref - rec.states[t + 1]).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_NEAR(rec.cost, oracle::trajectory(rec.states, rec.controls, sc.cost.weights.goal), 1e-9 * rec.cost);
  EXPECT_EQ(rec.ratio, rec.cost / rec.nominal_cost);
}

TEST(Episode, ReplayIsExact) {
  const Scenario& sc = pair();
  const auto rec = run_episode({&sc, cfg(ControllerKind::TLQR2), 0.4, 8});
  const StateSeq xs = replay_states(rec, sc);
  ASSERT_EQ(xs.size(), rec.states.size());
  for (std::size_t t = 0; t < xs.size(); ++t) EXPECT_EQ(xs[t], rec.states[t]);
}

TEST(Episode, Deterministic) {
  const Scenario& sc = single();
  for (auto k : {ControllerKind::MPC_SH, ControllerKind::TLQR2})
    expect_same(run_episode({&sc, cfg(k), 0.4, 11}), run_episode({&sc, cfg(k), 0.4, 11}));
}

TEST(Episode, MultiAgentRecordsClosestApproach) {
  const Scenario& sc = pair();
  const auto rec = run_episode({&sc, cfg(ControllerKind::TLQR2), 0.1, 1});
  double dmin = 1e9;
  for (const auto& x : rec.states) dmin = std::min(dmin, std::hypot(x[0] - x[4], x[1] - x[5]));
  EXPECT_EQ(rec.min_distance, dmin);
  EXPECT_GT(dmin, 0.0);
}

TEST(MonteCarlo, IndependentOfWorkerCount) {
  const Scenario& sc = single();
  const EpisodeSpec base{&sc, cfg(ControllerKind::TLQR2), 0.3, 0};
  const auto a = run_monte_carlo(base, 6, 100, {}, 1);
  const auto b = run_monte_carlo(base, 6, 100, {}, 3);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].seed, 100 + i);
    expect_same(a.records[i], b.records[i]);
  }
  EXPECT_EQ(a.summary.mean_ratio, b.summary.mean_ratio);
  EXPECT_EQ(a.summary.var_ratio, b.summary.var_ratio);
}

TEST(MonteCarlo, SummaryMatchesRecords) {
  const Scenario& sc = single();
  const auto r = run_monte_carlo({&sc, cfg(ControllerKind::TLQR2), 0.3, 0}, 5, 0);
  double m = 0, rep = 0;
  for (const auto& e : r.records) {
    m += e.ratio / 5;
    rep += e.replans() / 5.0;
  }
  EXPECT_NEAR(r.summary.mean_ratio, m, 1e-12);
  EXPECT_NEAR(r.summary.mean_replans, rep, 1e-12);
  double v = 0;
  for (const auto& e : r.records) v += (e.ratio - m) * (e.ratio - m) / 4;
  EXPECT_NEAR(r.summary.var_ratio, v, 1e-12);
  EXPECT_EQ(r.summary.episodes, 5);
}

TEST(Sweep, ReusesUnchangedConfigurations) {
  const Scenario& sc = single();
  SweepSpec s;
  s.scenario = &sc;
  s.controllers = {cfg(ControllerKind::TLQR), cfg(ControllerKind::TLQR2)};
  s.axis = SweepAxis::threshold;
  s.grid = {0.01, 0.2};
  s.epsilon = 0.3;
  s.episodes = 2;
  const auto rows = sweep(s);
  ASSERT_EQ(rows.size(), 4u);
  // T-LQR ignores the threshold
  EXPECT_EQ(rows[0].result.summary.mean_ratio, rows[2].result.summary.mean_ratio);
  EXPECT_EQ(rows[3].controller.threshold, 0.2);
  EXPECT_GE(rows[1].result.summary.mean_replans, rows[3].result.summary.mean_replans);
}

TEST(Timing, ProfileAveragesPerStep) {
  RolloutRecord a, b;
  a.plan_time = {1.0, 0.0, 2.0};
  b.plan_time = {3.0, 0.0};
  const auto p = timing_profile({a, b});
  ASSERT_EQ(p.mean_per_step.size(), 3u);
  EXPECT_DOUBLE_EQ(p.mean_per_step[0], 2.0);
  EXPECT_DOUBLE_EQ(p.total, p.mean_per_step[0] + p.mean_per_step[1] + p.mean_per_step[2]);
}
