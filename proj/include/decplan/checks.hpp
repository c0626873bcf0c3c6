#pragma once

// Self-checks behind `decplan check`: derivative, Riccati, constraint, determinism and DP
// invariants on small instances. Each returns a named pass/fail with a short detail line.

#include "decplan/dp_check.hpp"
#include "decplan/simulation.hpp"

#include <functional>
#include <sstream>

namespace decplan {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace checks {

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

inline Vector random_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, int r, int c, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

inline CheckResult jacobians_fd(int samples = 200) {
  std::mt19937_64 rng(11);
  const CarParams p;
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vector x = random_vector(rng, 4, -3.0, 3.0);
    x[3] = std::uniform_real_distribution<double>(-1.2, 1.2)(rng);
    const Vector u = random_vector(rng, 2, -2.0, 2.0);
    const auto [A, B] = jacobians(x, u, p);
    const auto [Af, Bf] = fd_jacobians(x, u, 1e-6, p);
    worst = std::max({worst, (A - Af).cwiseAbs().maxCoeff(), (B - Bf).cwiseAbs().maxCoeff()});
  }
  return {"jacobians vs central differences", worst <= 1e-5, "max abs error " + fmt(worst)};
}

inline CheckResult jacobian_cross_blocks() {
  const AgentSystem sys(3, CarParams{}, ControlLimits{});
  std::mt19937_64 rng(12);
  Vector x = random_vector(rng, 12, -1.0, 1.0);
  const Vector u = random_vector(rng, 6, -1.0, 1.0);
  const auto [A, B] = jacobians(x, u, sys);
  double off = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) {
        off = std::max(off, A.block(4 * i, 4 * j, 4, 4).cwiseAbs().maxCoeff());
        off = std::max(off, B.block(4 * i, 2 * j, 4, 2).cwiseAbs().maxCoeff());
      }
  return {"multi-agent jacobian cross blocks", off == 0.0, "max |cross entry| " + fmt(off)};
}

inline CheckResult riccati_scalar() {
  const auto run = [](int H) {
    LinearizedSystem lin;
    lin.A.assign(static_cast<std::size_t>(H), Matrix::Ones(1, 1));
    lin.B.assign(static_cast<std::size_t>(H), Matrix::Ones(1, 1));
    const LQRWeights w{Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
    const auto g = riccati_backward(lin, w);
    return std::pair{g.L[0](0, 0), g.P[0](0, 0)};
  };
  const auto [l1, p1] = run(1);
  const auto [l2, p2] = run(2);
  const bool ok = l1 == 0.5 && p1 == 1.5 && l2 == 0.6 && p2 == 1.6;
  std::ostringstream d;
  d.precision(17);
  d << "H=1: L0=" << l1 << " P0=" << p1 << "; H=2: L0=" << l2 << " P0=" << p2;
  return {"riccati scalar cases", ok, d.str()};
}

/// min over U of sum x'Qx + u'Ru + x_H' Qf x_H by stacking the rollout as x = Phi x0 + Gamma U.
inline double batch_lq_optimum(const LinearizedSystem& lin, const LQRWeights& w, const Vector& x0) {
  const int H = lin.horizon(), n = static_cast<int>(x0.size()), m = static_cast<int>(w.R.rows());
  Matrix Phi = Matrix::Zero(n * (H + 1), n), Gam = Matrix::Zero(n * (H + 1), m * H);
  Phi.topRows(n) = Matrix::Identity(n, n);
  for (int t = 0; t < H; ++t) {
    const Matrix& A = lin.A[static_cast<std::size_t>(t)];
    const Matrix& B = lin.B[static_cast<std::size_t>(t)];
    Phi.middleRows(n * (t + 1), n) = A * Phi.middleRows(n * t, n);
    Gam.middleRows(n * (t + 1), n) = A * Gam.middleRows(n * t, n);
    Gam.block(n * (t + 1), m * t, n, m) += B;
  }
  Matrix Qbar = Matrix::Zero(n * (H + 1), n * (H + 1)), Rbar = Matrix::Zero(m * H, m * H);
  for (int t = 0; t < H; ++t) {
    Qbar.block(n * t, n * t, n, n) = w.Q;
    Rbar.block(m * t, m * t, m, m) = w.R;
  }
  Qbar.block(n * H, n * H, n, n) = w.Qf;
  const Matrix Hs = Gam.transpose() * Qbar * Gam + Rbar;
  const Vector g = Gam.transpose() * Qbar * Phi * x0;
  const Vector U = -Hs.ldlt().solve(g);
  const Vector X = Phi * x0 + Gam * U;
  return X.dot(Qbar * X) + U.dot(Rbar * U);
}

inline CheckResult riccati_batch(int systems = 50) {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (int s = 0; s < systems; ++s) {
    const int H = 10;
    LinearizedSystem lin;
    for (int t = 0; t < H; ++t) {
      lin.A.push_back(Matrix::Identity(4, 4) + random_matrix(rng, 4, 4, 0.3));
      lin.B.push_back(random_matrix(rng, 4, 2, 1.0));
    }
    const Matrix Gq = random_matrix(rng, 4, 4, 1.0), Gr = random_matrix(rng, 2, 2, 1.0);
    const LQRWeights w{Gq * Gq.transpose(), Gr * Gr.transpose() + 0.1 * Matrix::Identity(2, 2),
                       Matrix::Identity(4, 4) * 2.0};
    const Vector x0 = random_vector(rng, 4, -1.0, 1.0);
    const auto g = riccati_backward(lin, w);
    Vector x = x0;
    double J = 0.0;
    for (int t = 0; t < H; ++t) {
      const Vector u = -g.L[static_cast<std::size_t>(t)] * x;
      J += x.dot(w.Q * x) + u.dot(w.R * u);
      x = lin.A[static_cast<std::size_t>(t)] * x + lin.B[static_cast<std::size_t>(t)] * u;
    }
    J += x.dot(w.Qf * x);
    const double ref = batch_lq_optimum(lin, w, x0);
    worst = std::max(worst, std::abs(J - ref) / std::max(1e-300, std::abs(ref)));
  }
  return {"riccati closed loop vs batch optimum", worst <= 1e-8, "max relative error " + fmt(worst)};
}

inline CheckResult riccati_joint_vs_agents() {
  const Scenario sc = make_scenario({{StateVec::Zero(4), (StateVec(4) << 3, 1, 0, 0).finished()},
                                     {(StateVec(4) << 0, 2, 0, 0).finished(), (StateVec(4) << 3, 0, 0, 0).finished()}});
  NominalPlan plan;
  plan.controls.assign(10, (ControlVec(4) << 1.0, 0.2, 0.8, -0.1).finished());
  plan.states = rollout_nominal(sc.x0, plan.controls, sc.system);
  const auto parts = decoupled_gains(plan, sc.system, split_weights(sc.lqr_weights(), 2));
  const auto joint = riccati_backward(linearize_along(plan, sc.system), sc.lqr_weights());
  const auto blocks = assemble_block_diagonal(parts);
  double diff = 0.0;
  for (std::size_t t = 0; t < joint.L.size(); ++t) {
    diff = std::max(diff, (joint.L[t] - blocks.L[t]).cwiseAbs().maxCoeff() / (1.0 + joint.L[t].cwiseAbs().maxCoeff()));
    diff = std::max(diff, (joint.P[t] - blocks.P[t]).cwiseAbs().maxCoeff() / (1.0 + joint.P[t].cwiseAbs().maxCoeff()));
  }
  return {"joint vs per-agent riccati", diff <= 1e-10, "max relative block difference " + fmt(diff)};
}

inline CheckResult constrain_example() {
  ControlLimits lim;
  lim.u_min = Vector::Constant(2, -2.0);
  lim.u_max = Vector::Constant(2, 2.0);
  lim.du_max = Vector::Constant(2, 1.0);
  const ControlVec u = constrain((ControlVec(2) << 5, 0).finished(), (ControlVec(2) << 2, 0).finished(), lim);
  return {"constrain box and rate", u[0] == 2.0 && u[1] == 0.0,
          "(5,0) after (2,0) -> (" + std::to_string(u[0]) + "," + std::to_string(u[1]) + ")"};
}

inline Scenario check_scenario() { return make_scenario({{StateVec::Zero(4), (StateVec(4) << 1.5, 0.5, 0, 0).finished()}}); }

inline CheckResult ocp_feasibility() {
  Scenario sc = check_scenario();
  const NominalPlan plan = solve_ocp(sc.problem(sc.x0, sc.horizon, ControlVec::Zero(2)));
  const Vector lo = sc.system.u_min(), hi = sc.system.u_max(), rate = sc.system.du_max();
  double viol = 0.0;
  ControlVec prev = ControlVec::Zero(2);
  for (const auto& u : plan.controls) {
    viol = std::max({viol, (lo - u).maxCoeff(), (u - hi).maxCoeff(), ((u - prev).cwiseAbs() - rate).maxCoeff()});
    prev = u;
  }
  const StateSeq xs = rollout_nominal(sc.x0, plan.controls, sc.system);
  double dyn = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) dyn = std::max(dyn, (xs[t] - plan.states[t]).cwiseAbs().maxCoeff());
  return {"trajectory optimizer feasibility", viol <= 1e-6 && dyn == 0.0 && plan.converged,
          "constraint violation " + fmt(std::max(viol, 0.0)) + ", iterations " + std::to_string(plan.iterations)};
}

inline CheckResult zero_noise_equivalence() {
  const Scenario sc = check_scenario();
  const double ref = reference_nominal_cost(sc);
  std::vector<RolloutRecord> recs;
  for (auto kind : {ControllerKind::MPC, ControllerKind::TLQR, ControllerKind::TLQR2}) {
    EpisodeSpec e{&sc, ControllerConfig{kind}, 0.0, 1};
    recs.push_back(run_episode(e, {}, ref));
  }
  double spread = 0.0;
  for (const auto& r : recs) spread = std::max(spread, std::abs(r.cost - recs[1].cost) / recs[1].cost);
  const bool ok = spread <= 1e-4 && recs[1].ratio == 1.0 && recs[1].replans() == 0 && recs[2].replans() == 0;
  return {"zero-noise equivalence", ok,
          "cost spread " + fmt(spread) + ", T-LQR ratio " + std::to_string(recs[1].ratio)};
}

inline CheckResult determinism_and_replay() {
  const Scenario sc = check_scenario();
  EpisodeSpec e{&sc, ControllerConfig{ControllerKind::TLQR2}, 0.3, 7};
  const auto a = run_episode(e), b = run_episode(e);
  bool same = a.states.size() == b.states.size() && a.replan_steps == b.replan_steps && a.cost == b.cost;
  for (std::size_t t = 0; same && t < a.states.size(); ++t) same = a.states[t] == b.states[t];
  for (std::size_t t = 0; same && t < a.controls.size(); ++t) same = a.controls[t] == b.controls[t] && a.noise[t] == b.noise[t];
  const StateSeq re = replay_states(a, sc);
  bool replay = re.size() == a.states.size();
  for (std::size_t t = 0; replay && t < re.size(); ++t) replay = re[t] == a.states[t];
  return {"determinism and replay", same && replay,
          std::string("re-run ") + (same ? "identical" : "differs") + ", replay " + (replay ? "exact" : "differs")};
}

inline CheckResult dp_greedy_limit() {
  const DpReport r = high_noise_dp_check(DpProblem{}, default_dp_grid());
  const double first = r.points.front().agreement, last = r.points.back().agreement;
  const bool ok = first < 1.0 && last == 1.0 && r.nondecreasing;
  return {"high-noise DP vs greedy", ok,
          "agreement " + std::to_string(first) + " at eps=0, " + std::to_string(last) + " swamped, " +
              (r.nondecreasing ? "nondecreasing" : "not monotone")};
}

}  // namespace checks

inline std::vector<CheckResult> run_checks() {
  const std::vector<std::function<CheckResult()>> all = {
      [] { return checks::jacobians_fd(); },       checks::jacobian_cross_blocks, checks::riccati_scalar,
      [] { return checks::riccati_batch(); },      checks::riccati_joint_vs_agents, checks::constrain_example,
      checks::ocp_feasibility,                     checks::zero_noise_equivalence, checks::determinism_and_replay,
      checks::dp_greedy_limit};
  std::vector<CheckResult> out;
  for (const auto& f : all) {
    try {
      out.push_back(f());
    } catch (const std::exception& e) {
      out.push_back({"(exception)", false, e.what()});
    }
  }
  return out;
}

}  // namespace decplan
