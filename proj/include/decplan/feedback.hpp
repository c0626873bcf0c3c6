#pragma once

// Time-varying LQR tracking about a nominal plan.

#include "decplan/trajopt.hpp"

namespace decplan {

struct LinearizedSystem {
  std::vector<Matrix> A;  // A_0 .. A_{H-1}
  std::vector<Matrix> B;  // B_0 .. B_{H-1}

  int horizon() const { return static_cast<int>(A.size()); }
};

struct LQRWeights {
  Matrix Q, R, Qf;

  void validate() const {
    require(Q.rows() == Q.cols() && Qf.rows() == Q.rows() && Qf.cols() == Q.rows() && R.rows() == R.cols(),
            "lqr weights: shape mismatch");
    require(Eigen::SelfAdjointEigenSolver<Matrix>(Q).eigenvalues().minCoeff() >= -1e-12, "lqr.Q must be PSD");
    require(Eigen::SelfAdjointEigenSolver<Matrix>(Qf).eigenvalues().minCoeff() >= -1e-12, "lqr.Qf must be PSD");
    require(Eigen::SelfAdjointEigenSolver<Matrix>(R).eigenvalues().minCoeff() > 0.0, "lqr.R must be PD");
  }
};

/// L_0..L_{H-1} (n_u x n_x) and P_0..P_H with P_H = Qf.
struct GainSchedule {
  std::vector<Matrix> L;
  std::vector<Matrix> P;

  int horizon() const { return static_cast<int>(L.size()); }
};

inline LinearizedSystem linearize_along(const NominalPlan& plan, const AgentSystem& sys) {
  require(plan.states.size() == plan.controls.size() + 1, "linearize_along: inconsistent plan");
  LinearizedSystem lin;
  lin.A.reserve(plan.controls.size());
  lin.B.reserve(plan.controls.size());
  for (std::size_t t = 0; t < plan.controls.size(); ++t) {
    auto [A, B] = jacobians(plan.states[t], plan.controls[t], sys);
    lin.A.push_back(std::move(A));
    lin.B.push_back(std::move(B));
  }
  return lin;
}

/// Backward Riccati recursion:
///   L_t = (R + B' P_{t+1} B)^{-1} B' P_{t+1} A
///   P_t = A' P_{t+1} A - A' P_{t+1} B L_t + Q
inline GainSchedule riccati_backward(const LinearizedSystem& lin, const LQRWeights& w) {
  w.validate();
  const int H = lin.horizon();
  require(H >= 1 && lin.B.size() == lin.A.size(), "riccati_backward: empty or inconsistent system");
  GainSchedule g;
  g.L.resize(static_cast<std::size_t>(H));
  g.P.resize(static_cast<std::size_t>(H + 1));
  g.P[static_cast<std::size_t>(H)] = w.Qf;
  for (int t = H - 1; t >= 0; --t) {
    const Matrix& A = lin.A[static_cast<std::size_t>(t)];
    const Matrix& B = lin.B[static_cast<std::size_t>(t)];
    const Matrix& Pn = g.P[static_cast<std::size_t>(t + 1)];
    require(A.rows() == Pn.rows() && B.rows() == Pn.rows() && B.cols() == w.R.rows(),
            "riccati_backward: dimension mismatch");
    const Matrix PB = Pn * B;
    // LDLT: exact for scalar systems (one division, no square root)
    const Eigen::LDLT<Matrix> ldlt(w.R + B.transpose() * PB);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
      throw NumericalError("riccati_backward: R + B'PB is not positive definite");
    Matrix L = ldlt.solve(PB.transpose() * A);
    Matrix P = A.transpose() * Pn * A - A.transpose() * PB * L + w.Q;
    g.P[static_cast<std::size_t>(t)] = 0.5 * (P + P.transpose());
    g.L[static_cast<std::size_t>(t)] = std::move(L);
  }
  return g;
}

inline ControlVec apply_feedback(const ControlVec& u_nominal, const Matrix& L, const StateVec& x,
                                 const StateVec& x_nominal) {
  return u_nominal - L * (x - x_nominal);
}

/// Per-agent Riccati designs on each agent's own 4x4 / 4x2 blocks. `weights` holds one entry per agent.
inline std::vector<GainSchedule> decoupled_gains(const NominalPlan& joint, const AgentSystem& sys,
                                                 const std::vector<LQRWeights>& weights) {
  const int M = sys.agents();
  require(static_cast<int>(weights.size()) == M, "decoupled_gains: one weight set per agent required");
  const LinearizedSystem lin = linearize_along(joint, sys);
  std::vector<GainSchedule> out;
  out.reserve(static_cast<std::size_t>(M));
  for (int j = 0; j < M; ++j) {
    LinearizedSystem part;
    for (int t = 0; t < lin.horizon(); ++t) {
      part.A.push_back(lin.A[static_cast<std::size_t>(t)].block<4, 4>(4 * j, 4 * j));
      part.B.push_back(lin.B[static_cast<std::size_t>(t)].block<4, 2>(4 * j, 2 * j));
    }
    out.push_back(riccati_backward(part, weights[static_cast<std::size_t>(j)]));
  }
  return out;
}

/// Joint block-diagonal schedule assembled from per-agent schedules.
inline GainSchedule assemble_block_diagonal(const std::vector<GainSchedule>& parts) {
  require(!parts.empty(), "assemble_block_diagonal: no parts");
  const int M = static_cast<int>(parts.size()), H = parts.front().horizon();
  GainSchedule g;
  g.L.assign(static_cast<std::size_t>(H), Matrix::Zero(2 * M, 4 * M));
  g.P.assign(static_cast<std::size_t>(H + 1), Matrix::Zero(4 * M, 4 * M));
  for (int j = 0; j < M; ++j) {
    for (int t = 0; t < H; ++t)
      g.L[static_cast<std::size_t>(t)].block<2, 4>(2 * j, 4 * j) = parts[static_cast<std::size_t>(j)].L[static_cast<std::size_t>(t)];
    for (int t = 0; t <= H; ++t)
      g.P[static_cast<std::size_t>(t)].block<4, 4>(4 * j, 4 * j) = parts[static_cast<std::size_t>(j)].P[static_cast<std::size_t>(t)];
  }
  return g;
}

/// Per-agent diagonal blocks of joint weights.
inline std::vector<LQRWeights> split_weights(const LQRWeights& joint, int agents) {
  std::vector<LQRWeights> out;
  for (int j = 0; j < agents; ++j)
    out.push_back({joint.Q.block<4, 4>(4 * j, 4 * j), joint.R.block<2, 2>(2 * j, 2 * j),
                   joint.Qf.block<4, 4>(4 * j, 4 * j)});
  return out;
}

}  // namespace decplan
