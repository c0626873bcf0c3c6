#pragma once

// Reference computations for the tests, written against the model definitions only
// (no library internals beyond the plain data types).

#include "decplan/types.hpp"

#include <cmath>
#include <vector>

namespace oracle {

using decplan::Matrix;
using decplan::Vector;

// car: x' = x + dt*(v cos th, v sin th, v tan(phi)/L, omega)
inline Vector car_step(const Vector& s, const Vector& u, double dt = 0.1, double L = 0.5) {
  Vector n(4);
  n << s[0] + dt * u[0] * std::cos(s[2]), s[1] + dt * u[0] * std::sin(s[2]),
      s[2] + dt * u[0] * std::tan(s[3]) / L, s[3] + dt * u[1];
  return n;
}

template <class F>
Matrix central_jacobian(F f, const Vector& z, double h) {
  const Vector f0 = f(z);
  Matrix J(f0.size(), z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    Vector a = z, b = z;
    a[j] += h;
    b[j] -= h;
    J.col(j) = (f(a) - f(b)) / (2 * h);
  }
  return J;
}

struct Weights {
  Vector q{(Vector(4) << 5, 5, 1, 0.1).finished()};
  Vector r{(Vector(2) << 1, 1).finished()};
  double terminal_scale = 100;
  double M = 100, r_thresh = 0.5;
};

// joint stage cost for agents stacked 4 states / 2 controls each
inline double stage(const Vector& x, const Vector& u, const Vector& goal, const Weights& w) {
  const int agents = static_cast<int>(x.size() / 4);
  double c = 0;
  for (int i = 0; i < agents; ++i) {
    for (int k = 0; k < 4; ++k) c += w.q[k] * std::pow(x[4 * i + k] - goal[4 * i + k], 2);
    for (int k = 0; k < 2; ++k) c += w.r[k] * u[2 * i + k] * u[2 * i + k];
  }
  for (int i = 0; i < agents; ++i)
    for (int j = i + 1; j < agents; ++j) {
      const double d2 = std::pow(x[4 * i] - x[4 * j], 2) + std::pow(x[4 * i + 1] - x[4 * j + 1], 2);
      c += w.M * std::exp(-(d2 - w.r_thresh * w.r_thresh));
    }
  return c;
}

inline double terminal(const Vector& x, const Vector& goal, const Weights& w) {
  double c = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) c += w.terminal_scale * w.q[i % 4] * std::pow(x[i] - goal[i], 2);
  return c;
}

inline double trajectory(const std::vector<Vector>& xs, const std::vector<Vector>& us, const Vector& goal,
                         const Weights& w = {}) {
  double c = 0;
  for (std::size_t t = 0; t < us.size(); ++t) c += stage(xs[t], us[t], goal, w);
  return c + terminal(xs.back(), goal, w);
}

// Unconstrained finite-horizon LQ optimum by brute-force stacking: the cost is a quadratic in the
// stacked control vector U, minimized with one dense solve.
inline double batch_lq(const std::vector<Matrix>& A, const std::vector<Matrix>& B, const Matrix& Q, const Matrix& R,
                       const Matrix& Qf, const Vector& x0) {
  const int H = static_cast<int>(A.size()), n = static_cast<int>(x0.size()), m = static_cast<int>(R.rows());
  // x_t = F_t x0 + G_t U
  std::vector<Matrix> F{Matrix::Identity(n, n)}, G{Matrix::Zero(n, m * H)};
  for (int t = 0; t < H; ++t) {
    F.push_back(A[t] * F.back());
    Matrix g = A[t] * G.back();
    g.block(0, m * t, n, m) += B[t];
    G.push_back(g);
  }
  Matrix Hs = Matrix::Zero(m * H, m * H);
  Vector lin = Vector::Zero(m * H);
  double c0 = 0;
  for (int t = 0; t <= H; ++t) {
    const Matrix& W = t == H ? Qf : Q;
    Hs += G[t].transpose() * W * G[t];
    lin += G[t].transpose() * W * F[t] * x0;
    c0 += x0.dot(F[t].transpose() * W * F[t] * x0);
  }
  for (int t = 0; t < H; ++t) Hs.block(m * t, m * t, m, m) += R;
  const Vector U = Hs.colPivHouseholderQr().solve(-lin);
  return c0 + 2 * lin.dot(U) + U.dot(Hs * U);
}

// max violation of |u| box and |u_t - u_{t-1}| rate limits
inline double constraint_violation(const std::vector<Vector>& us, const Vector& u_prev, double umax = 2,
                                   double dumax = 1) {
  double worst = 0;
  Vector prev = u_prev;
  for (const auto& u : us) {
    worst = std::max(worst, u.cwiseAbs().maxCoeff() - umax);
    worst = std::max(worst, (u - prev).cwiseAbs().maxCoeff() - dumax);
    prev = u;
  }
  return worst;
}

}  // namespace oracle
