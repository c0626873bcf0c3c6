#pragma once

// Dense-Hessian convex QP with sparse inequality rows, solved by a Mehrotra
// predictor-corrector interior-point method:
//
//   minimize   0.5 d' H d + g' d
//   subject to a_i' d <= h_i,   i = 1..m
//
// H must be symmetric positive definite.

#include "decplan/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace decplan {

/// Inequality rows a_i' d <= h_i in compressed-row form.
class SparseRows {
 public:
  explicit SparseRows(Eigen::Index cols = 0) : cols_(cols) { start_.push_back(0); }

  /// Starts a new row; subsequent add() calls append to it.
  void begin_row(double rhs) {
    if (open_) start_.push_back(static_cast<Eigen::Index>(index_.size()));
    rhs_.push_back(rhs);
    open_ = true;
  }
  void add(Eigen::Index col, double value) {
    index_.push_back(col);
    value_.push_back(value);
  }
  void finish() {
    if (open_) start_.push_back(static_cast<Eigen::Index>(index_.size()));
    open_ = false;
  }

  Eigen::Index rows() const { return static_cast<Eigen::Index>(rhs_.size()); }
  Eigen::Index cols() const { return cols_; }
  double rhs(Eigen::Index r) const { return rhs_[static_cast<std::size_t>(r)]; }
  void set_rhs(Eigen::Index r, double v) { rhs_[static_cast<std::size_t>(r)] = v; }
  Vector rhs_vector() const { return Eigen::Map<const Vector>(rhs_.data(), rows()); }

  double dot(Eigen::Index r, const Vector& d) const {
    double acc = 0.0;
    for (auto k = start_[r]; k < start_[r + 1]; ++k) acc += value_[k] * d[index_[k]];
    return acc;
  }
  Vector multiply(const Vector& d) const {
    Vector out(rows());
    for (Eigen::Index r = 0; r < rows(); ++r) out[r] = dot(r, d);
    return out;
  }
  Vector multiply_transpose(const Vector& z) const {
    Vector out = Vector::Zero(cols_);
    for (Eigen::Index r = 0; r < rows(); ++r)
      for (auto k = start_[r]; k < start_[r + 1]; ++k) out[index_[k]] += value_[k] * z[r];
    return out;
  }
  /// K += A' diag(weight) A
  void add_weighted_gram(const Vector& weight, Matrix& K) const {
    for (Eigen::Index r = 0; r < rows(); ++r) {
      const double w = weight[r];
      for (auto p = start_[r]; p < start_[r + 1]; ++p) {
        const double wp = w * value_[p];
        for (auto q = start_[r]; q < start_[r + 1]; ++q) K(index_[p], index_[q]) += wp * value_[q];
      }
    }
  }

 private:
  Eigen::Index cols_;
  std::vector<Eigen::Index> start_;
  std::vector<Eigen::Index> index_;
  std::vector<double> value_;
  std::vector<double> rhs_;
  bool open_ = false;
};

struct QpSettings {
  int max_iterations = 100;
  double tolerance = 1e-11;
  double stall_tolerance = 1e-8;  // accepted when progress stops at the rounding floor
  int stall_iterations = 5;
};

struct QpResult {
  Vector d;
  Vector multipliers;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// Returns false on breakdown (non-finite iterates, runaway multipliers or a singular KKT matrix).
inline bool interior_point(const Matrix& H, const Vector& g, const SparseRows& A, const Vector& h,
                           const QpSettings& settings, QpResult& res) {
  const Eigen::Index n = g.size(), m = A.rows();

  res = QpResult{};
  res.d = Vector::Zero(n);

  Vector s = h.cwiseMax(1.0);
  Vector z = Vector::Ones(m);
  Vector& d = res.d;

  // Best iterate by the scaled KKT residual; late iterations can lose accuracy on degenerate problems.
  double best = std::numeric_limits<double>::infinity();
  Vector best_d = d, best_z = z;
  int since_best = 0;

  Matrix K(n, n);
  for (int it = 0; it < settings.max_iterations; ++it) {
    res.iterations = it + 1;
    const Vector Atz = A.multiply_transpose(z);
    const Vector Ad = A.multiply(d);
    const Vector Hd = H * d;
    const Vector rd = Hd + g + Atz;
    const Vector rp = Ad + s - h;
    const double mu = s.dot(z) / static_cast<double>(m);
    const double scale_d =
        1.0 + std::max({g.lpNorm<Eigen::Infinity>(), Hd.lpNorm<Eigen::Infinity>(), Atz.lpNorm<Eigen::Infinity>()});
    const double scale_p = 1.0 + std::max(h.lpNorm<Eigen::Infinity>(), Ad.lpNorm<Eigen::Infinity>());
    const double err_d = rd.lpNorm<Eigen::Infinity>() / scale_d, err_p = rp.lpNorm<Eigen::Infinity>() / scale_p;
    if (err_d <= settings.tolerance && err_p <= settings.tolerance && mu <= settings.tolerance * 1e-2) {
      res.converged = true;
      res.multipliers = z;
      return true;
    }
    const double merit = std::max({err_d, err_p, mu});
    if (merit < best) {
      best = merit;
      best_d = d;
      best_z = z;
      since_best = 0;
    } else if (++since_best >= settings.stall_iterations && best <= settings.stall_tolerance) {
      break;
    }

    if (!std::isfinite(mu) || mu > 1e30) return false;

    const Vector w = z.cwiseQuotient(s);
    K = H;
    A.add_weighted_gram(w, K);
    Eigen::LLT<Matrix> llt(K);
    // Barrier weights spanning many decades can cost positive definiteness in floating point.
    for (double shift = 1e-14 * (1.0 + K.diagonal().maxCoeff()); llt.info() != Eigen::Success; shift *= 100.0) {
      if (shift > 1e-4 * (1.0 + K.diagonal().maxCoeff())) break;
      K.diagonal().array() += shift;
      llt.compute(K);
    }
    if (llt.info() != Eigen::Success) {
      if (best <= settings.stall_tolerance) break;
      return false;
    }

    // Direction for complementarity target rc (s .* z -> target).
    const auto direction = [&](const Vector& rc, Vector& dd, Vector& ds, Vector& dz) {
      // dz = (rc_neg + Z rp + Z A dd) / S, with rc_neg = -rc
      const Vector tmp = (-rc + z.cwiseProduct(rp)).cwiseQuotient(s);
      dd = llt.solve(-rd - A.multiply_transpose(tmp));
      ds = -rp - A.multiply(dd);
      dz = (-rc - z.cwiseProduct(ds)).cwiseQuotient(s);
    };
    const auto max_step = [](const Vector& v, const Vector& dv) {
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
      return alpha;
    };

    Vector dd, ds, dz;
    const Vector rc_aff = s.cwiseProduct(z);
    direction(rc_aff, dd, ds, dz);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3);

    const Vector rc = rc_aff + ds.cwiseProduct(dz) - Vector::Constant(m, sigma * mu);
    direction(rc, dd, ds, dz);
    const double alpha = std::min(1.0, 0.995 * std::min(max_step(s, ds), max_step(z, dz)));
    if (!dd.allFinite() || !std::isfinite(alpha)) return false;
    d += alpha * dd;
    s += alpha * ds;
    z += alpha * dz;
  }
  if (!std::isfinite(best)) return false;
  res.d = best_d;
  res.multipliers = best_z;
  res.converged = best <= settings.stall_tolerance;
  return true;
}

}  // namespace detail

inline QpResult solve_qp(const Matrix& H, const Vector& g, const SparseRows& A, const QpSettings& settings = {}) {
  const Eigen::Index n = g.size(), m = A.rows();
  require(H.rows() == n && H.cols() == n && A.cols() == n, "solve_qp: dimension mismatch");

  QpResult res;
  if (m == 0) {
    res.d = H.llt().solve(-g);
    res.multipliers.resize(0);
    res.converged = true;
    return res;
  }
  const Vector h = A.rhs_vector();
  if (detail::interior_point(H, g, A, h, settings, res)) return res;
  // Opposing active rows (an implicit equality) leave the multipliers unbounded; widen the slab.
  const Vector widened = h.array() + 1e-9 * (1.0 + h.lpNorm<Eigen::Infinity>());
  if (detail::interior_point(H, g, A, widened, settings, res)) return res;
  throw NumericalError("solve_qp: interior point breakdown");
}


}  // namespace decplan
