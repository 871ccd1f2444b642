#pragma once

// Optimal steady-state problem on the lifted model, its multiplier, the set
// of optimal steady states as an affine slice of the box, and the choice of
// the state-regularization weight.

#include "empc/model.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace empc {

class SteadyStateInfeasible : public std::runtime_error {
 public:
  explicit SteadyStateInfeasible(const std::string& detail)
      : std::runtime_error("steady-state problem infeasible: " + detail) {}
};

struct SteadyStateResult {
  Vector u_s;
  Vector x_s;           // one feasible steady state (the solver's)
  Matrix nullspace;     // columns span the free steady-state directions (empty if unique)
  Vector mu;            // multiplier of x = f(x,u): Lagrangian cost + mu'(x - f(x,u))
  double ell_s = 0.0;   // economic cost at the optimum (regularization excluded)
  double ell_s_modified = 0.0;  // full objective, regularization included
  double dual_value = 0.0;      // Lagrangian dual value of the full objective
  double epsilon = 0.0;
  int iterations = 0;

  Index state_dim() const { return x_s.size(); }
  Index nullspace_dim() const { return nullspace.cols(); }
};

namespace detail {

struct SplitBasis {
  Matrix null;   // orthonormal columns
  Matrix range;  // orthonormal columns spanning the orthogonal complement
};

// Nullspace by SVD, cutoff 1e-9 times the largest singular value.
inline SplitBasis split_nullspace(const Matrix& M) {
  const Index n = M.cols();
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double cutoff = 1e-9 * smax;
  Index rank = 0;
  if (smax > 0.0)
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > cutoff) ++rank;
  SplitBasis out;
  out.range = svd.matrixV().leftCols(rank);
  out.null = svd.matrixV().rightCols(n - rank);
  return out;
}

inline QpProblem steady_state_qp(const PredictionModel& M) {
  const Index nx = M.state_dim(), nu = M.input_dim();
  QpProblem p = QpProblem::unconstrained(nx + nu);
  p.H.topLeftCorner(nx, nx) = 2.0 * M.Qxx_total();
  p.H.topRightCorner(nx, nu) = 2.0 * M.Qxu;
  p.H.bottomLeftCorner(nu, nx) = 2.0 * M.Qxu.transpose();
  p.H.bottomRightCorner(nu, nu) = 2.0 * M.Quu;
  p.g << M.qx, M.qu;
  p.A_eq.resize(nx, nx + nu);
  p.A_eq << Matrix::Identity(nx, nx) - M.A, -M.B;
  p.b_eq = M.drift;
  p.lb << M.x_lb, M.u_lb;
  p.ub << M.x_ub, M.u_ub;
  return p;
}

}  // namespace detail

inline SteadyStateResult solve_steady_state(const PredictionModel& M,
                                            const SolverSettings& settings = {}) {
  const Index nx = M.state_dim(), nu = M.input_dim();
  const QpProblem p = detail::steady_state_qp(M);
  const QpSolution s = solve_qp(p, settings);
  if (s.status == QpStatus::Infeasible)
    throw SteadyStateInfeasible("certificate residual " + std::to_string(s.certificate_residual));
  if (s.status == QpStatus::Unbounded)
    throw std::logic_error("steady-state problem unbounded despite finite boxes");
  if (s.status != QpStatus::Optimal)
    throw SteadyStateInfeasible(std::string("solver stopped with status ") +
                                std::string(to_string(s.status)));

  SteadyStateResult r;
  r.x_s = s.x_star.head(nx);
  r.u_s = s.x_star.tail(nu);
  r.mu = s.mu_eq;
  r.epsilon = M.epsilon;
  r.iterations = s.iterations;
  r.ell_s = M.economic_cost(r.x_s, r.u_s);
  r.ell_s_modified = M.cost(r.x_s, r.u_s);
  r.dual_value = dual_objective(p, s) + M.c0;
  if (M.epsilon > 0.0)
    r.nullspace = Matrix::Zero(nx, 0);
  else
    r.nullspace = detail::split_nullspace(Matrix::Identity(nx, nx) - M.A).null;
  return r;
}

/// Convenience overload taking the lifted (and optionally augmented) system.
inline SteadyStateResult solve_steady_state(const LiftedSystem& L, const StageCostSpec& cost,
                                            const BoxConstraints& box,
                                            const AugmentedSystem* aug = nullptr,
                                            const SolverSettings& settings = {}) {
  return solve_steady_state(make_model(L, cost, box, aug), settings);
}

/// { p + V z } intersected with a box.
class AffineSliceSet {
 public:
  AffineSliceSet(Vector point, const Matrix& basis, Vector lb, Vector ub)
      : point_(std::move(point)), lb_(std::move(lb)), ub_(std::move(ub)) {
    const Index n = point_.size();
    if (basis.cols() == 0) {
      basis_ = Matrix::Zero(n, 0);
      normals_ = Matrix::Identity(n, n);
    } else {
      // Orthonormalize and take the complement.
      const auto split = detail::split_nullspace(basis.transpose());
      normals_ = split.null.transpose();
      basis_ = split.range;
    }
  }

  Index dim() const { return point_.size(); }
  Index free_dim() const { return basis_.cols(); }
  const Vector& point() const { return point_; }
  const Matrix& basis() const { return basis_; }
  /// Rows n_i with n_i'(x - point) = 0 describing the affine hull.
  const Matrix& normals() const { return normals_; }
  const Vector& lb() const { return lb_; }
  const Vector& ub() const { return ub_; }

  bool contains(const Vector& x, double tol = 1e-8) const {
    if ((x - lb_).minCoeff() < -tol || (ub_ - x).minCoeff() < -tol) return false;
    return normals_.rows() == 0 || detail::inf_norm(normals_ * (x - point_)) <= tol;
  }

  Vector project(const Vector& x, const SolverSettings& settings = {}) const {
    if (basis_.cols() == 0) return point_;
    if (normals_.rows() == 0) return x.cwiseMax(lb_).cwiseMin(ub_);
    QpProblem p = QpProblem::unconstrained(dim());
    p.H = 2.0 * Matrix::Identity(dim(), dim());
    p.g = -2.0 * x;
    p.A_eq = normals_;
    p.b_eq = normals_ * point_;
    p.lb = lb_;
    p.ub = ub_;
    const QpSolution s = solve_qp(p, settings);
    if (s.status != QpStatus::Optimal)
      throw std::runtime_error("projection onto steady-state set failed: " +
                               std::string(to_string(s.status)));
    return s.x_star;
  }

  double distance(const Vector& x, const SolverSettings& settings = {}) const {
    return (x - project(x, settings)).norm();
  }

  /// Cheap lower bound on distance(): distance to the affine hull alone.
  double distance_lower_bound(const Vector& x) const {
    const double to_hull = normals_.rows() ? (normals_ * (x - point_)).norm() : 0.0;
    return to_hull;
  }

 private:
  Vector point_;
  Matrix basis_;
  Matrix normals_;
  Vector lb_, ub_;
};

inline AffineSliceSet steady_state_set(const SteadyStateResult& r, const PredictionModel& M) {
  return AffineSliceSet(r.x_s, r.nullspace, M.x_lb, M.x_ub);
}

struct EpsilonChoice {
  double epsilon = 0.0;
  double R = 0.0;  // max of x'x over the lifted state box
};

/// eps = min(gamma, gamma / R) with R the largest squared norm in the lifted box.
inline EpsilonChoice choose_epsilon(double gamma, const BoxConstraints& box, int T) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  EpsilonChoice c;
  c.R = T * box.x_lb.cwiseAbs2().cwiseMax(box.x_ub.cwiseAbs2()).sum();
  c.epsilon = std::min(gamma, gamma / c.R);
  return c;
}

struct ShiftCheckReport {
  std::vector<double> costs;  // ell_s for each start offset
  double max_cost_deviation = 0.0;
  double max_shift_deviation = 0.0;  // inputs against the cyclic shift of offset 0
  std::vector<double> shift_deviation;
};

/// Re-solve the steady-state problem with prices and disturbances started at
/// every offset of the period and compare against the unrotated solution.
inline ShiftCheckReport periodic_shift_check(const LinearPeriodicSystem& sys,
                                             const StageCostSpec& cost, const BoxConstraints& box,
                                             bool augmented, const SolverSettings& settings = {}) {
  const int T = sys.T;
  const Index m = sys.m();
  ShiftCheckReport rep;
  Vector base_u;
  for (int r = 0; r < T; ++r) {
    LinearPeriodicSystem s = sys;
    StageCostSpec c = cost;
    for (int t = 0; t < T; ++t) {
      s.d_seq[t] = sys.d_seq[(t + r) % T];
      c.alpha_seq[t] = cost.alpha_seq[(t + r) % T];
    }
    const LiftedSystem L = lift(s);
    const AugmentedSystem A = augment(L);
    SteadyStateResult res;
    try {
      res = solve_steady_state(make_model(L, c, box, augmented ? &A : nullptr), settings);
    } catch (const SteadyStateInfeasible& e) {
      throw SteadyStateInfeasible("offset " + std::to_string(r) + ": " + e.what());
    }
    rep.costs.push_back(res.ell_s_modified);
    if (r == 0) {
      base_u = res.u_s;
      rep.shift_deviation.push_back(0.0);
      continue;
    }
    double dev = 0.0;
    for (int t = 0; t < T; ++t)
      dev = std::max(dev, (res.u_s.segment(t * m, m) - base_u.segment(((t + r) % T) * m, m))
                              .cwiseAbs()
                              .maxCoeff());
    rep.shift_deviation.push_back(dev);
    rep.max_shift_deviation = std::max(rep.max_shift_deviation, dev);
  }
  const auto [lo, hi] = std::minmax_element(rep.costs.begin(), rep.costs.end());
  rep.max_cost_deviation = *hi - *lo;
  return rep;
}

}  // namespace empc
