#pragma once

// Box constraints, the periodic stage cost, and their compilation onto a
// lifted (or augmented) system as one time-invariant quadratic model.

#include "empc/dynamics.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace empc {

/// Per-step boxes; X and U of the original (unlifted) system.
struct BoxConstraints {
  Vector x_lb, x_ub;
  Vector u_lb, u_ub;

  void validate(Index n, Index m) const {
    detail::require(x_lb.size() == n && x_ub.size() == n, "state bounds must have size " +
                                                              std::to_string(n));
    detail::require(u_lb.size() == m && u_ub.size() == m, "input bounds must have size " +
                                                              std::to_string(m));
    for (Index i = 0; i < n; ++i)
      detail::require(x_lb(i) <= x_ub(i), "state bound " + std::to_string(i) + " has lb > ub");
    for (Index i = 0; i < m; ++i)
      detail::require(u_lb(i) <= u_ub(i), "input bound " + std::to_string(i) + " has lb > ub");
    detail::require(x_lb.allFinite() && x_ub.allFinite() && u_lb.allFinite() && u_ub.allFinite(),
                    "bounds must be finite (compact constraint sets)");
  }

  double diameter_lifted(int T) const {
    return std::sqrt(T * ((x_ub - x_lb).squaredNorm()));
  }
};

/// Per-step cost  alpha_t'u + u'R u + c + du'W du + eps x'x,  du = u_t - u_{t-1}.
struct StageCostSpec {
  std::vector<Vector> alpha_seq;
  Matrix input_weight;  // R
  double constant_per_step = 0.0;
  Matrix W;
  double epsilon = 0.0;

  static StageCostSpec linear(std::vector<Vector> alpha, Index m) {
    StageCostSpec c;
    c.alpha_seq = std::move(alpha);
    c.input_weight = Matrix::Zero(m, m);
    c.W = Matrix::Zero(m, m);
    return c;
  }

  bool has_input_change() const { return W.size() > 0 && W.cwiseAbs().maxCoeff() > 0.0; }

  void validate(int T, Index m) const {
    detail::require(static_cast<int>(alpha_seq.size()) == T,
                    "alpha_seq has " + std::to_string(alpha_seq.size()) + " entries, expected " +
                        std::to_string(T));
    for (const auto& a : alpha_seq) detail::require(a.size() == m, "alpha entry has wrong size");
    detail::require(input_weight.rows() == m && input_weight.cols() == m,
                    "input_weight must be " + std::to_string(m) + "x" + std::to_string(m));
    detail::require(W.rows() == m && W.cols() == m,
                    "W must be " + std::to_string(m) + "x" + std::to_string(m));
    detail::require(epsilon >= 0.0, "epsilon must be nonnegative");
    for (const Matrix* M : {&input_weight, &W}) {
      detail::require((*M - M->transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                      "cost weights must be symmetric");
      Eigen::SelfAdjointEigenSolver<Matrix> es(*M);
      detail::require(es.eigenvalues().minCoeff() >= -1e-12, "cost weights must be PSD");
    }
  }
};

/// Time-invariant model x+ = A x + B u + drift with stage cost
///   econ(x,u) = x'Qxx x + 2 x'Qxu u + u'Quu u + qx'x + qu'u + c0
///   cost(x,u) = econ(x,u) + epsilon * |x_plant|^2
/// where x_plant is the first plant_dim components (the lifted plant state,
/// excluding any carried input).
struct PredictionModel {
  Matrix A, B;
  Vector drift;
  Matrix Qxx, Qxu, Quu;
  Vector qx, qu;
  double c0 = 0.0;
  double epsilon = 0.0;
  Index plant_dim = 0;
  Vector x_lb, x_ub, u_lb, u_ub;
  int T = 1;
  Index n = 0, m = 0;  // per-step dimensions
  bool augmented = false;

  Index state_dim() const { return A.rows(); }
  Index input_dim() const { return B.cols(); }

  Vector successor(const Vector& x, const Vector& u) const { return A * x + B * u + drift; }

  double economic_cost(const Vector& x, const Vector& u) const {
    return x.dot(Qxx * x) + 2.0 * x.dot(Qxu * u) + u.dot(Quu * u) + qx.dot(x) + qu.dot(u) + c0;
  }

  double regularization(const Vector& x) const {
    return epsilon * x.head(plant_dim).squaredNorm();
  }

  double cost(const Vector& x, const Vector& u) const {
    return economic_cost(x, u) + regularization(x);
  }

  /// Quadratic part of cost() in x, including the regularization.
  Matrix Qxx_total() const {
    Matrix Q = Qxx;
    Q.diagonal().head(plant_dim).array() += epsilon;
    return Q;
  }

  bool state_in_box(const Vector& x, double tol) const {
    return (x - x_lb).minCoeff() >= -tol && (x_ub - x).minCoeff() >= -tol;
  }
};

namespace detail {

inline Vector repeat(const Vector& v, int times) { return v.replicate(times, 1); }

}  // namespace detail

/// Compile the stage cost and boxes onto the lifted system; with `aug` the
/// state carries the previous input and input changes are penalized.
inline PredictionModel make_model(const LiftedSystem& L, const StageCostSpec& cost,
                                  const BoxConstraints& box, const AugmentedSystem* aug = nullptr) {
  cost.validate(L.T, L.m);
  box.validate(L.n, L.m);
  if (cost.has_input_change() && aug == nullptr)
    throw DimensionError("input-change weight W needs the augmented system");

  const int T = L.T;
  const Index mT = L.input_dim(), nT = L.state_dim();
  PredictionModel M;
  M.T = T;
  M.n = L.n;
  M.m = L.m;
  M.epsilon = cost.epsilon;
  M.plant_dim = nT;
  M.augmented = aug != nullptr;

  if (aug) {
    M.A = aug->A_hat;
    M.B = aug->B_hat;
    M.drift = aug->Bd_hat * L.d_tilde;
  } else {
    M.A = L.A_tilde;
    M.B = L.B_tilde;
    M.drift = L.drift();
  }
  const Index nx = M.A.rows();

  Matrix R_tilde = Matrix::Zero(mT, mT);
  M.qu.resize(mT);
  for (int t = 0; t < T; ++t) {
    R_tilde.block(t * L.m, t * L.m, L.m, L.m) = cost.input_weight;
    M.qu.segment(t * L.m, L.m) = cost.alpha_seq[t];
  }
  M.Quu = R_tilde;
  M.Qxx = Matrix::Zero(nx, nx);
  M.Qxu = Matrix::Zero(nx, mT);
  M.qx = Vector::Zero(nx);
  M.c0 = T * cost.constant_per_step;

  if (aug) {
    Matrix W_tilde = Matrix::Zero(mT, mT);
    for (int t = 0; t < T; ++t) W_tilde.block(t * L.m, t * L.m, L.m, L.m) = cost.W;
    // (M u - N x)' W (M u - N x)
    M.Quu += aug->M_bar.transpose() * W_tilde * aug->M_bar;
    M.Qxu = -aug->N_hat.transpose() * W_tilde * aug->M_bar;
    M.Qxx = aug->N_hat.transpose() * W_tilde * aug->N_hat;
  }

  M.x_lb.resize(nx);
  M.x_ub.resize(nx);
  M.x_lb.head(nT) = detail::repeat(box.x_lb, T);
  M.x_ub.head(nT) = detail::repeat(box.x_ub, T);
  if (aug) {
    M.x_lb.tail(L.m) = box.u_lb;
    M.x_ub.tail(L.m) = box.u_ub;
  }
  M.u_lb = detail::repeat(box.u_lb, T);
  M.u_ub = detail::repeat(box.u_ub, T);
  return M;
}

}  // namespace empc
