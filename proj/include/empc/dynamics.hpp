#pragma once

// Linear systems driven by a periodic disturbance, their period-T lift and
// the lift augmented with the previously applied input.

#include "empc/qp.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace empc {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

inline std::string dims(const Matrix& M) {
  return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

}  // namespace detail

/// x_{t+1} = A x_t + B_u u_t + B_d d_{t mod T}
struct LinearPeriodicSystem {
  Matrix A;
  Matrix B_u;
  Matrix B_d;
  int T = 1;
  std::vector<Vector> d_seq;

  Index n() const { return A.rows(); }
  Index m() const { return B_u.cols(); }
  Index p() const { return B_d.cols(); }

  void validate() const {
    detail::require(A.rows() == A.cols(), "A must be square, got " + detail::dims(A));
    detail::require(B_u.rows() == n(), "B_u has " + std::to_string(B_u.rows()) +
                                           " rows, expected " + std::to_string(n()));
    detail::require(B_d.rows() == n(), "B_d has " + std::to_string(B_d.rows()) +
                                           " rows, expected " + std::to_string(n()));
    detail::require(T >= 1, "period must be >= 1");
    detail::require(static_cast<int>(d_seq.size()) == T,
                    "disturbance sequence has " + std::to_string(d_seq.size()) +
                        " entries, expected " + std::to_string(T));
    for (std::size_t k = 0; k < d_seq.size(); ++k)
      detail::require(d_seq[k].size() == p(), "disturbance " + std::to_string(k) + " has size " +
                                                  std::to_string(d_seq[k].size()) + ", expected " +
                                                  std::to_string(p()));
  }

  const Vector& disturbance(long t) const {
    const long r = ((t % T) + T) % T;
    return d_seq[static_cast<std::size_t>(r)];
  }
};

inline Vector step(const LinearPeriodicSystem& sys, const Vector& x, const Vector& u, long t) {
  detail::require(x.size() == sys.n(), "state has size " + std::to_string(x.size()) +
                                           ", expected " + std::to_string(sys.n()));
  detail::require(u.size() == sys.m(), "input has size " + std::to_string(u.size()) +
                                           ", expected " + std::to_string(sys.m()));
  detail::require(t >= 0, "time index must be nonnegative");
  return sys.A * x + sys.B_u * u + sys.B_d * sys.disturbance(t);
}

/// One step of the lift spans a whole period. The lifted state stacks
/// x_{kT+1} ... x_{(k+1)T}; the lifted input stacks u_{kT} ... u_{(k+1)T-1}.
struct LiftedSystem {
  Matrix A_tilde;
  Matrix B_tilde;
  Matrix Bd_tilde;
  Vector d_tilde;
  int T = 1;
  Index n = 0;
  Index m = 0;
  Index p = 0;

  Index state_dim() const { return n * T; }
  Index input_dim() const { return m * T; }

  /// Constant part of the successor, Bd_tilde * d_tilde.
  Vector drift() const { return Bd_tilde * d_tilde; }

  Vector step(const Vector& x, const Vector& u) const {
    detail::require(x.size() == state_dim(), "lifted state has wrong size");
    detail::require(u.size() == input_dim(), "lifted input has wrong size");
    return A_tilde * x + B_tilde * u + drift();
  }
};

inline LiftedSystem lift(const LinearPeriodicSystem& sys) {
  sys.validate();
  const Index n = sys.n(), m = sys.m(), p = sys.p();
  const int T = sys.T;

  // powers[i] = A^i
  std::vector<Matrix> powers(static_cast<std::size_t>(T) + 1);
  powers[0] = Matrix::Identity(n, n);
  for (int i = 1; i <= T; ++i) powers[i] = sys.A * powers[i - 1];

  LiftedSystem L;
  L.T = T;
  L.n = n;
  L.m = m;
  L.p = p;
  L.A_tilde = Matrix::Zero(n * T, n * T);
  L.B_tilde = Matrix::Zero(n * T, m * T);
  L.Bd_tilde = Matrix::Zero(n * T, p * T);
  L.d_tilde.resize(p * T);
  for (int i = 0; i < T; ++i) {
    L.A_tilde.block(i * n, (T - 1) * n, n, n) = powers[i + 1];
    for (int j = 0; j <= i; ++j) {
      L.B_tilde.block(i * n, j * m, n, m) = powers[i - j] * sys.B_u;
      L.Bd_tilde.block(i * n, j * p, n, p) = powers[i - j] * sys.B_d;
    }
    L.d_tilde.segment(i * p, p) = sys.d_seq[i];
  }
  return L;
}

/// Lifted system with the last applied input appended to the state, so that
/// input-change penalties become a function of (state, input).
struct AugmentedSystem {
  LiftedSystem lifted;
  Matrix A_hat;
  Matrix B_hat;
  Matrix Bd_hat;
  Matrix M_bar;  // mT x mT
  Matrix N_bar;  // mT x m
  Matrix E;      // m x mT
  Matrix N_hat;  // mT x (nT+m), N_hat * x_hat = N_bar * v

  Index state_dim() const { return lifted.state_dim() + lifted.m; }
  Index input_dim() const { return lifted.input_dim(); }

  Vector step(const Vector& x_hat, const Vector& u) const {
    detail::require(x_hat.size() == state_dim(), "augmented state has wrong size");
    detail::require(u.size() == input_dim(), "lifted input has wrong size");
    return A_hat * x_hat + B_hat * u + Bd_hat * lifted.d_tilde;
  }

  /// Input differences over the period given the previous input carried in x_hat.
  Vector delta_u(const Vector& x_hat, const Vector& u) const { return M_bar * u - N_hat * x_hat; }

  Vector stack(const Vector& x_tilde, const Vector& v) const {
    Vector out(state_dim());
    out << x_tilde, v;
    return out;
  }
};

inline AugmentedSystem augment(const LiftedSystem& L) {
  const Index nT = L.state_dim(), mT = L.input_dim(), m = L.m;
  AugmentedSystem S;
  S.lifted = L;
  S.M_bar = Matrix::Identity(mT, mT);
  for (Index k = m; k < mT; ++k) S.M_bar(k, k - m) = -1.0;
  S.N_bar = Matrix::Zero(mT, m);
  S.N_bar.topRows(m) = Matrix::Identity(m, m);
  S.E = Matrix::Zero(m, mT);
  S.E.rightCols(m) = Matrix::Identity(m, m);
  S.N_hat = Matrix::Zero(mT, nT + m);
  S.N_hat.rightCols(m) = S.N_bar;

  S.A_hat = Matrix::Zero(nT + m, nT + m);
  S.A_hat.topLeftCorner(nT, nT) = L.A_tilde;
  S.B_hat.resize(nT + m, mT);
  S.B_hat << L.B_tilde, S.E;
  S.Bd_hat = Matrix::Zero(nT + m, L.Bd_tilde.cols());
  S.Bd_hat.topRows(nT) = L.Bd_tilde;
  return S;
}

struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> inputs;
  long t0 = 0;
};

inline Trajectory simulate(const LinearPeriodicSystem& sys, const Vector& x0,
                           const std::vector<Vector>& inputs, long t0 = 0) {
  Trajectory tr;
  tr.t0 = t0;
  tr.inputs = inputs;
  tr.states.reserve(inputs.size() + 1);
  tr.states.push_back(x0);
  for (std::size_t k = 0; k < inputs.size(); ++k)
    tr.states.push_back(step(sys, tr.states.back(), inputs[k], t0 + static_cast<long>(k)));
  return tr;
}

/// Stack per-step vectors into one column, e.g. a period of inputs.
inline Vector stack(const std::vector<Vector>& parts, std::size_t first, std::size_t count) {
  Index total = 0;
  for (std::size_t k = first; k < first + count; ++k) total += parts[k].size();
  Vector out(total);
  Index at = 0;
  for (std::size_t k = first; k < first + count; ++k) {
    out.segment(at, parts[k].size()) = parts[k];
    at += parts[k].size();
  }
  return out;
}

/// u_k - u_{k-1} computed directly from a raw input history, with
/// `previous` standing in for u_{-1}.
inline std::vector<Vector> input_differences(const std::vector<Vector>& inputs,
                                             const Vector& previous) {
  std::vector<Vector> out;
  out.reserve(inputs.size());
  Vector last = previous;
  for (const auto& u : inputs) {
    out.push_back(u - last);
    last = u;
  }
  return out;
}

}  // namespace empc
