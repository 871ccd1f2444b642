#pragma once

// Small instances shared by the test files.

#include "empc/empc.hpp"

#include <random>

namespace empc::testing {

inline Vector vec1(double v) { return Vector::Constant(1, v); }

/// Scalar x+ = a x + b u + d_t with cost r u^2 + alpha_t u + c on the box
/// [x_lo, x_hi] x [u_lo, u_hi].
struct ScalarCase {
  double a = 1.0, b = 1.0;
  std::vector<double> d = {0.0};
  double r = 1.0;
  std::vector<double> alpha;  // defaults to zeros
  double c = 0.0;
  double x_lo = -1.0, x_hi = 1.0, u_lo = -1.0, u_hi = 1.0;
  double epsilon = 0.0;

  LinearPeriodicSystem system() const {
    LinearPeriodicSystem s;
    s.A = Matrix::Constant(1, 1, a);
    s.B_u = Matrix::Constant(1, 1, b);
    s.B_d = Matrix::Identity(1, 1);
    s.T = static_cast<int>(d.size());
    for (double v : d) s.d_seq.push_back(vec1(v));
    return s;
  }

  StageCostSpec cost() const {
    StageCostSpec c0;
    for (std::size_t t = 0; t < d.size(); ++t)
      c0.alpha_seq.push_back(vec1(alpha.empty() ? 0.0 : alpha[t]));
    c0.input_weight = Matrix::Constant(1, 1, r);
    c0.constant_per_step = c;
    c0.W = Matrix::Zero(1, 1);
    c0.epsilon = epsilon;
    return c0;
  }

  BoxConstraints box() const {
    return {vec1(x_lo), vec1(x_hi), vec1(u_lo), vec1(u_hi)};
  }

  PredictionModel model() const { return make_model(lift(system()), cost(), box()); }
};

/// The integrator with cost u^2 on [-1, 1] x [-1, 1].
inline ScalarCase integrator(double epsilon = 0.0) {
  ScalarCase c;
  c.epsilon = epsilon;
  return c;
}

/// Random stable-ish system with a strictly convex input cost and a box that
/// contains a steady state (the origin is steady when the disturbance is 0).
struct RandomInstance {
  LinearPeriodicSystem sys;
  StageCostSpec cost;
  BoxConstraints box;
};

inline RandomInstance random_instance(std::mt19937_64& rng, Index n, Index m, int T,
                                      double epsilon = 0.0) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> uni(0.5, 1.5);
  RandomInstance r;
  r.sys.A = Matrix(n, n);
  r.sys.B_u = Matrix(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) r.sys.A(i, j) = 0.3 * g(rng);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) r.sys.B_u(i, j) = g(rng);
  r.sys.B_d = Matrix::Identity(n, n);
  r.sys.T = T;
  for (int t = 0; t < T; ++t) {
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = 0.1 * g(rng);
    r.sys.d_seq.push_back(d);
  }
  r.cost.input_weight = Matrix::Identity(m, m) * uni(rng);
  for (int t = 0; t < T; ++t) {
    Vector a(m);
    for (Index i = 0; i < m; ++i) a(i) = g(rng);
    r.cost.alpha_seq.push_back(a);
  }
  r.cost.W = Matrix::Zero(m, m);
  r.cost.epsilon = epsilon;
  r.box.x_lb = Vector::Constant(n, -5.0);
  r.box.x_ub = Vector::Constant(n, 5.0);
  r.box.u_lb = Vector::Constant(m, -1.0);
  r.box.u_ub = Vector::Constant(m, 1.0);
  return r;
}

}  // namespace empc::testing
