#pragma once

// Numerical checks of the dissipativity and Lyapunov arguments: a linear
// storage function from the steady-state multiplier, sampled sign checks of
// the rotated cost, a descent audit of closed-loop traces, and the bounds on
// the cost change caused by state regularization.

#include "empc/controller.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace empc {

/// lambda(x) = mu'x + offset
struct StorageFunction {
  Vector mu;
  double offset = 0.0;

  double operator()(const Vector& x) const { return mu.dot(x) + offset; }

  static StorageFunction from(const SteadyStateResult& ss) { return {ss.mu, 0.0}; }
};

/// cost(x,u) - cost_s + lambda(x) - lambda(f(x,u)). Uses the regularized cost
/// and its optimal value whenever the model carries epsilon > 0.
inline double rotated_cost(const StorageFunction& storage, const PredictionModel& M,
                           const SteadyStateResult& ss, const Vector& x, const Vector& u) {
  if (storage.mu.size() != M.state_dim())
    throw DimensionError("storage multiplier has size " + std::to_string(storage.mu.size()) +
                         ", expected " + std::to_string(M.state_dim()));
  return M.cost(x, u) - ss.ell_s_modified + storage(x) - storage(M.successor(x, u));
}

struct DissipativitySettings {
  int n_samples = 10000;
  int set_samples = 100;
  std::uint64_t seed = 1;
  double delta_fraction = 1e-2;  // "far from the set" threshold, fraction of box diameter
  double tolerance = 1e-6;
  int workers = 1;
  int chunk_size = 256;  // samples per substream
  bool refine = true;    // minimize the rotated cost over the box from the worst sample
};

struct Witness {
  Vector x, u;
  double value = 0.0;
};

struct DissipativityReport {
  int n_samples = 0;
  int set_samples = 0;
  double min_rotated = kInf;
  double min_refined = kInf;  // after local search from the worst sample
  double min_rotated_far = kInf;  // over samples at distance >= delta from the set
  int n_far = 0;
  double delta = 0.0;
  double max_abs_on_set = 0.0;
  bool certified = true;
  std::optional<Witness> witness;

  std::string verdict() const { return certified ? "CertifiedAtSamples" : "Violated"; }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Vector uniform_in(const Vector& lb, const Vector& ub, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vector x(lb.size());
  for (Index i = 0; i < lb.size(); ++i) x(i) = lb(i) + U(rng) * (ub(i) - lb(i));
  return x;
}

struct ChunkResult {
  double min_all = kInf;
  double min_far = kInf;
  int n_far = 0;
  Vector worst_x, worst_u;
};

}  // namespace detail

/// Samples (x,u) uniformly over the box plus points of the steady-state set.
///
/// Sample k belongs to chunk c = k / chunk_size and is drawn from the
/// generator seeded with splitmix64(seed + c) (stream for the set samples:
/// splitmix64(seed ^ 0x5e75e75e75e75e75)). Chunks are merged in order, so the
/// report does not depend on the number of workers.
inline DissipativityReport check_dissipativity(const StorageFunction& storage,
                                               const PredictionModel& M,
                                               const SteadyStateResult& ss,
                                               const DissipativitySettings& cfg = {}) {
  if (cfg.n_samples < 1) throw std::invalid_argument("n_samples must be at least 1");
  const AffineSliceSet set = steady_state_set(ss, M);
  DissipativityReport rep;
  rep.n_samples = cfg.n_samples;
  rep.set_samples = cfg.set_samples;
  const double diameter =
      std::sqrt((M.x_ub - M.x_lb).squaredNorm() + (M.u_ub - M.u_lb).squaredNorm());
  rep.delta = cfg.delta_fraction * diameter;

  const int chunk = std::max(1, cfg.chunk_size);
  const int n_chunks = (cfg.n_samples + chunk - 1) / chunk;
  std::vector<detail::ChunkResult> results(static_cast<std::size_t>(n_chunks));

  auto run_chunk = [&](int c) {
    std::mt19937_64 rng(detail::splitmix64(cfg.seed + static_cast<std::uint64_t>(c)));
    detail::ChunkResult r;
    const int first = c * chunk;
    const int last = std::min(cfg.n_samples, first + chunk);
    for (int k = first; k < last; ++k) {
      Vector x = detail::uniform_in(M.x_lb, M.x_ub, rng);
      Vector u = detail::uniform_in(M.u_lb, M.u_ub, rng);
      const double L = rotated_cost(storage, M, ss, x, u);
      if (L < r.min_all) {
        r.min_all = L;
        r.worst_x = x;
        r.worst_u = u;
      }
      // Distance to {(y, u_s) : y in the set}; the input part alone is a lower bound.
      const double du = (u - ss.u_s).norm();
      bool far = du >= rep.delta;
      if (!far) {
        const double lb = std::hypot(du, set.distance_lower_bound(x));
        far = lb >= rep.delta || std::hypot(du, set.distance(x)) >= rep.delta;
      }
      if (far) {
        ++r.n_far;
        r.min_far = std::min(r.min_far, L);
      }
    }
    results[static_cast<std::size_t>(c)] = std::move(r);
  };

  const int workers = std::max(1, std::min(cfg.workers, n_chunks));
  if (workers == 1) {
    for (int c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int c = w; c < n_chunks; c += workers) run_chunk(c);
      });
    for (auto& t : pool) t.join();
  }

  Vector worst_x, worst_u;
  for (const auto& r : results) {
    if (r.min_all < rep.min_rotated) {
      rep.min_rotated = r.min_all;
      worst_x = r.worst_x;
      worst_u = r.worst_u;
    }
    rep.min_rotated_far = std::min(rep.min_rotated_far, r.min_far);
    rep.n_far += r.n_far;
  }

  std::mt19937_64 set_rng(detail::splitmix64(cfg.seed ^ 0x5e75e75e75e75e75ULL));
  for (int k = 0; k < cfg.set_samples; ++k) {
    const Vector y = set.project(detail::uniform_in(M.x_lb, M.x_ub, set_rng));
    const double L = rotated_cost(storage, M, ss, y, ss.u_s);
    rep.max_abs_on_set = std::max(rep.max_abs_on_set, std::abs(L));
  }

  // Local search from the worst sample: the rotated cost is a convex
  // quadratic in (x,u), so minimizing it over the box gives its exact minimum.
  // Uniform samples alone rarely come near the set when input-change
  // penalties dominate the cost.
  Witness w{worst_x, worst_u, rep.min_rotated};
  if (cfg.refine) {
    const Index nx = M.state_dim(), nu = M.input_dim();
    QpProblem p = QpProblem::unconstrained(nx + nu);
    p.H.topLeftCorner(nx, nx) = 2.0 * M.Qxx_total();
    p.H.topRightCorner(nx, nu) = 2.0 * M.Qxu;
    p.H.bottomLeftCorner(nu, nx) = 2.0 * M.Qxu.transpose();
    p.H.bottomRightCorner(nu, nu) = 2.0 * M.Quu;
    p.g << M.qx + (Matrix::Identity(nx, nx) - M.A).transpose() * storage.mu,
        M.qu - M.B.transpose() * storage.mu;
    p.lb << M.x_lb, M.u_lb;
    p.ub << M.x_ub, M.u_ub;
    Vector z0(nx + nu);
    z0 << worst_x, worst_u;
    const QpSolution s = solve_qp(p, {}, &z0);
    if (s.status == QpStatus::Optimal) {
      const Vector x = s.x_star.head(nx), u = s.x_star.tail(nu);
      rep.min_refined = rotated_cost(storage, M, ss, x, u);
      if (rep.min_refined < w.value) w = {x, u, rep.min_refined};
    }
  }
  const double lowest = std::min(rep.min_rotated, rep.min_refined);
  rep.certified = lowest >= -cfg.tolerance && rep.max_abs_on_set <= cfg.tolerance;
  if (!rep.certified && lowest < -cfg.tolerance) rep.witness = std::move(w);
  return rep;
}

struct LyapunovAudit {
  std::vector<double> V;         // Lyapunov candidate per step
  std::vector<double> L;         // rotated cost of the applied pair
  std::vector<double> descent;   // V_{t+1} - V_t + L_t, one entry fewer than V
  double worst_descent = -kInf;
  int worst_step = -1;
  int violations = 0;
  int lower_bound_violations = 0;  // V_t < L_t - tol (fixed-point terminal only)
  double tolerance = 1e-5;

  bool ok() const { return violations == 0 && lower_bound_violations == 0; }
};

/// Recomputes the Lyapunov candidate from every stored open-loop solution and
/// checks V(x_{t+1}) - V(x_t) <= -L(x_t, u_t) + tol.
inline LyapunovAudit lyapunov_audit(const ClosedLoopTrace& trace, const PredictionModel& M,
                                    const SteadyStateResult& ss, double tol = 1e-5) {
  LyapunovAudit a;
  a.tolerance = tol;
  const StorageFunction storage = StorageFunction::from(ss);
  for (const auto& st : trace.steps) {
    if (st.open_loop.inputs.empty() || st.open_loop.states.size() != st.open_loop.inputs.size() + 1)
      throw std::invalid_argument("trace step " + std::to_string(st.step) +
                                  " has no open-loop solution");
    a.V.push_back(lyapunov_value(M, ss, trace.terminal, st.open_loop));
    a.L.push_back(rotated_cost(storage, M, ss, st.state, st.input));
  }
  for (std::size_t t = 0; t + 1 < a.V.size(); ++t) {
    const double d = a.V[t + 1] - a.V[t] + a.L[t];
    a.descent.push_back(d);
    if (d > a.worst_descent) {
      a.worst_descent = d;
      a.worst_step = static_cast<int>(t);
    }
    if (d > tol) ++a.violations;
  }
  if (trace.terminal == TerminalMode::FixedPoint)
    for (std::size_t t = 0; t < a.V.size(); ++t)
      if (a.V[t] < a.L[t] - tol) ++a.lower_bound_violations;
  return a;
}

struct AveragePerformance {
  std::vector<double> running_average;  // of the applied stage cost
  double ell_s = 0.0;
  double excess_sum = 0.0;  // sum over t < S-1 of (cost_t - ell_s)
  double telescoped_bound = 0.0;  // J_0 - J_{S-1}
  bool bound_holds = true;
  double final_step_excess = 0.0;  // cost at the last step minus ell_s
};

/// Finite-horizon form of the average-performance argument:
/// sum_{t<S-1} (cost_t - ell_s) <= J_0 - J_{S-1} for S recorded steps.
inline AveragePerformance average_performance(const ClosedLoopTrace& trace,
                                              const SteadyStateResult& ss, double tol = 1e-5) {
  AveragePerformance p;
  p.ell_s = ss.ell_s_modified;
  double sum = 0.0;
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    sum += trace.steps[t].stage_modified;
    p.running_average.push_back(sum / static_cast<double>(t + 1));
  }
  const std::size_t S = trace.steps.size();
  if (S >= 2) {
    for (std::size_t t = 0; t + 1 < S; ++t) p.excess_sum += trace.steps[t].stage_modified - p.ell_s;
    p.telescoped_bound = trace.steps.front().open_loop.modified_cost -
                         trace.steps.back().open_loop.modified_cost;
    p.bound_holds = p.excess_sum <= p.telescoped_bound + tol * static_cast<double>(S);
  }
  if (S) p.final_step_excess = trace.steps.back().stage_modified - p.ell_s;
  return p;
}

struct CostGapLedger {
  double steady_gap = 0.0;  // economic cost at the regularized optimum minus ell_s
  double gamma = 0.0;
  double epsilon = 0.0;
  double R = 0.0;
  int K = 0;
  double step_bound = 0.0;  // K * epsilon * R
  std::vector<double> step_gaps;
  bool steady_ok = true;
  bool steps_ok = true;

  bool ok() const { return steady_ok && steps_ok; }
};

/// Pair of optimal open-loop objectives from one state: with and without the
/// state regularization, on the same feasible set.
struct OpenLoopPair {
  double regularized = 0.0;
  double economic = 0.0;
};

inline CostGapLedger cost_gap_ledger(const SteadyStateResult& ss_plain,
                                     const SteadyStateResult& ss_modified,
                                     const EpsilonChoice& eps, double gamma, int K,
                                     const std::vector<OpenLoopPair>& steps) {
  if (ss_plain.u_s.size() != ss_modified.u_s.size() ||
      ss_plain.x_s.size() != ss_modified.x_s.size())
    throw DimensionError("steady-state results come from different instances");
  if (ss_plain.epsilon != 0.0)
    throw std::invalid_argument("plain steady state must be solved without regularization");
  if (std::abs(ss_modified.epsilon - eps.epsilon) > 1e-15)
    throw std::invalid_argument("regularized steady state does not use the chosen epsilon");
  CostGapLedger g;
  g.gamma = gamma;
  g.epsilon = eps.epsilon;
  g.R = eps.R;
  g.K = K;
  g.step_bound = K * eps.epsilon * eps.R;
  g.steady_gap = ss_modified.ell_s - ss_plain.ell_s;
  g.steady_ok = g.steady_gap >= -1e-8 && g.steady_gap <= gamma + 1e-8;
  for (const auto& s : steps) {
    const double d = s.regularized - s.economic;
    g.step_gaps.push_back(d);
    if (d < -1e-8 || d > g.step_bound + 1e-6) g.steps_ok = false;
  }
  return g;
}

}  // namespace empc
