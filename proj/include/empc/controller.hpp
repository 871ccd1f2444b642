#pragma once

// Receding-horizon economic MPC on a lifted (or augmented) model with a
// terminal constraint on the optimal steady-state set or a single point.

#include "empc/steady_state.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace empc {

enum class TerminalMode { SteadyStateSet, FixedPoint };
enum class CostVariant { Economic, Rotated, Modified };
enum class WarmStart { Shifted, Cold };

inline std::string_view to_string(TerminalMode m) {
  return m == TerminalMode::SteadyStateSet ? "steady_state_set" : "fixed_point";
}
inline std::string_view to_string(CostVariant v) {
  switch (v) {
    case CostVariant::Economic: return "economic";
    case CostVariant::Rotated: return "rotated";
    case CostVariant::Modified: return "modified";
  }
  return "unknown";
}

struct EmpcConfig {
  int K = 2;  // horizon in periods
  TerminalMode terminal = TerminalMode::SteadyStateSet;
  Vector x_target;  // FixedPoint only
  CostVariant variant = CostVariant::Economic;
  WarmStart warm_start = WarmStart::Shifted;
  bool allow_single_period = false;
  SolverSettings solver;
};

class EmpcError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an EMPC problem has no feasible solution.
class EmpcInfeasible : public EmpcError {
 public:
  EmpcInfeasible(const std::string& what, QpStatus status, double residual)
      : EmpcError(what), status(status), residual(residual) {}
  QpStatus status;
  double residual;
};

struct OpenLoopSolution {
  std::vector<Vector> inputs;  // K blocks
  std::vector<Vector> states;  // K+1 blocks, states[0] = x_now
  double cost = 0.0;           // objective of the solved variant, constants included
  double economic_cost = 0.0;  // sum of economic stage costs
  double modified_cost = 0.0;  // sum of stage costs with regularization
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  bool polished = false;
  double solve_ms = 0.0;
};

/// The EMPC problem in QP form. Decision vector: [u_0 .. u_{K-1}, x_1 .. x_K].
struct EmpcQp {
  QpProblem qp;
  double constant = 0.0;  // objective = qp objective + constant
  std::map<Index, double> fixed;  // FixedPoint terminal
  Index nx = 0, nu = 0;
  int K = 0;

  Index u_index(int i) const { return static_cast<Index>(i) * nu; }
  Index x_index(int i) const { return static_cast<Index>(K) * nu + static_cast<Index>(i - 1) * nx; }
};

namespace detail {

inline void check_config(const PredictionModel& M, const SteadyStateResult& ss,
                         const EmpcConfig& cfg) {
  if (cfg.K < 1) throw EmpcError("horizon must be at least one period");
  if (cfg.K == 1 && !cfg.allow_single_period)
    throw EmpcError("horizon of one period requires allow_single_period");
  if (ss.u_s.size() != M.input_dim() || ss.x_s.size() != M.state_dim() ||
      ss.mu.size() != M.state_dim())
    throw DimensionError("steady-state result does not match the model");
  if (cfg.variant == CostVariant::Modified && !(M.epsilon > 0.0))
    throw EmpcError("modified variant needs epsilon > 0");
  if (cfg.terminal == TerminalMode::FixedPoint) {
    if (cfg.x_target.size() != M.state_dim()) throw DimensionError("x_target has wrong size");
    const AffineSliceSet set = steady_state_set(ss, M);
    if (!set.contains(cfg.x_target, 1e-7))
      throw EmpcError("fixed-point target is not in the steady-state set");
  }
}

inline Vector admissible_state(const PredictionModel& M, const Vector& x) {
  if (x.size() != M.state_dim())
    throw DimensionError("state has size " + std::to_string(x.size()) + ", expected " +
                         std::to_string(M.state_dim()));
  const double below = (M.x_lb - x).maxCoeff();
  const double above = (x - M.x_ub).maxCoeff();
  if (std::max(below, above) > 1e-9)
    throw EmpcError("initial state violates its bounds by " +
                    std::to_string(std::max(below, above)));
  return x.cwiseMax(M.x_lb).cwiseMin(M.x_ub);
}

}  // namespace detail

/// Rotated stage cost cost(x,u) - ell_s + mu'(x - f(x,u)), regularization
/// included whenever the model carries one.
inline double rotated_stage_cost(const PredictionModel& M, const SteadyStateResult& ss,
                                 const Vector& x, const Vector& u) {
  return M.cost(x, u) - ss.ell_s_modified + ss.mu.dot(x - M.successor(x, u));
}

inline EmpcQp build_empc_qp(const PredictionModel& M, const SteadyStateResult& ss,
                            const EmpcConfig& cfg, const Vector& x_now) {
  detail::check_config(M, ss, cfg);
  if (x_now.size() != M.state_dim()) throw DimensionError("x_now has wrong size");
  const Index nx = M.state_dim(), nu = M.input_dim();
  const int K = cfg.K;
  EmpcQp out;
  out.nx = nx;
  out.nu = nu;
  out.K = K;
  const Index nz = K * (nx + nu);
  QpProblem& p = out.qp;
  p = QpProblem::unconstrained(nz);

  const Matrix Qxx = M.Qxx_total();
  const bool rotated = cfg.variant == CostVariant::Rotated;
  const Vector& mu = ss.mu;
  const Matrix I_minus_A = Matrix::Identity(nx, nx) - M.A;

  for (int i = 0; i < K; ++i) {
    const Index ui = out.u_index(i);
    p.H.block(ui, ui, nu, nu) = 2.0 * M.Quu;
    p.g.segment(ui, nu) = M.qu;
    if (rotated) p.g.segment(ui, nu) -= M.B.transpose() * mu;
    out.constant += M.c0;
    if (i == 0) {
      p.g.segment(ui, nu) += 2.0 * M.Qxu.transpose() * x_now;
      out.constant += x_now.dot(Qxx * x_now) + M.qx.dot(x_now);
      if (rotated) out.constant += mu.dot(I_minus_A * x_now);
    } else {
      const Index xi = out.x_index(i);
      p.H.block(xi, xi, nx, nx) = 2.0 * Qxx;
      p.H.block(xi, ui, nx, nu) = 2.0 * M.Qxu;
      p.H.block(ui, xi, nu, nx) = 2.0 * M.Qxu.transpose();
      p.g.segment(xi, nx) = M.qx;
      if (rotated) p.g.segment(xi, nx) += I_minus_A.transpose() * mu;
    }
    if (rotated) out.constant -= ss.ell_s_modified + mu.dot(M.drift);
  }
  if (rotated) p.g.segment(out.x_index(K), nx) += mu;

  // Dynamics rows: x_{i+1} - A x_i - B u_i = drift (x_0 known).
  Index rows = K * nx;
  Matrix normals;
  if (cfg.terminal == TerminalMode::SteadyStateSet) {
    normals = steady_state_set(ss, M).normals();
    rows += normals.rows();
  }
  p.A_eq = Matrix::Zero(rows, nz);
  p.b_eq = Vector::Zero(rows);
  for (int i = 0; i < K; ++i) {
    const Index r = i * nx;
    p.A_eq.block(r, out.x_index(i + 1), nx, nx) = Matrix::Identity(nx, nx);
    p.A_eq.block(r, out.u_index(i), nx, nu) = -M.B;
    p.b_eq.segment(r, nx) = M.drift;
    if (i == 0)
      p.b_eq.segment(r, nx) += M.A * x_now;
    else
      p.A_eq.block(r, out.x_index(i), nx, nx) = -M.A;
  }
  if (normals.rows() > 0) {
    p.A_eq.block(K * nx, out.x_index(K), normals.rows(), nx) = normals;
    p.b_eq.tail(normals.rows()) = normals * ss.x_s;
  }

  for (int i = 0; i < K; ++i) {
    p.lb.segment(out.u_index(i), nu) = M.u_lb;
    p.ub.segment(out.u_index(i), nu) = M.u_ub;
    p.lb.segment(out.x_index(i + 1), nx) = M.x_lb;
    p.ub.segment(out.x_index(i + 1), nx) = M.x_ub;
  }
  if (cfg.terminal == TerminalMode::FixedPoint)
    for (Index j = 0; j < nx; ++j) out.fixed[out.x_index(K) + j] = cfg.x_target(j);
  return out;
}

/// Objective of the configured variant evaluated along a trajectory.
inline double evaluate_objective(const PredictionModel& M, const SteadyStateResult& ss,
                                 const EmpcConfig& cfg, const std::vector<Vector>& states,
                                 const std::vector<Vector>& inputs) {
  double J = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    J += cfg.variant == CostVariant::Rotated ? rotated_stage_cost(M, ss, states[i], inputs[i])
                                             : M.cost(states[i], inputs[i]);
  if (cfg.variant == CostVariant::Rotated) J += ss.mu.dot(states.back());
  return J;
}

/// Lyapunov candidate: summed rotated costs along the open-loop solution,
/// plus the storage at the terminal state when the terminal set is the
/// whole steady-state set.
inline double lyapunov_value(const PredictionModel& M, const SteadyStateResult& ss,
                             TerminalMode terminal, const OpenLoopSolution& ol) {
  double V = 0.0;
  for (std::size_t i = 0; i < ol.inputs.size(); ++i)
    V += rotated_stage_cost(M, ss, ol.states[i], ol.inputs[i]);
  if (terminal == TerminalMode::SteadyStateSet) V += ss.mu.dot(ol.states.back());
  return V;
}

/// Candidate from the previous solution: drop the first block, append u_s,
/// and re-simulate from x_now.
inline OpenLoopSolution shifted_candidate(const PredictionModel& M, const SteadyStateResult& ss,
                                          const OpenLoopSolution& prev, const Vector& x_now) {
  OpenLoopSolution c;
  c.inputs.assign(prev.inputs.begin() + 1, prev.inputs.end());
  c.inputs.push_back(ss.u_s);
  c.states.push_back(x_now);
  for (const auto& u : c.inputs) c.states.push_back(M.successor(c.states.back(), u));
  return c;
}

inline OpenLoopSolution solve_step(const PredictionModel& M, const SteadyStateResult& ss,
                                   const EmpcConfig& cfg, const Vector& x_now_raw,
                                   const OpenLoopSolution* prev = nullptr) {
  const Vector x_now = detail::admissible_state(M, x_now_raw);
  const EmpcQp e = build_empc_qp(M, ss, cfg, x_now);

  std::optional<Vector> warm;
  if (cfg.warm_start == WarmStart::Shifted && prev != nullptr &&
      static_cast<int>(prev->inputs.size()) == cfg.K) {
    const OpenLoopSolution c = shifted_candidate(M, ss, *prev, x_now);
    Vector z(e.qp.num_variables());
    for (int i = 0; i < cfg.K; ++i) {
      z.segment(e.u_index(i), e.nu) = c.inputs[i];
      z.segment(e.x_index(i + 1), e.nx) = c.states[i + 1];
    }
    warm = std::move(z);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const QpSolution s =
      e.fixed.empty()
          ? solve_qp(e.qp, cfg.solver, warm ? &*warm : nullptr)
          : solve_qp_with_fixed_variables(e.qp, e.fixed, cfg.solver, warm ? &*warm : nullptr);
  const auto t1 = std::chrono::steady_clock::now();

  if (s.status != QpStatus::Optimal)
    throw EmpcInfeasible("EMPC problem not solved: " + std::string(to_string(s.status)) +
                             " (primal residual " + std::to_string(s.primal_residual) + ")",
                         s.status, s.primal_residual);

  OpenLoopSolution ol;
  ol.status = s.status;
  ol.iterations = s.iterations;
  ol.polished = s.polished;
  ol.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  ol.states.push_back(x_now);
  for (int i = 0; i < cfg.K; ++i) {
    ol.inputs.push_back(s.x_star.segment(e.u_index(i), e.nu));
    ol.states.push_back(s.x_star.segment(e.x_index(i + 1), e.nx));
  }
  ol.cost = s.objective + e.constant;
  for (int i = 0; i < cfg.K; ++i) {
    ol.economic_cost += M.economic_cost(ol.states[i], ol.inputs[i]);
    ol.modified_cost += M.cost(ol.states[i], ol.inputs[i]);
  }
  return ol;
}

struct ClosedLoopStep {
  int step = 0;
  Vector state;
  Vector input;
  double stage_economic = 0.0;
  double stage_modified = 0.0;
  double rotated = 0.0;
  double lyapunov = 0.0;
  double dist_to_set = 0.0;
  double candidate_cost = std::numeric_limits<double>::quiet_NaN();  // shifted candidate, variant objective
  OpenLoopSolution open_loop;
};

struct ClosedLoopTrace {
  CostVariant variant = CostVariant::Economic;
  TerminalMode terminal = TerminalMode::SteadyStateSet;
  std::vector<ClosedLoopStep> steps;
  Vector final_state;
  bool completed = false;
  std::string failure;  // set when a step could not be solved
};

class ClosedLoopAborted : public EmpcError {
 public:
  ClosedLoopAborted(const std::string& what, ClosedLoopTrace trace)
      : EmpcError(what), trace(std::move(trace)) {}
  ClosedLoopTrace trace;
};

/// Successor of the true plant; defaults to the prediction model.
using PlantStep = std::function<Vector(const Vector& x, const Vector& u, int step)>;

inline ClosedLoopTrace run_closed_loop(const PredictionModel& M, const SteadyStateResult& ss,
                                       const EmpcConfig& cfg, const Vector& x0, int n_steps,
                                       const PlantStep& plant = {}) {
  ClosedLoopTrace tr;
  tr.variant = cfg.variant;
  tr.terminal = cfg.terminal;
  const AffineSliceSet set = steady_state_set(ss, M);
  Vector x = detail::admissible_state(M, x0);
  std::optional<OpenLoopSolution> prev;
  for (int t = 0; t < n_steps; ++t) {
    ClosedLoopStep st;
    st.step = t;
    st.state = x;
    if (prev) {
      const OpenLoopSolution c = shifted_candidate(M, ss, *prev, x);
      st.candidate_cost = evaluate_objective(M, ss, cfg, c.states, c.inputs);
    }
    try {
      st.open_loop = solve_step(M, ss, cfg, x, prev ? &*prev : nullptr);
    } catch (const EmpcError& e) {
      tr.final_state = x;
      tr.failure = "step " + std::to_string(t) + ": " + e.what();
      if (t == 0) tr.failure += " (initial state outside the feasible region)";
      throw ClosedLoopAborted(tr.failure, tr);
    }
    st.input = st.open_loop.inputs.front();
    st.stage_economic = M.economic_cost(x, st.input);
    st.stage_modified = M.cost(x, st.input);
    st.rotated = rotated_stage_cost(M, ss, x, st.input);
    st.lyapunov = lyapunov_value(M, ss, cfg.terminal, st.open_loop);
    st.dist_to_set = cfg.terminal == TerminalMode::FixedPoint ? (x - cfg.x_target).norm()
                                                               : set.distance(x, cfg.solver);
    prev = st.open_loop;
    Vector next = plant ? plant(x, st.input, t) : M.successor(x, st.input);
    // Rounding can push a bound-touching state marginally outside the box.
    x = next;
    const double viol = std::max((M.x_lb - x).maxCoeff(), (x - M.x_ub).maxCoeff());
    if (viol > 0.0 && viol <= 1e-9) x = x.cwiseMax(M.x_lb).cwiseMin(M.x_ub);
    tr.steps.push_back(std::move(st));
  }
  tr.final_state = x;
  tr.completed = true;
  return tr;
}

/// Optimal open-loop objective from x with the given settings; used for the
/// regularized-versus-economic cost comparison.
inline double optimal_open_loop_cost(const PredictionModel& M, const SteadyStateResult& ss,
                                     const EmpcConfig& cfg, const Vector& x) {
  return solve_step(M, ss, cfg, x).cost;
}

}  // namespace empc
