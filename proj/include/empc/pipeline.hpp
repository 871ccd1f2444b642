#pragma once

// Scenario description and the end-to-end runs shared by the CLI and the
// acceptance harness.

#include "empc/certification.hpp"
#include "empc/wdn.hpp"

#include <optional>
#include <string>
#include <vector>

namespace empc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Scenario {
  std::string name = "scenario";
  LinearPeriodicSystem system;
  StageCostSpec cost;
  std::optional<double> gamma;  // when set, epsilon is chosen from it
  BoxConstraints box;
  std::optional<wdn::WdnInstance> network;
  std::optional<wdn::RichmondOverrides> richmond;  // set for network scenarios
  double step_hours = 1.0;

  EmpcConfig empc;
  int n_steps = 10;
  std::string x0_keyword;  // "min", "max", "zero" or empty when x0 is given
  Vector x0;               // per-step (n), lifted (nT) or full model state
  Vector v0;               // previous input for the augmented state
  std::optional<Vector> x_target;

  DissipativitySettings certification;
  std::string out_dir = "out";
  std::vector<std::string> formats = {"csv", "json", "txt"};
};

struct Prepared {
  LiftedSystem lifted;
  AugmentedSystem augmented_system;
  bool augmented = false;
  std::optional<EpsilonChoice> eps;
  PredictionModel model;  // as configured (regularized for the modified variant)
  PredictionModel plain;  // same without regularization
};

inline Prepared prepare(const Scenario& sc) {
  Prepared p;
  p.lifted = lift(sc.system);
  p.augmented = sc.cost.has_input_change();
  if (p.augmented) p.augmented_system = augment(p.lifted);
  StageCostSpec cost = sc.cost;
  if (sc.gamma) {
    p.eps = choose_epsilon(*sc.gamma, sc.box, sc.system.T);
    cost.epsilon = p.eps->epsilon;
  }
  const AugmentedSystem* aug = p.augmented ? &p.augmented_system : nullptr;
  p.model = make_model(p.lifted, cost, sc.box, aug);
  cost.epsilon = 0.0;
  p.plain = make_model(p.lifted, cost, sc.box, aug);
  return p;
}

inline Vector initial_state(const Scenario& sc, const PredictionModel& M) {
  const Index nT = M.plant_dim;
  const Index n = M.n;
  Vector xt(nT);
  if (sc.x0_keyword == "min") {
    xt = M.x_lb.head(nT);
  } else if (sc.x0_keyword == "max") {
    xt = M.x_ub.head(nT);
  } else if (sc.x0_keyword == "zero") {
    xt.setZero();
  } else if (sc.x0.size() == n) {
    xt = sc.x0.replicate(M.T, 1);
  } else if (sc.x0.size() == nT) {
    xt = sc.x0;
  } else if (sc.x0.size() == M.state_dim()) {
    return sc.x0;
  } else {
    throw ConfigError("x0 must have " + std::to_string(n) + ", " + std::to_string(nT) + " or " +
                      std::to_string(M.state_dim()) + " entries");
  }
  if (!M.augmented) return xt;
  Vector v = sc.v0.size() ? sc.v0 : Vector::Zero(M.m);
  if (v.size() != M.m) throw ConfigError("v0 must have " + std::to_string(M.m) + " entries");
  Vector x(M.state_dim());
  x << xt, v;
  return x;
}

/// Economic cost per period for each closed-loop step (one lifted step is
/// one period).
inline std::vector<double> period_costs(const ClosedLoopTrace& tr, bool regularized = false) {
  std::vector<double> out;
  for (const auto& s : tr.steps) out.push_back(regularized ? s.stage_modified : s.stage_economic);
  return out;
}

struct RichmondBenchmarkOptions {
  int K = 3;
  int periods = 6;
  double gamma = 0.1;
  Vector v0;  // previous pump flows at start; zero when empty
  wdn::RichmondOverrides overrides;
  SolverSettings solver;
  bool cost_gap_steps = true;  // solve the paired problems along the plain run
};

struct RichmondBenchmark {
  wdn::RichmondBundle bundle;
  EpsilonChoice eps;
  PredictionModel plain, modified;
  SteadyStateResult ss_plain, ss_modified;
  Vector x0;
  ClosedLoopTrace trace_plain, trace_modified;
  LyapunovAudit audit_plain, audit_modified;
  AveragePerformance average_plain;
  CostGapLedger ledger;
  double box_diameter = 0.0;  // lifted state box
  double final_dist_plain = 0.0;
  double final_dist_modified = 0.0;  // to the regularized steady state
};

/// Plain run with the steady-state-set terminal, regularized run with the
/// fixed-point terminal, their audits and the cost-gap ledger.
inline RichmondBenchmark run_richmond_benchmark(const RichmondBenchmarkOptions& o = {}) {
  RichmondBenchmark b;
  b.bundle = wdn::build_richmond(o.overrides);
  b.eps = choose_epsilon(o.gamma, b.bundle.box, wdn::kHours);
  b.plain = b.bundle.model(0.0);
  b.modified = b.bundle.model(b.eps.epsilon);
  b.ss_plain = solve_steady_state(b.plain, o.solver);
  b.ss_modified = solve_steady_state(b.modified, o.solver);
  b.x0 = b.bundle.initial_state_at_minimum(o.v0.size() ? o.v0 : Vector::Zero(wdn::kPumps));
  b.box_diameter = b.bundle.box.diameter_lifted(wdn::kHours);

  EmpcConfig plain_cfg;
  plain_cfg.K = o.K;
  plain_cfg.solver = o.solver;
  b.trace_plain = run_closed_loop(b.plain, b.ss_plain, plain_cfg, b.x0, o.periods);
  b.audit_plain = lyapunov_audit(b.trace_plain, b.plain, b.ss_plain);
  b.average_plain = average_performance(b.trace_plain, b.ss_plain);
  b.final_dist_plain = steady_state_set(b.ss_plain, b.plain).distance(b.trace_plain.final_state);

  EmpcConfig mod_cfg = plain_cfg;
  mod_cfg.variant = CostVariant::Modified;
  mod_cfg.terminal = TerminalMode::FixedPoint;
  mod_cfg.x_target = b.ss_modified.x_s;
  b.trace_modified = run_closed_loop(b.modified, b.ss_modified, mod_cfg, b.x0, o.periods);
  b.audit_modified = lyapunov_audit(b.trace_modified, b.modified, b.ss_modified);
  b.final_dist_modified = (b.trace_modified.final_state - b.ss_modified.x_s).norm();

  std::vector<OpenLoopPair> pairs;
  if (o.cost_gap_steps) {
    // Both problems on the feasible set of the plain EMPC problem.
    EmpcConfig reg_cfg = plain_cfg;
    reg_cfg.variant = CostVariant::Modified;
    for (const auto& st : b.trace_plain.steps) {
      OpenLoopPair p;
      p.economic = st.open_loop.cost;
      p.regularized = optimal_open_loop_cost(b.modified, b.ss_plain, reg_cfg, st.state);
      pairs.push_back(p);
    }
  }
  b.ledger = cost_gap_ledger(b.ss_plain, b.ss_modified, b.eps, o.gamma, o.K, pairs);
  return b;
}

}  // namespace empc
