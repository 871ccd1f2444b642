#include "fixtures.hpp"

#include <gtest/gtest.h>

namespace empc {
namespace {

using testing::integrator;
using testing::ScalarCase;
using testing::vec1;

EmpcConfig config(int K, TerminalMode terminal = TerminalMode::SteadyStateSet,
                  CostVariant variant = CostVariant::Economic) {
  EmpcConfig c;
  c.K = K;
  c.terminal = terminal;
  c.variant = variant;
  return c;
}

TEST(EmpcQp, IntegratorSetTerminalIsBoxOnly) {
  const auto M = integrator().model();
  const auto ss = solve_steady_state(M);
  const auto e = build_empc_qp(M, ss, config(2), vec1(0.3));
  EXPECT_EQ(e.qp.A_eq.rows(), 2);  // dynamics only
  EXPECT_TRUE(e.fixed.empty());
  EXPECT_DOUBLE_EQ(e.qp.lb(e.x_index(2)), -1.0);
  EXPECT_DOUBLE_EQ(e.qp.ub(e.x_index(2)), 1.0);
}

TEST(EmpcQp, IntegratorFixedPointPinsTerminal) {
  const auto M = integrator().model();
  const auto ss = solve_steady_state(M);
  auto cfg = config(2, TerminalMode::FixedPoint);
  cfg.x_target = vec1(0.0);
  const auto e = build_empc_qp(M, ss, cfg, vec1(0.3));
  ASSERT_EQ(e.fixed.size(), 1u);
  EXPECT_EQ(e.fixed.begin()->first, e.x_index(2));
  EXPECT_EQ(e.fixed.begin()->second, 0.0);
}

TEST(EmpcQp, ConfigErrors) {
  const auto M = integrator().model();
  const auto ss = solve_steady_state(M);
  EXPECT_THROW(build_empc_qp(M, ss, config(1), vec1(0.0)), EmpcError);
  auto single = config(1);
  single.allow_single_period = true;
  EXPECT_NO_THROW(build_empc_qp(M, ss, single, vec1(0.0)));
  EXPECT_THROW(build_empc_qp(M, ss, config(2), Vector::Zero(2)), DimensionError);
  auto bad_target = config(2, TerminalMode::FixedPoint);
  bad_target.x_target = vec1(2.0);
  EXPECT_THROW(build_empc_qp(M, ss, bad_target, vec1(0.0)), EmpcError);
  EXPECT_THROW(build_empc_qp(M, ss, config(2, TerminalMode::SteadyStateSet, CostVariant::Modified),
                             vec1(0.0)),
               EmpcError);
  SteadyStateResult wrong = ss;
  wrong.mu = Vector::Zero(3);
  EXPECT_THROW(build_empc_qp(M, wrong, config(2), vec1(0.0)), DimensionError);
}

TEST(SolveStep, SteadyStartNeedsNoEffort) {
  const auto M = integrator().model();
  const auto ss = solve_steady_state(M);
  const auto ol = solve_step(M, ss, config(3), vec1(1.0));
  EXPECT_NEAR(ol.cost, 0.0, 1e-9);
  for (const auto& u : ol.inputs) EXPECT_NEAR(u(0), 0.0, 1e-6);
}

TEST(SolveStep, InfeasibleInitialStateRaises) {
  // Stable scalar with a target that cannot be reached in one period from far away.
  ScalarCase c;
  c.a = 0.5;
  c.r = 1.0;
  c.x_lo = -10.0;
  c.x_hi = 10.0;
  c.u_lo = -0.1;
  c.u_hi = 0.1;
  const auto M = c.model();
  const auto ss = solve_steady_state(M);
  auto cfg = config(2, TerminalMode::FixedPoint);
  cfg.x_target = ss.x_s;
  try {
    solve_step(M, ss, cfg, vec1(9.0));
    FAIL() << "expected EmpcInfeasible";
  } catch (const EmpcInfeasible& e) {
    EXPECT_NE(e.status, QpStatus::Optimal);
  }
  EXPECT_THROW(solve_step(M, ss, cfg, vec1(11.0)), EmpcError);
}

TEST(SolveStep, RotatedMatchesEconomicOnRandomInstances) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    const auto inst = testing::random_instance(rng, 2, 2, 1 + trial % 3);
    const auto M = make_model(lift(inst.sys), inst.cost, inst.box);
    const auto ss = solve_steady_state(M);
    const auto set = steady_state_set(ss, M);
    // A feasible starting point: the steady state perturbed inside the box.
    Vector x0 = ss.x_s + 0.2 * Vector::Ones(M.state_dim());
    x0 = x0.cwiseMax(M.x_lb).cwiseMin(M.x_ub);
    const auto eco = solve_step(M, ss, config(3), x0);
    const auto rot = solve_step(M, ss, config(3, TerminalMode::SteadyStateSet, CostVariant::Rotated), x0);
    for (int i = 0; i < 3; ++i)
      EXPECT_LE((eco.inputs[i] - rot.inputs[i]).cwiseAbs().maxCoeff(), 1e-6);
    const double expected = ss.mu.dot(x0) - 3 * ss.ell_s_modified;
    EXPECT_NEAR(rot.cost - eco.cost, expected, 1e-6 * (1.0 + std::abs(eco.cost)));
    EXPECT_TRUE(set.contains(rot.states.back(), 1e-6));
  }
}

TEST(ClosedLoop, IntegratorFromSteadyStateCostsNothing) {
  const auto M = integrator().model();
  const auto ss = solve_steady_state(M);
  const auto tr = run_closed_loop(M, ss, config(2), vec1(0.7), 15);
  ASSERT_TRUE(tr.completed);
  for (const auto& st : tr.steps) {
    EXPECT_NEAR(st.stage_economic, 0.0, 1e-12);
    EXPECT_NEAR(st.state(0), 0.7, 1e-9);
    EXPECT_NEAR(st.lyapunov - ss.mu.dot(st.state), 0.0, 1e-9);
  }
}

// Dynamic-programming oracle for the regularized integrator with the
// fixed-point terminal at 0 and K = 2: the first input is the grid minimizer
// of u^2 + eps x^2 + (1 + eps)(x + u)^2.
double dp_first_input(double x, double eps) {
  double best = 1e300, best_u = 0.0;
  for (double u = -1.0; u <= 1.0 + 1e-12; u += 1e-4) {
    const double x1 = x + u;
    if (std::abs(x1) > 1.0) continue;
    const double v = u * u + eps * x * x + (1.0 + eps) * x1 * x1;
    if (v < best) best = v, best_u = u;
  }
  return best_u;
}

TEST(ClosedLoop, RegularizedIntegratorMatchesDpAndConverges) {
  const double eps = 0.01;
  const auto M = integrator(eps).model();
  const auto ss = solve_steady_state(M);
  auto cfg = config(2, TerminalMode::FixedPoint, CostVariant::Modified);
  cfg.x_target = ss.x_s;
  const auto tr = run_closed_loop(M, ss, cfg, vec1(0.7), 50);
  double prev = 1.0;
  for (const auto& st : tr.steps) {
    const double x = st.state(0);
    EXPECT_LE(std::abs(x), prev + 1e-12);
    prev = std::abs(x);
    EXPECT_NEAR(st.input(0), dp_first_input(x, eps), 1e-4);
    EXPECT_NEAR(st.input(0), -(1.0 + eps) / (2.0 + eps) * x, 1e-7);
  }
  EXPECT_LE(std::abs(tr.final_state(0)), 1e-4);
  EXPECT_LE(tr.steps.back().stage_economic, 1e-8);
  // Lyapunov candidate decreases to zero.
  for (std::size_t t = 1; t < tr.steps.size(); ++t)
    EXPECT_LE(tr.steps[t].lyapunov, tr.steps[t - 1].lyapunov + 1e-9);
  EXPECT_LE(tr.steps.back().lyapunov, 1e-4);
}

TEST(ClosedLoop, CandidateBoundsOptimalCost) {
  std::mt19937_64 rng(29);
  const auto inst = testing::random_instance(rng, 2, 1, 2);
  const auto M = make_model(lift(inst.sys), inst.cost, inst.box);
  const auto ss = solve_steady_state(M);
  const Vector x0 = (ss.x_s + 0.5 * Vector::Ones(M.state_dim())).cwiseMin(M.x_ub);
  const auto tr = run_closed_loop(M, ss, config(3), x0, 8);
  for (const auto& st : tr.steps)
    if (!std::isnan(st.candidate_cost)) EXPECT_GE(st.candidate_cost, st.open_loop.cost - 1e-7);
}

TEST(ClosedLoop, AbortKeepsPartialTrace) {
  const auto M = integrator().model();
  const auto ss = solve_steady_state(M);
  // Plant pushes the state outside the feasible region at the second step.
  const PlantStep plant = [](const Vector& x, const Vector& u, int step) -> Vector {
    return step == 1 ? vec1(5.0) : Vector(x + u);
  };
  try {
    run_closed_loop(M, ss, config(2), vec1(0.2), 5, plant);
    FAIL() << "expected ClosedLoopAborted";
  } catch (const ClosedLoopAborted& e) {
    EXPECT_FALSE(e.trace.completed);
    EXPECT_EQ(e.trace.steps.size(), 2u);
    EXPECT_FALSE(e.trace.failure.empty());
  }
}

TEST(ClosedLoop, ShiftedWarmStartGivesSameTrajectoryAsCold) {
  std::mt19937_64 rng(31);
  const auto inst = testing::random_instance(rng, 2, 2, 2);
  const auto M = make_model(lift(inst.sys), inst.cost, inst.box);
  const auto ss = solve_steady_state(M);
  const Vector x0 = (ss.x_s - 0.3 * Vector::Ones(M.state_dim())).cwiseMax(M.x_lb);
  auto warm = config(2);
  auto cold = config(2);
  cold.warm_start = WarmStart::Cold;
  const auto a = run_closed_loop(M, ss, warm, x0, 5);
  const auto b = run_closed_loop(M, ss, cold, x0, 5);
  for (std::size_t t = 0; t < a.steps.size(); ++t)
    EXPECT_LE((a.steps[t].input - b.steps[t].input).cwiseAbs().maxCoeff(), 1e-6);
}

}  // namespace
}  // namespace empc
