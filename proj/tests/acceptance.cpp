// Acceptance harness: one PASS/FAIL line per criterion. Tolerances are fixed
// here. Exit status is nonzero when any criterion fails.

#include "empc/empc.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace empc;
using Clock = std::chrono::steady_clock;

struct Line {
  std::string id;
  bool pass;
  std::string detail;
  double seconds;
};

std::vector<Line> g_lines;

void report(const std::string& id, bool pass, const std::string& detail, double seconds) {
  g_lines.push_back({id, pass, detail, seconds});
  std::printf("criterion %-3s %s  %s  [%.3f s]\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str(),
              seconds);
  std::fflush(stdout);
}

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v == 0.0 ? 0.0 : v);
  return buf;
}

// ------------------------------------------------------------------ 1

void criterion_1() {
  const auto b = wdn::build_richmond();
  const auto t0 = Clock::now();
  const EpsilonChoice c = choose_epsilon(0.1, b.box, wdn::kHours);
  const double s = since(t0);
  const bool ok = std::abs(c.R - 97.55) <= 0.01 && std::abs(c.epsilon - 0.00102) <= 0.00001 &&
                  s < 1e-3;
  report("1", ok, "R = " + num(c.R) + " (97.55 +- 0.01), eps = " + num(c.epsilon) +
                      " (0.00102 +- 1e-5), runtime < 1 ms", s);
}

// ------------------------------------------------------------------ 2

void criterion_2() {
  const auto t0 = Clock::now();
  auto build = [](double eps) {
    LinearPeriodicSystem s;
    s.A = Matrix::Ones(1, 1);
    s.B_u = Matrix::Ones(1, 1);
    s.B_d = Matrix::Zero(1, 1);
    s.T = 1;
    s.d_seq = {Vector::Zero(1)};
    StageCostSpec c;
    c.alpha_seq = {Vector::Zero(1)};
    c.input_weight = Matrix::Ones(1, 1);
    c.W = Matrix::Zero(1, 1);
    c.epsilon = eps;
    BoxConstraints box{Vector::Constant(1, -1), Vector::Constant(1, 1), Vector::Constant(1, -1),
                       Vector::Constant(1, 1)};
    return make_model(lift(s), c, box);
  };
  const auto M = build(0.0);
  const auto ss = solve_steady_state(M);
  bool ok = std::abs(ss.u_s(0)) <= 1e-9 && std::abs(ss.ell_s) <= 1e-9;
  double worst_cost = 0.0;
  EmpcConfig cfg;
  for (double x0 = -1.0; x0 <= 1.0 + 1e-12; x0 += 0.25) {
    const auto tr = run_closed_loop(M, ss, cfg, Vector::Constant(1, x0), 10);
    for (const auto& st : tr.steps) worst_cost = std::max(worst_cost, std::abs(st.stage_economic));
  }
  ok = ok && worst_cost <= 1e-9;

  const auto Me = build(0.01);
  const auto sse = solve_steady_state(Me);
  EmpcConfig mc;
  mc.variant = CostVariant::Modified;
  mc.terminal = TerminalMode::FixedPoint;
  mc.x_target = sse.x_s;
  const auto tr = run_closed_loop(Me, sse, mc, Vector::Constant(1, 0.7), 50);
  const double final_x = std::abs(tr.final_state(0));
  ok = ok && final_x <= 1e-4;
  const double s = since(t0);
  ok = ok && s < 1.0;
  report("2", ok, "u_s = " + num(ss.u_s(0)) + ", ell_s = " + num(ss.ell_s) +
                      " (|.| <= 1e-9); max stage cost from x0 in [-1,1] = " + num(worst_cost) +
                      "; eps = 0.01: |x_50| = " + num(final_x) + " (<= 1e-4); runtime < 1 s",
         s);
}

// ------------------------------------------------------------------ 3, 4

void criteria_3_and_4() {
  auto t0 = Clock::now();
  RichmondBenchmarkOptions o;
  o.K = 3;
  o.periods = 6;
  o.gamma = 0.1;
  const RichmondBenchmark b = run_richmond_benchmark(o);
  const double s3 = since(t0);

  int optimal = 0;
  for (const auto& st : b.trace_plain.steps)
    if (st.open_loop.status == QpStatus::Optimal) ++optimal;
  int optimal_mod = 0;
  for (const auto& st : b.trace_modified.steps)
    if (st.open_loop.status == QpStatus::Optimal) ++optimal_mod;
  report("3a", optimal == 6 && optimal_mod == 6 && b.trace_plain.completed,
         std::to_string(optimal) + "/6 economic and " + std::to_string(optimal_mod) +
             "/6 regularized period solves Optimal",
         s3);

  double worst_step_gap = 0.0;
  for (double g : b.ledger.step_gaps) worst_step_gap = std::max(worst_step_gap, g);
  report("3b", b.ledger.ok(),
         "steady gap = " + num(b.ledger.steady_gap) + " (<= 0.1); worst open-loop gap = " +
             num(worst_step_gap) + " (<= K eps R + 1e-6 = " + num(b.ledger.step_bound + 1e-6) + ")",
         0.0);

  report("3c", b.audit_plain.violations == 0,
         "descent violations = " + std::to_string(b.audit_plain.violations) +
             " at tol 1e-5 (worst V+ - V + L = " + num(b.audit_plain.worst_descent) + ")",
         0.0);

  const double final_cost = b.trace_plain.steps.back().stage_economic;
  const double rel = std::abs(final_cost - b.ss_plain.ell_s) / std::abs(b.ss_plain.ell_s);
  const double dist_tol = 1e-3 * b.box_diameter;
  report("3d", rel <= 1e-3 && b.final_dist_plain <= dist_tol,
         "final-period cost " + num(final_cost) + " vs ell_s " + num(b.ss_plain.ell_s) +
             " (rel " + num(rel) + " <= 1e-3); final distance " + num(b.final_dist_plain) +
             " (<= 1e-3 * diameter = " + num(dist_tol) + ")",
         0.0);

  report("3e", b.final_dist_modified <= 1e-4,
         "regularized run: |x_hat - x_hat_eps^s| after 144 h = " + num(b.final_dist_modified) +
             " (<= 1e-4)",
         0.0);

  report("3", s3 <= 60.0, "Richmond property suite runtime " + num(s3) + " s (<= 60 s)", s3);

  // Economic versus rotated objective on the same instance.
  t0 = Clock::now();
  EmpcConfig rc;
  rc.K = o.K;
  rc.variant = CostVariant::Rotated;
  const auto rot = run_closed_loop(b.plain, b.ss_plain, rc, b.x0, o.periods);
  double worst_input = 0.0, worst_obj = 0.0;
  for (std::size_t t = 0; t < rot.steps.size(); ++t) {
    const auto& e = b.trace_plain.steps[t];
    const auto& r = rot.steps[t];
    worst_input = std::max(worst_input, (e.input - r.input).cwiseAbs().maxCoeff());
    const double expected = b.ss_plain.mu.dot(r.state) - o.K * b.ss_plain.ell_s;
    worst_obj = std::max(worst_obj, std::abs((r.open_loop.cost - e.open_loop.cost) - expected));
  }
  report("4", worst_input <= 1e-6 && worst_obj <= 1e-6 && rot.steps.size() == 6,
         "max input difference " + num(worst_input) + " (<= 1e-6); max objective offset error " +
             num(worst_obj) + " (<= 1e-6)",
         since(t0));
}

// ------------------------------------------------------------------ 5

void criterion_5() {
  const auto t0 = Clock::now();
  const auto b = wdn::build_richmond();
  const auto rep = periodic_shift_check(b.system, b.cost, b.box, true);
  report("5", rep.costs.size() == 24 && rep.max_cost_deviation <= 1e-6 &&
                  rep.max_shift_deviation <= 1e-6,
         "24 rotations: cost spread " + num(rep.max_cost_deviation) +
             " (<= 1e-6), max deviation from cyclic shift " + num(rep.max_shift_deviation) +
             " (<= 1e-6)",
         since(t0));
}

// ------------------------------------------------------------------ 6

void criterion_6() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dim(1, 4), period(1, 6);
  auto rnd = [&](Index r, Index c, double scale) {
    Matrix M(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) M(i, j) = scale * g(rng);
    return M;
  };
  double worst_lift = 0.0, worst_du = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    LinearPeriodicSystem s;
    const Index n = dim(rng), m = dim(rng), p = dim(rng);
    s.A = rnd(n, n, 0.5);
    s.B_u = rnd(n, m, 1.0);
    s.B_d = rnd(n, p, 1.0);
    s.T = period(rng);
    for (int t = 0; t < s.T; ++t) s.d_seq.push_back(rnd(p, 1, 1.0));
    const auto L = lift(s);
    const auto A = augment(L);
    const int periods = 3;
    std::vector<Vector> inputs;
    for (int k = 0; k < periods * s.T; ++k) inputs.push_back(rnd(m, 1, 1.0));
    const Vector x0 = rnd(n, 1, 1.0);
    const auto tr = simulate(s, x0, inputs);
    Vector xt = Vector::Zero(L.state_dim());
    xt.tail(n) = x0;
    Vector prev = rnd(m, 1, 1.0);
    for (int k = 0; k < periods; ++k) {
      const Vector up = stack(inputs, k * s.T, s.T);
      const Vector xh = A.stack(xt, prev);
      const Vector du = A.delta_u(xh, up);
      const auto raw = input_differences(
          std::vector<Vector>(inputs.begin() + k * s.T, inputs.begin() + (k + 1) * s.T), prev);
      worst_du = std::max(worst_du, (du - stack(raw, 0, s.T)).cwiseAbs().maxCoeff());
      xt = L.step(xt, up);
      const Vector ref = stack(tr.states, k * s.T + 1, s.T);
      worst_lift = std::max(worst_lift, (xt - ref).cwiseAbs().maxCoeff());
      prev = inputs[(k + 1) * s.T - 1];
    }
  }
  report("6", worst_lift <= 1e-10 && worst_du <= 1e-12,
         "100 random systems: lifted vs stepwise " + num(worst_lift) +
             " (<= 1e-10); input change from augmented state " + num(worst_du) + " (<= 1e-12)",
         since(t0));
}

// ------------------------------------------------------------------ 7

void criterion_7() {
  const auto t0 = Clock::now();
  DissipativitySettings cfg;
  cfg.n_samples = 10000;

  const auto b = wdn::build_richmond();
  const auto M = b.model(0.0);
  const auto ss = solve_steady_state(M);
  const auto rich = check_dissipativity(StorageFunction::from(ss), M, ss, cfg);

  LinearPeriodicSystem s;
  s.A = Matrix::Ones(1, 1);
  s.B_u = Matrix::Ones(1, 1);
  s.B_d = Matrix::Zero(1, 1);
  s.d_seq = {Vector::Zero(1)};
  StageCostSpec c;
  c.alpha_seq = {Vector::Zero(1)};
  c.input_weight = Matrix::Ones(1, 1);
  c.W = Matrix::Zero(1, 1);
  BoxConstraints box{Vector::Constant(1, -1), Vector::Constant(1, 1), Vector::Constant(1, -1),
                     Vector::Constant(1, 1)};
  const auto Mi = make_model(lift(s), c, box);
  const auto ssi = solve_steady_state(Mi);
  const auto integ = check_dissipativity(StorageFunction::from(ssi), Mi, ssi, cfg);

  StorageFunction bad = StorageFunction::from(ss);
  bad.mu.array() += 1.0;
  const auto corrupt = check_dissipativity(bad, M, ss, cfg);
  const double sec = since(t0);

  auto lowest = [](const DissipativityReport& r) { return std::min(r.min_rotated, r.min_refined); };
  const bool ok = rich.certified && lowest(rich) >= -1e-6 && rich.max_abs_on_set <= 1e-6 &&
                  integ.certified && lowest(integ) >= -1e-6 && integ.max_abs_on_set <= 1e-6 &&
                  !corrupt.certified && corrupt.witness.has_value() && sec <= 10.0;
  report("7", ok,
         "Richmond: min " + num(lowest(rich)) + ", on-set " + num(rich.max_abs_on_set) +
             "; integrator: min " + num(lowest(integ)) + ", on-set " +
             num(integ.max_abs_on_set) + " (>= -1e-6, <= 1e-6); corrupted multiplier: " +
             corrupt.verdict() + (corrupt.witness ? " witness " + num(corrupt.witness->value) : "") +
             "; runtime <= 10 s",
         sec);
}

// ------------------------------------------------------------------ 8

// Coarse-to-fine grid minimum of a convex QP with at most 3 variables and at
// most one equality row. The equality eliminates its largest-coefficient
// variable; points violating that variable's bounds are skipped.
double grid_minimum(const QpProblem& p) {
  const Index n = p.num_variables();
  const bool eq = p.A_eq.rows() == 1;
  Index k = -1;
  std::vector<Index> free;
  if (eq) p.A_eq.row(0).cwiseAbs().maxCoeff(&k);
  for (Index i = 0; i < n; ++i)
    if (i != k) free.push_back(i);
  const std::size_t nf = free.size();

  auto value = [&](const std::vector<double>& z, double& out) {
    Vector x(n);
    for (std::size_t j = 0; j < nf; ++j) x(free[j]) = z[j];
    if (eq) {
      double r = p.b_eq(0);
      for (std::size_t j = 0; j < nf; ++j) r -= p.A_eq(0, free[j]) * z[j];
      x(k) = r / p.A_eq(0, k);
      if (x(k) < p.lb(k) - 1e-12 || x(k) > p.ub(k) + 1e-12) return false;
    }
    out = p.objective(x);
    return true;
  };

  std::vector<double> lo(nf), hi(nf), best(nf);
  double step = 0.0;
  for (std::size_t j = 0; j < nf; ++j) {
    lo[j] = p.lb(free[j]);
    hi[j] = p.ub(free[j]);
    step = std::max(step, (hi[j] - lo[j]) / 60.0);
  }
  double best_val = kInf;
  while (true) {
    std::vector<std::vector<double>> axes(nf);
    for (std::size_t j = 0; j < nf; ++j) {
      for (double v = lo[j]; v < hi[j]; v += step) axes[j].push_back(v);
      axes[j].push_back(hi[j]);
    }
    std::vector<double> z(nf);
    std::function<void(std::size_t)> walk = [&](std::size_t d) {
      if (d == nf) {
        double v;
        if (value(z, v) && v < best_val) best_val = v, best = z;
        return;
      }
      for (double a : axes[d]) {
        z[d] = a;
        walk(d + 1);
      }
    };
    walk(0);
    if (step < 1e-5) break;
    for (std::size_t j = 0; j < nf; ++j) {
      lo[j] = std::max(p.lb(free[j]), best[j] - 3 * step);
      hi[j] = std::min(p.ub(free[j]), best[j] + 3 * step);
    }
    step /= 10.0;
  }
  return best_val;
}

void criterion_8() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int optimal = 0;
  double worst_obj = 0.0, worst_kkt = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = dim(rng);
    QpProblem p = QpProblem::unconstrained(n);
    Matrix F(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) F(i, j) = g(rng);
    // Every fourth instance is only positive semidefinite.
    if (trial % 4 == 3 && n > 1) F.row(0).setZero();
    p.H = F.transpose() * F + (trial % 4 == 3 ? 0.0 : 0.1) * Matrix::Identity(n, n);
    for (Index i = 0; i < n; ++i) {
      p.g(i) = 2.0 * g(rng);
      p.lb(i) = -1.0 + 0.5 * U(rng);
      p.ub(i) = 1.0 + 0.5 * U(rng);
    }
    if (n >= 2 && trial % 3 == 0) {
      p.A_eq = Matrix(1, n);
      for (Index j = 0; j < n; ++j) p.A_eq(0, j) = g(rng);
      Vector x0(n);
      for (Index j = 0; j < n; ++j) x0(j) = 0.5 * U(rng);
      p.b_eq = p.A_eq * x0;
    }
    const QpSolution s = solve_qp(p);
    if (s.status != QpStatus::Optimal) continue;
    ++optimal;
    const auto r = kkt_residuals(p, s);
    worst_kkt = std::max({worst_kkt, r.equality, r.bound_violation, r.stationarity,
                          r.complementarity, r.sign_violation});
    worst_obj = std::max(worst_obj, std::abs(grid_minimum(p) - s.objective));
  }
  report("8", optimal == 200 && worst_obj <= 1e-4 && worst_kkt <= 1e-8,
         std::to_string(optimal) + "/200 Optimal; max |grid - solver| objective " + num(worst_obj) +
             " (<= 1e-4); max KKT residual " + num(worst_kkt) + " (<= 1e-8)",
         since(t0));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion_1();
  criterion_2();
  criteria_3_and_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  int failed = 0;
  for (const auto& l : g_lines) failed += l.pass ? 0 : 1;
  std::printf("%d of %zu checks failed, total %.1f s\n", failed, g_lines.size(), since(t0));
  return failed == 0 ? 0 : 1;
}
