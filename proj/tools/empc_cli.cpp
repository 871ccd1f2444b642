// empc command line: solve-ss, simulate, certify, bench-richmond.
//
// Exit codes: 0 ok, 1 config error, 2 steady state infeasible,
// 3 closed loop infeasible, 4 certification failure.

#include "empc/empc.hpp"
#include "empc/io.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace empc;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kConfig = 1, kSteadyState = 2, kClosedLoop = 3, kCertification = 4 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool corrupt_mu = false;
  bool record_timing = false;
};

bool wants(const Scenario& sc, const std::string& format) {
  return std::find(sc.formats.begin(), sc.formats.end(), format) != sc.formats.end();
}

Scenario load(const Options& o) {
  Scenario sc = io::load_scenario(o.config);
  if (o.seed) sc.certification.seed = *o.seed;
  if (!o.out.empty()) sc.out_dir = o.out;
  return sc;
}

EmpcConfig controller_config(const Scenario& sc, const SteadyStateResult& ss) {
  EmpcConfig cfg = sc.empc;
  if (cfg.terminal == TerminalMode::FixedPoint) cfg.x_target = sc.x_target.value_or(ss.x_s);
  return cfg;
}

int cmd_solve_ss(const Options& o) {
  const Scenario sc = load(o);
  const Prepared p = prepare(sc);
  const SteadyStateResult ss = solve_steady_state(p.model, sc.empc.solver);
  const ShiftCheckReport shift =
      periodic_shift_check(sc.system, [&] {
        StageCostSpec c = sc.cost;
        c.epsilon = p.model.epsilon;
        return c;
      }(), sc.box, p.augmented, sc.empc.solver);
  const fs::path out = sc.out_dir;
  io::write_text(out / "ss_report.txt", io::steady_state_report(sc, ss, &shift));
  io::write_json(out / "ss_result.json", io::to_json(ss));
  std::cout << "ell_s " << io::fmt(ss.ell_s) << "  nullspace_dim " << ss.nullspace_dim()
            << "  max_shift_cost_deviation " << io::fmt(shift.max_cost_deviation) << "\n";
  return kOk;
}

struct SimOutcome {
  Scenario sc;
  Prepared p;
  SteadyStateResult ss;
  ClosedLoopTrace trace;
  EmpcConfig cfg;
  bool aborted = false;
};

SimOutcome simulate(const Options& o) {
  SimOutcome r{load(o), {}, {}, {}, {}, false};
  r.p = prepare(r.sc);
  r.ss = solve_steady_state(r.p.model, r.sc.empc.solver);
  r.cfg = controller_config(r.sc, r.ss);
  const Vector x0 = initial_state(r.sc, r.p.model);
  try {
    r.trace = run_closed_loop(r.p.model, r.ss, r.cfg, x0, r.sc.n_steps);
  } catch (const ClosedLoopAborted& e) {
    r.trace = e.trace;
    r.aborted = true;
  }
  const fs::path out = r.sc.out_dir;
  const double dist = r.cfg.terminal == TerminalMode::FixedPoint
                          ? (r.trace.final_state - r.cfg.x_target).norm()
                          : steady_state_set(r.ss, r.p.model).distance(r.trace.final_state);
  io::write_text(out / "trace.csv",
                 io::trace_csv(r.trace, r.p.model, r.sc.step_hours, o.record_timing));
  io::write_text(out / "summary.txt", io::closed_loop_summary(r.sc, r.trace, r.ss, dist));
  if (wants(r.sc, "gnuplot")) io::write_text(out / "trace.gp", io::gnuplot_script("trace.csv", r.sc.name));
  std::cout << "steps " << r.trace.steps.size() << "  final_distance " << io::fmt(dist);
  if (!r.trace.steps.empty())
    std::cout << "  final_stage_cost " << io::fmt(r.trace.steps.back().stage_economic);
  std::cout << "\n";
  if (r.aborted) std::cerr << "closed loop aborted: " << r.trace.failure << "\n";
  return r;
}

int cmd_simulate(const Options& o) { return simulate(o).aborted ? kClosedLoop : kOk; }

int cmd_certify(const Options& o) {
  SimOutcome r = simulate(o);
  if (r.aborted) return kClosedLoop;
  SteadyStateResult ss = r.ss;
  if (o.corrupt_mu) ss.mu.array() += 1.0;
  const StorageFunction storage = StorageFunction::from(ss);
  const DissipativityReport rep = check_dissipativity(storage, r.p.model, ss, r.sc.certification);
  const LyapunovAudit audit = lyapunov_audit(r.trace, r.p.model, ss);
  const fs::path out = r.sc.out_dir;
  io::write_json(out / "dissipativity.json", io::to_json(rep));
  io::write_json(out / "lyapunov_audit.json", io::to_json(audit));
  std::cout << "dissipativity " << rep.verdict() << "  min_rotated " << io::fmt(rep.min_rotated)
            << "  min_refined " << io::fmt(rep.min_refined) << "  max_abs_on_set " << io::fmt(rep.max_abs_on_set) << "\n";
  std::cout << "lyapunov descent violations " << audit.violations << "  worst "
            << io::fmt(audit.worst_descent) << "\n";
  return rep.certified && audit.ok() ? kOk : kCertification;
}

int cmd_bench(const Options& o) {
  RichmondBenchmarkOptions bo;
  std::string name = "richmond";
  double step_hours = 1.0;
  fs::path out = "out";
  if (!o.config.empty()) {
    const Scenario sc = load(o);
    if (!sc.richmond) throw ConfigError("bench-richmond needs a richmond scenario");
    bo.overrides = *sc.richmond;
    bo.K = sc.empc.K;
    bo.periods = sc.n_steps;
    if (sc.gamma) bo.gamma = *sc.gamma;
    if (sc.v0.size()) bo.v0 = sc.v0;
    bo.solver = sc.empc.solver;
    name = sc.name;
    step_hours = sc.step_hours;
    out = sc.out_dir;
  }
  if (!o.out.empty()) out = o.out;
  const RichmondBenchmark b = run_richmond_benchmark(bo);

  io::write_text(out / "trace_plain.csv", io::trace_csv(b.trace_plain, b.plain, step_hours, o.record_timing));
  io::write_text(out / "trace_modified.csv",
                 io::trace_csv(b.trace_modified, b.modified, step_hours, o.record_timing));
  Scenario tag;
  tag.name = name;
  io::write_text(out / "summary_plain.txt",
                 io::closed_loop_summary(tag, b.trace_plain, b.ss_plain, b.final_dist_plain));
  io::write_text(out / "summary_modified.txt",
                 io::closed_loop_summary(tag, b.trace_modified, b.ss_modified, b.final_dist_modified));
  io::write_json(out / "ledger.json", io::to_json(b.ledger));
  io::write_json(out / "lyapunov_audit_plain.json", io::to_json(b.audit_plain));
  io::write_json(out / "lyapunov_audit_modified.json", io::to_json(b.audit_modified));
  io::write_json(out / "ss_plain.json", io::to_json(b.ss_plain));
  io::write_json(out / "ss_modified.json", io::to_json(b.ss_modified));
  io::write_text(out / "trace_plain.gp", io::gnuplot_script("trace_plain.csv", name + " economic"));
  io::write_text(out / "trace_modified.gp", io::gnuplot_script("trace_modified.csv", name + " regularized"));

  std::cout << "ell_s " << io::fmt(b.ss_plain.ell_s) << "  regularized steady economic cost "
            << io::fmt(b.ss_modified.ell_s) << "  gap " << io::fmt(b.ledger.steady_gap)
            << " (gamma " << b.ledger.gamma << ")\n";
  std::cout << "epsilon " << io::fmt(b.eps.epsilon) << "  R " << io::fmt(b.eps.R) << "\n";
  std::cout << "final distance: economic " << io::fmt(b.final_dist_plain) << "  regularized "
            << io::fmt(b.final_dist_modified) << "\n";
  std::cout << "descent violations: economic " << b.audit_plain.violations << "  regularized "
            << b.audit_modified.violations << "\n";
  return b.ledger.ok() && b.audit_plain.ok() && b.audit_modified.ok() ? kOk : kCertification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Economic MPC with steady-state-set terminal constraints"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "scenario file (JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "certification sampling seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_flag("--record-timing", o.record_timing, "write solver wall time into traces");
  };
  auto* solve_ss = app.add_subcommand("solve-ss", "solve the optimal steady-state problem");
  add_common(solve_ss, true);
  auto* sim = app.add_subcommand("simulate", "run the closed loop");
  add_common(sim, true);
  auto* cert = app.add_subcommand("certify", "simulate, then check dissipativity and descent");
  add_common(cert, true);
  cert->add_flag("--corrupt-mu", o.corrupt_mu, "add 1 to every multiplier (test hook)");
  auto* bench = app.add_subcommand("bench-richmond", "economic and regularized water-network runs");
  add_common(bench, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*solve_ss) return cmd_solve_ss(o);
    if (*sim) return cmd_simulate(o);
    if (*cert) return cmd_certify(o);
    if (*bench) return cmd_bench(o);
  } catch (const SteadyStateInfeasible& e) {
    std::cerr << e.what() << "\n";
    return kSteadyState;
  } catch (const ClosedLoopAborted& e) {
    std::cerr << e.what() << "\n";
    return kClosedLoop;
  } catch (const EmpcInfeasible& e) {
    std::cerr << e.what() << "\n";
    return kClosedLoop;
  } catch (const EmpcError& e) {
    // Controller configuration problems (bad target, horizon).
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
