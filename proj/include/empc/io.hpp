#pragma once

// Scenario files (JSON), trace CSV, result files and text reports.
//
// Numbers are written with 12 significant digits; re-reading a result file
// reproduces the in-memory values to about 1e-12 relative.

#include "empc/pipeline.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace empc::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);
  return buf;
}

inline double round12(double v) { return std::isfinite(v) ? std::strtod(fmt(v).c_str(), nullptr) : v; }

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(round12(v(i)));
  return a;
}

/// Columns of M as a list of vectors.
inline json columns_to_json(const Matrix& M) {
  json a = json::array();
  for (Index j = 0; j < M.cols(); ++j) a.push_back(to_json(M.col(j)));
  return a;
}

// ---------------------------------------------------------------- reading

namespace detail {

inline Matrix read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("non-numeric entry '" + cell + "' in " + path.string());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  const Index r = static_cast<Index>(rows.size());
  const Index c = r ? static_cast<Index>(rows.front().size()) : 0;
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) M(i, j) = rows[i][j];
  return M;
}

inline double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + " must be a number");
  return j.get<double>();
}

inline Matrix matrix(const json& j, const fs::path& base, const std::string& what) {
  if (j.is_object()) {
    if (!j.contains("file")) throw ConfigError(what + ": object form needs a \"file\" key");
    return read_csv_matrix(base / j.at("file").get<std::string>());
  }
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw ConfigError(what + " must be a matrix (array of rows)");
  if (j.empty()) return Matrix(0, 0);
  if (!j.front().is_array()) throw ConfigError(what + " must be an array of rows");
  const Index r = static_cast<Index>(j.size());
  const Index c = static_cast<Index>(j.front().size());
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i) {
    if (!j[i].is_array() || static_cast<Index>(j[i].size()) != c)
      throw ConfigError(what + ": row " + std::to_string(i) + " has the wrong length");
    for (Index k = 0; k < c; ++k) M(i, k) = number(j[i][k], what);
  }
  return M;
}

inline Vector vector(const json& j, const fs::path& base, const std::string& what) {
  if (j.is_array() && (j.empty() || !j.front().is_array())) {
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = number(j[i], what);
    return v;
  }
  const Matrix M = matrix(j, base, what);
  if (M.cols() == 1) return M.col(0);
  if (M.rows() == 1) return M.row(0).transpose();
  throw ConfigError(what + " must be a vector");
}

inline std::vector<double> list(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(number(e, what));
  return out;
}

inline std::vector<Vector> sequence(const json& j, const fs::path& base, const std::string& what) {
  const Matrix M = matrix(j, base, what);
  std::vector<Vector> out;
  for (Index i = 0; i < M.rows(); ++i) out.push_back(M.row(i).transpose());
  return out;
}

inline void known_keys(const json& block, const std::string& name,
                       std::initializer_list<const char*> keys) {
  if (!block.is_object()) throw ConfigError("\"" + name + "\" must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : block.items())
    if (!ok.count(k)) throw ConfigError("unknown key \"" + name + "." + k + "\"");
}

template <class T>
T get_or(const json& block, const char* key, T fallback) {
  return block.contains(key) ? block.at(key).get<T>() : fallback;
}

}  // namespace detail

inline Scenario parse_scenario(const json& root, const fs::path& base = ".") {
  using namespace detail;
  try {
    known_keys(root, "config",
               {"name", "system", "cost", "constraints", "empc", "certification", "output",
                "solver"});
    Scenario sc;
    sc.name = get_or<std::string>(root, "name", "scenario");
    if (!root.contains("system")) throw ConfigError("missing \"system\" block");
    const json& sys = root.at("system");
    const std::string type = get_or<std::string>(sys, "type", "linear");
    const json cost = root.value("cost", json::object());

    if (type == "richmond") {
      known_keys(sys, "system",
                 {"type", "tank_areas_m2", "step_hours", "demand_base_m3_per_h",
                  "demand_multiplier", "tariff_per_m3", "profile"});
      known_keys(cost, "cost", {"input_change_weight", "epsilon", "gamma"});
      wdn::RichmondOverrides o;
      if (sys.contains("tank_areas_m2")) o.tank_areas_m2 = list(sys.at("tank_areas_m2"), "tank_areas_m2");
      if (sys.contains("step_hours")) o.dt_hours = number(sys.at("step_hours"), "step_hours");
      if (sys.contains("demand_base_m3_per_h"))
        o.demand_base_m3_per_h = list(sys.at("demand_base_m3_per_h"), "demand_base_m3_per_h");
      if (sys.contains("demand_multiplier"))
        o.demand_multiplier = list(sys.at("demand_multiplier"), "demand_multiplier");
      if (sys.contains("tariff_per_m3")) o.tariff = list(sys.at("tariff_per_m3"), "tariff_per_m3");
      if (sys.contains("profile")) {
        const json& pr = sys.at("profile");
        known_keys(pr, "system.profile",
                   {"amplitude", "peak_hour", "noise", "seed", "offpeak_price", "peak_price"});
        o.shape.amplitude = get_or(pr, "amplitude", o.shape.amplitude);
        o.shape.peak_hour = get_or(pr, "peak_hour", o.shape.peak_hour);
        o.shape.noise = get_or(pr, "noise", o.shape.noise);
        o.shape.offpeak_price = get_or(pr, "offpeak_price", o.shape.offpeak_price);
        o.shape.peak_price = get_or(pr, "peak_price", o.shape.peak_price);
        o.seed = get_or<unsigned long long>(pr, "seed", 0ULL);
      }
      if (cost.contains("input_change_weight"))
        o.input_change_weight = number(cost.at("input_change_weight"), "input_change_weight");
      if (root.contains("constraints"))
        throw ConfigError("richmond scenarios take their bounds from the network; remove \"constraints\"");
      try {
        const wdn::RichmondBundle b = wdn::build_richmond(o);
        sc.network = b.instance;
        sc.richmond = o;
        sc.system = b.system;
        sc.cost = b.cost;
        sc.box = b.box;
        sc.step_hours = b.instance.dt_hours;
      } catch (const wdn::InstanceError& e) {
        throw ConfigError(std::string("richmond instance: ") + e.what());
      }
    } else if (type == "linear") {
      known_keys(sys, "system",
                 {"type", "A", "B_u", "B_d", "period_steps", "disturbance_seq", "step_hours"});
      known_keys(cost, "cost",
                 {"alpha_seq", "input_weight", "constant_per_step", "W", "epsilon", "gamma"});
      for (const char* k : {"A", "B_u", "period_steps"})
        if (!sys.contains(k)) throw ConfigError(std::string("missing system.") + k);
      sc.system.A = matrix(sys.at("A"), base, "system.A");
      sc.system.B_u = matrix(sys.at("B_u"), base, "system.B_u");
      sc.system.T = sys.at("period_steps").get<int>();
      const Index n = sc.system.A.rows(), m = sc.system.B_u.cols();
      sc.system.B_d = sys.contains("B_d") ? matrix(sys.at("B_d"), base, "system.B_d")
                                          : Matrix::Zero(n, 1);
      if (sys.contains("disturbance_seq"))
        sc.system.d_seq = sequence(sys.at("disturbance_seq"), base, "system.disturbance_seq");
      else
        sc.system.d_seq.assign(sc.system.T, Vector::Zero(sc.system.B_d.cols()));
      sc.step_hours = get_or(sys, "step_hours", 1.0);
      sc.system.validate();

      sc.cost.alpha_seq = cost.contains("alpha_seq")
                              ? sequence(cost.at("alpha_seq"), base, "cost.alpha_seq")
                              : std::vector<Vector>(sc.system.T, Vector::Zero(m));
      sc.cost.input_weight = cost.contains("input_weight")
                                 ? matrix(cost.at("input_weight"), base, "cost.input_weight")
                                 : Matrix::Zero(m, m);
      sc.cost.constant_per_step = get_or(cost, "constant_per_step", 0.0);
      sc.cost.W = cost.contains("W") ? matrix(cost.at("W"), base, "cost.W") : Matrix::Zero(m, m);
      sc.cost.validate(sc.system.T, m);

      if (!root.contains("constraints")) throw ConfigError("missing \"constraints\" block");
      const json& c = root.at("constraints");
      known_keys(c, "constraints", {"x_lb", "x_ub", "u_lb", "u_ub"});
      for (const char* k : {"x_lb", "x_ub", "u_lb", "u_ub"})
        if (!c.contains(k)) throw ConfigError(std::string("missing constraints.") + k);
      sc.box.x_lb = vector(c.at("x_lb"), base, "constraints.x_lb");
      sc.box.x_ub = vector(c.at("x_ub"), base, "constraints.x_ub");
      sc.box.u_lb = vector(c.at("u_lb"), base, "constraints.u_lb");
      sc.box.u_ub = vector(c.at("u_ub"), base, "constraints.u_ub");
      sc.box.validate(n, m);
    } else {
      throw ConfigError("system.type must be \"linear\" or \"richmond\", got \"" + type + "\"");
    }

    const bool has_eps = cost.contains("epsilon"), has_gamma = cost.contains("gamma");
    if (has_eps) sc.cost.epsilon = number(cost.at("epsilon"), "cost.epsilon");
    if (has_gamma) sc.gamma = number(cost.at("gamma"), "cost.gamma");

    const json empc = root.value("empc", json::object());
    known_keys(empc, "empc",
               {"horizon_periods", "terminal_mode", "cost_variant", "warm_start", "n_steps", "x0",
                "v0", "x_target", "allow_single_period"});
    sc.empc.K = get_or(empc, "horizon_periods", 2);
    const std::string term = get_or<std::string>(empc, "terminal_mode", "steady_state_set");
    if (term == "steady_state_set")
      sc.empc.terminal = TerminalMode::SteadyStateSet;
    else if (term == "fixed_point")
      sc.empc.terminal = TerminalMode::FixedPoint;
    else
      throw ConfigError("empc.terminal_mode must be steady_state_set or fixed_point");
    const std::string var = get_or<std::string>(empc, "cost_variant", "economic");
    if (var == "economic")
      sc.empc.variant = CostVariant::Economic;
    else if (var == "rotated")
      sc.empc.variant = CostVariant::Rotated;
    else if (var == "modified")
      sc.empc.variant = CostVariant::Modified;
    else
      throw ConfigError("empc.cost_variant must be economic, rotated or modified");
    const std::string ws = get_or<std::string>(empc, "warm_start", "shifted");
    if (ws != "shifted" && ws != "cold") throw ConfigError("empc.warm_start must be shifted or cold");
    sc.empc.warm_start = ws == "shifted" ? WarmStart::Shifted : WarmStart::Cold;
    sc.empc.allow_single_period = get_or(empc, "allow_single_period", false);
    sc.n_steps = get_or(empc, "n_steps", 10);
    if (sc.n_steps < 0) throw ConfigError("empc.n_steps must be nonnegative");
    if (sc.empc.K < 2 && !sc.empc.allow_single_period)
      throw ConfigError("empc.horizon_periods must be >= 2 (set allow_single_period for 1)");
    if (empc.contains("x0")) {
      const json& x0 = empc.at("x0");
      if (x0.is_string()) {
        sc.x0_keyword = x0.get<std::string>();
        if (sc.x0_keyword != "min" && sc.x0_keyword != "max" && sc.x0_keyword != "zero")
          throw ConfigError("empc.x0 keyword must be min, max or zero");
      } else {
        sc.x0 = vector(x0, base, "empc.x0");
      }
    } else {
      sc.x0_keyword = "zero";
    }
    if (empc.contains("v0")) sc.v0 = vector(empc.at("v0"), base, "empc.v0");
    if (empc.contains("x_target")) sc.x_target = vector(empc.at("x_target"), base, "empc.x_target");

    if (sc.empc.variant == CostVariant::Modified) {
      if (has_eps == has_gamma)
        throw ConfigError("modified variant needs exactly one of cost.epsilon and cost.gamma");
      if (has_eps && !(sc.cost.epsilon > 0.0)) throw ConfigError("cost.epsilon must be positive");
    } else if (has_gamma || (has_eps && sc.cost.epsilon != 0.0)) {
      throw ConfigError("cost.epsilon / cost.gamma only apply to the modified variant");
    }

    const json cert = root.value("certification", json::object());
    known_keys(cert, "certification", {"n_samples", "set_samples", "seed", "workers"});
    sc.certification.n_samples = get_or(cert, "n_samples", 10000);
    sc.certification.set_samples = get_or(cert, "set_samples", 100);
    sc.certification.seed = get_or<std::uint64_t>(cert, "seed", 1);
    sc.certification.workers = get_or(cert, "workers", 1);

    const json out = root.value("output", json::object());
    known_keys(out, "output", {"directory", "formats"});
    sc.out_dir = get_or<std::string>(out, "directory", "out");
    if (out.contains("formats")) sc.formats = out.at("formats").get<std::vector<std::string>>();

    const json solver = root.value("solver", json::object());
    known_keys(solver, "solver", {"eps_prim", "eps_dual", "max_iterations", "rho"});
    sc.empc.solver.eps_prim = get_or(solver, "eps_prim", sc.empc.solver.eps_prim);
    sc.empc.solver.eps_dual = get_or(solver, "eps_dual", sc.empc.solver.eps_dual);
    sc.empc.solver.max_iterations = get_or(solver, "max_iterations", sc.empc.solver.max_iterations);
    sc.empc.solver.rho = get_or(solver, "rho", sc.empc.solver.rho);
    return sc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
}

inline Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_scenario(j, path.parent_path());
}

// ----------------------------------------------------- steady-state results

inline json to_json(const SteadyStateResult& r) {
  return json{{"u_s", to_json(r.u_s)},
              {"x_s", to_json(r.x_s)},
              {"mu", to_json(r.mu)},
              {"nullspace_columns", columns_to_json(r.nullspace)},
              {"nullspace_dim", r.nullspace_dim()},
              {"ell_s", round12(r.ell_s)},
              {"ell_s_modified", round12(r.ell_s_modified)},
              {"dual_value", round12(r.dual_value)},
              {"epsilon", round12(r.epsilon)},
              {"iterations", r.iterations}};
}

inline SteadyStateResult steady_state_from_json(const json& j) {
  auto vec = [](const json& a) {
    Vector v(static_cast<Index>(a.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = a[i].get<double>();
    return v;
  };
  SteadyStateResult r;
  r.u_s = vec(j.at("u_s"));
  r.x_s = vec(j.at("x_s"));
  r.mu = vec(j.at("mu"));
  const json& cols = j.at("nullspace_columns");
  r.nullspace = Matrix::Zero(r.x_s.size(), static_cast<Index>(cols.size()));
  for (Index c = 0; c < r.nullspace.cols(); ++c) r.nullspace.col(c) = vec(cols[c]);
  r.ell_s = j.at("ell_s").get<double>();
  r.ell_s_modified = j.at("ell_s_modified").get<double>();
  r.dual_value = j.at("dual_value").get<double>();
  r.epsilon = j.at("epsilon").get<double>();
  r.iterations = j.at("iterations").get<int>();
  return r;
}

inline void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string steady_state_report(const Scenario& sc, const SteadyStateResult& r,
                                       const ShiftCheckReport* shift) {
  std::ostringstream o;
  o << "scenario           " << sc.name << "\n";
  o << "ell_s              " << fmt(r.ell_s) << "\n";
  o << "ell_s_modified     " << fmt(r.ell_s_modified) << "\n";
  o << "dual_value         " << fmt(r.dual_value) << "\n";
  o << "duality_residual   " << fmt(std::abs(r.ell_s_modified - r.dual_value)) << "\n";
  o << "epsilon            " << fmt(r.epsilon) << "\n";
  o << "nullspace_dim      " << r.nullspace_dim() << "\n";
  o << "solver_iterations  " << r.iterations << "\n";
  o << "u_s               ";
  for (Index i = 0; i < r.u_s.size(); ++i) o << " " << fmt(r.u_s(i));
  o << "\nmu                ";
  for (Index i = 0; i < r.mu.size(); ++i) o << " " << fmt(r.mu(i));
  o << "\n";
  if (shift) {
    o << "\nshift check (cost of the steady-state problem started at each offset)\n";
    o << "offset,ell_s,input_shift_deviation\n";
    for (std::size_t k = 0; k < shift->costs.size(); ++k)
      o << k << "," << fmt(shift->costs[k]) << "," << fmt(shift->shift_deviation[k]) << "\n";
    o << "max_cost_deviation " << fmt(shift->max_cost_deviation) << "\n";
    o << "max_shift_deviation " << fmt(shift->max_shift_deviation) << "\n";
  }
  return o.str();
}

// -------------------------------------------------------------- traces

/// One row per closed-loop step. The state row is the lifted state at the
/// start of the step (plant samples (t-1)T+1 .. tT) followed, for augmented
/// models, by the carried input v.
inline std::string trace_csv(const ClosedLoopTrace& tr, const PredictionModel& M,
                             double step_hours, bool record_timing) {
  std::ostringstream o;
  o << "step,sim_hour";
  for (Index i = 0; i < M.plant_dim; ++i) o << ",x" << i;
  for (Index i = M.plant_dim; i < M.state_dim(); ++i) o << ",v" << (i - M.plant_dim);
  for (Index i = 0; i < M.input_dim(); ++i) o << ",u" << i;
  o << ",stage_cost_economic,stage_cost_modified,rotated_cost,lyapunov_V0,dist_to_Xs,"
       "solver_status,solve_ms\n";
  for (const auto& s : tr.steps) {
    o << s.step << "," << fmt(s.step * M.T * step_hours);
    for (Index i = 0; i < s.state.size(); ++i) o << "," << fmt(s.state(i));
    for (Index i = 0; i < s.input.size(); ++i) o << "," << fmt(s.input(i));
    o << "," << fmt(s.stage_economic) << "," << fmt(s.stage_modified) << "," << fmt(s.rotated)
      << "," << fmt(s.lyapunov) << "," << fmt(s.dist_to_set) << ","
      << to_string(s.open_loop.status) << "," << (record_timing ? fmt(s.open_loop.solve_ms) : "0")
      << "\n";
  }
  return o.str();
}

inline std::string closed_loop_summary(const Scenario& sc, const ClosedLoopTrace& tr,
                                       const SteadyStateResult& ss, double final_distance) {
  std::ostringstream o;
  o << "scenario        " << sc.name << "\n";
  o << "variant         " << to_string(tr.variant) << "\n";
  o << "terminal        " << to_string(tr.terminal) << "\n";
  o << "steps           " << tr.steps.size() << (tr.completed ? "" : " (aborted)") << "\n";
  if (!tr.failure.empty()) o << "failure         " << tr.failure << "\n";
  o << "ell_s           " << fmt(ss.ell_s) << "\n";
  o << "ell_s_modified  " << fmt(ss.ell_s_modified) << "\n";
  o << "final_distance  " << fmt(final_distance) << "\n\n";
  o << "period,economic_cost,modified_cost,relative_gap_to_ell_s\n";
  for (const auto& s : tr.steps) {
    const double rel = ss.ell_s != 0.0 ? (s.stage_economic - ss.ell_s) / std::abs(ss.ell_s)
                                       : s.stage_economic - ss.ell_s;
    o << s.step << "," << fmt(s.stage_economic) << "," << fmt(s.stage_modified) << ","
      << fmt(rel) << "\n";
  }
  return o.str();
}

/// gnuplot script plotting per-period cost and distance from a trace CSV.
inline std::string gnuplot_script(const std::string& csv_name, const std::string& title) {
  std::ostringstream o;
  o << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set terminal pngcairo size 900,600\n"
    << "set output '" << csv_name << ".png'\n"
    << "set multiplot layout 2,1 title '" << title << "'\n"
    << "set xlabel 'period'\n"
    << "plot '" << csv_name << "' using 'step':'stage_cost_economic' with linespoints\n"
    << "set logscale y\n"
    << "plot '" << csv_name << "' using 'step':'dist_to_Xs' with linespoints\n"
    << "unset multiplot\n";
  return o.str();
}

// ------------------------------------------------------- certification

inline json to_json(const DissipativityReport& r) {
  json j{{"verdict", r.verdict()},
         {"n_samples", r.n_samples},
         {"set_samples", r.set_samples},
         {"min_rotated_cost", round12(r.min_rotated)},
         {"min_rotated_cost_far", std::isfinite(r.min_rotated_far) ? json(round12(r.min_rotated_far))
                                                                   : json(nullptr)},
         {"min_rotated_cost_refined",
          std::isfinite(r.min_refined) ? json(round12(r.min_refined)) : json(nullptr)},
         {"n_far", r.n_far},
         {"delta", round12(r.delta)},
         {"max_abs_on_set", round12(r.max_abs_on_set)}};
  if (r.witness)
    j["witness"] = {{"x", to_json(r.witness->x)},
                    {"u", to_json(r.witness->u)},
                    {"rotated_cost", round12(r.witness->value)}};
  return j;
}

inline json to_json(const LyapunovAudit& a) {
  auto arr = [](const std::vector<double>& v) {
    json j = json::array();
    for (double d : v) j.push_back(round12(d));
    return j;
  };
  return json{{"ok", a.ok()},
              {"tolerance", a.tolerance},
              {"violations", a.violations},
              {"lower_bound_violations", a.lower_bound_violations},
              {"worst_descent", std::isfinite(a.worst_descent) ? json(round12(a.worst_descent))
                                                               : json(nullptr)},
              {"worst_step", a.worst_step},
              {"V", arr(a.V)},
              {"rotated_cost", arr(a.L)},
              {"descent", arr(a.descent)}};
}

inline json to_json(const CostGapLedger& g) {
  json steps = json::array();
  for (double d : g.step_gaps) steps.push_back(round12(d));
  return json{{"gamma", g.gamma},          {"epsilon", round12(g.epsilon)},
              {"R", round12(g.R)},         {"K", g.K},
              {"steady_gap", round12(g.steady_gap)}, {"steady_ok", g.steady_ok},
              {"step_bound", round12(g.step_bound)}, {"step_gaps", steps},
              {"steps_ok", g.steps_ok}};
}

}  // namespace empc::io
