#pragma once

// Dense convex QP with equality rows and variable bounds:
//
//   minimize    0.5 x'Hx + g'x
//   subject to  A_eq x = b_eq,  lb <= x <= ub
//
// Solved with an operator-splitting (ADMM) iteration on a Ruiz-equilibrated
// copy of the problem, followed by an active-set polish on the original data.
// Multipliers follow the convention
//
//   H x + g + A_eq' mu_eq + mu_bound = 0,
//
// so mu_bound_i >= 0 at an active upper bound and <= 0 at an active lower one.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace empc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class QpStatus { Optimal, Infeasible, MaxIterations, Unbounded };

inline std::string_view to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::MaxIterations: return "MaxIterations";
    case QpStatus::Unbounded: return "Unbounded";
  }
  return "Unknown";
}

/// Raised for malformed problems (dimension mismatch, asymmetric or
/// indefinite H, crossed bounds). Never raised for infeasibility.
class QpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct QpProblem {
  Matrix H;
  Vector g;
  Matrix A_eq;
  Vector b_eq;
  Vector lb;
  Vector ub;

  Index num_variables() const { return g.size(); }
  Index num_equalities() const { return b_eq.size(); }

  /// Unconstrained problem of dimension n (no rows, infinite bounds).
  static QpProblem unconstrained(Index n) {
    QpProblem p;
    p.H = Matrix::Zero(n, n);
    p.g = Vector::Zero(n);
    p.A_eq = Matrix::Zero(0, n);
    p.b_eq = Vector::Zero(0);
    p.lb = Vector::Constant(n, -kInf);
    p.ub = Vector::Constant(n, kInf);
    return p;
  }

  double objective(const Vector& x) const { return 0.5 * x.dot(H * x) + g.dot(x); }

  void validate() const {
    const Index n = g.size();
    auto fail = [](const std::string& what) { throw QpError("QpProblem: " + what); };
    if (H.rows() != n || H.cols() != n) fail("H must be n x n with n = size(g)");
    if (A_eq.cols() != n) fail("A_eq column count must equal decision dimension");
    if (A_eq.rows() != b_eq.size()) fail("A_eq row count must equal size(b_eq)");
    if (lb.size() != n || ub.size() != n) fail("bounds must have decision dimension");
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if (n > 0 && (H - H.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) fail("H is not symmetric");
    for (Index i = 0; i < n; ++i) {
      if (std::isnan(lb(i)) || std::isnan(ub(i))) fail("NaN bound at index " + std::to_string(i));
      if (lb(i) > ub(i)) fail("lb > ub at index " + std::to_string(i));
    }
    if (!H.allFinite() || !g.allFinite() || !A_eq.allFinite() || !b_eq.allFinite())
      fail("non-finite problem data");
  }
};

struct SolverSettings {
  double eps_prim = 1e-8;
  double eps_dual = 1e-8;
  int max_iterations = 200000;
  double rho = 0.1;
  double sigma = 1e-6;
  double relaxation = 1.6;
  int adaptive_rho_interval = 25;
  double adaptive_rho_tolerance = 5.0;
  int ruiz_iterations = 10;
  bool polish = true;
  // Residual level (scaled, relative) below which polish attempts start.
  double polish_trigger = 1e-3;
  int infeasibility_window = 5000;
  double infeasibility_decrease = 0.5;
  double certificate_tolerance = 1e-6;
};

struct QpSolution {
  Vector x_star;
  Vector mu_eq;
  Vector mu_bound;
  // Multipliers of rows appended by solve_qp_with_fixed_variables, in
  // ascending variable-index order. Empty otherwise.
  Vector mu_fixed;
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  bool polished = false;
  double primal_residual = kInf;
  double dual_residual = kInf;
  double certificate_residual = 0.0;
};

struct KktResiduals {
  double equality = 0.0;         // ||A_eq x - b_eq||_inf
  double bound_violation = 0.0;  // max(lb - x, x - ub, 0)
  double stationarity = 0.0;     // ||H x + g + A_eq' mu_eq + mu_bound||_inf
  double complementarity = 0.0;  // max |mu_bound_i| over strictly interior i
  double sign_violation = 0.0;   // wrong-signed bound multipliers at active bounds
};

inline KktResiduals kkt_residuals(const QpProblem& p, const Vector& x, const Vector& mu_eq,
                                  const Vector& mu_bound, double eps_prim = 1e-8) {
  KktResiduals r;
  const Index n = p.num_variables();
  if (p.num_equalities() > 0) r.equality = (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff();
  if (n == 0) return r;
  Vector stat = p.H * x + p.g + mu_bound;
  if (p.num_equalities() > 0) stat += p.A_eq.transpose() * mu_eq;
  r.stationarity = stat.cwiseAbs().maxCoeff();
  for (Index i = 0; i < n; ++i) {
    r.bound_violation = std::max({r.bound_violation, p.lb(i) - x(i), x(i) - p.ub(i)});
    const bool interior = x(i) > p.lb(i) + eps_prim && x(i) < p.ub(i) - eps_prim;
    if (interior) r.complementarity = std::max(r.complementarity, std::abs(mu_bound(i)));
    if (p.lb(i) == p.ub(i)) continue;
    if (!(x(i) < p.ub(i) - eps_prim)) r.sign_violation = std::max(r.sign_violation, -mu_bound(i));
    if (!(x(i) > p.lb(i) + eps_prim)) r.sign_violation = std::max(r.sign_violation, mu_bound(i));
  }
  return r;
}

inline KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s, double eps_prim = 1e-8) {
  return kkt_residuals(p, s.x_star, s.mu_eq, s.mu_bound, eps_prim);
}

/// Lagrangian dual value at the returned multipliers. At an exact KKT point
/// it equals the primal objective; the difference is the duality gap.
inline double dual_objective(const QpProblem& p, const QpSolution& s) {
  double d = -0.5 * s.x_star.dot(p.H * s.x_star);
  if (p.num_equalities() > 0) d -= p.b_eq.dot(s.mu_eq);
  for (Index i = 0; i < p.num_variables(); ++i) {
    const double y = s.mu_bound(i);
    if (y > 0) d -= y * p.ub(i);
    if (y < 0) d -= y * p.lb(i);
  }
  return d;
}

inline double duality_gap(const QpProblem& p, const QpSolution& s) {
  return std::abs(s.objective - dual_objective(p, s));
}

namespace detail {

// Throws QpError naming the first negative pivot of a pivoted LDL' of H.
inline void require_psd(const Matrix& H) {
  const Index n = H.rows();
  if (n == 0) return;
  Eigen::LDLT<Matrix> ldlt(0.5 * (H + H.transpose()));
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  const Vector d = ldlt.vectorD();
  Vector order = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
  order = ldlt.transpositionsP() * order;
  for (Index k = 0; k < n; ++k) {
    if (d(k) < -1e-9 * scale * static_cast<double>(n)) {
      std::ostringstream os;
      os << "H is not positive semidefinite: pivot " << k << " (variable "
         << static_cast<Index>(order(k)) << ") has value " << d(k);
      throw QpError(os.str());
    }
  }
}

inline double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Ruiz equilibration of [H A'; A 0]. Variables are scaled by D, equality
// rows by E and the cost by c. Bound rows stay identity in scaled space.
struct Scaling {
  Vector D;
  Vector E;
  double c = 1.0;
};

inline Scaling ruiz(const QpProblem& p, int iterations) {
  const Index n = p.num_variables();
  const Index m = p.num_equalities();
  Scaling s{Vector::Ones(n), Vector::Ones(m), 1.0};
  Matrix H = p.H;
  Matrix A = p.A_eq;
  Vector g = p.g;
  auto clip = [](double v) { return (v < 1e-4) ? 1.0 : std::min(v, 1e4); };
  for (int it = 0; it < iterations; ++it) {
    Vector dcol(n), erow(m);
    for (Index j = 0; j < n; ++j) {
      double v = n ? H.col(j).cwiseAbs().maxCoeff() : 0.0;
      if (m) v = std::max(v, A.col(j).cwiseAbs().maxCoeff());
      dcol(j) = 1.0 / std::sqrt(clip(v));
    }
    for (Index i = 0; i < m; ++i) erow(i) = 1.0 / std::sqrt(clip(A.row(i).cwiseAbs().maxCoeff()));
    H = dcol.asDiagonal() * H * dcol.asDiagonal();
    A = erow.asDiagonal() * A * dcol.asDiagonal();
    g = dcol.asDiagonal() * g;
    s.D = s.D.cwiseProduct(dcol);
    s.E = s.E.cwiseProduct(erow);
    // Cost scaling keeps the gradient and Hessian magnitudes near one.
    double hmean = 0.0;
    for (Index j = 0; j < n; ++j) hmean += H.col(j).cwiseAbs().maxCoeff();
    hmean = n ? hmean / static_cast<double>(n) : 0.0;
    const double gamma = 1.0 / clip(std::max(hmean, inf_norm(g)));
    H *= gamma;
    g *= gamma;
    s.c *= gamma;
  }
  return s;
}

}  // namespace detail

/// Stateful solver. Holds the factorization workspace; not thread-safe, but
/// distinct instances can run concurrently.
class QpSolver {
 public:
  explicit QpSolver(SolverSettings settings = {}) : settings_(settings) {}

  const SolverSettings& settings() const { return settings_; }

  QpSolution solve(const QpProblem& problem, const Vector* warm_x = nullptr,
                   const Vector* warm_mu_eq = nullptr) {
    problem.validate();
    detail::require_psd(problem.H);
    const Index n = problem.num_variables();
    const Index m = problem.num_equalities();
    if (n == 0) {
      QpSolution s;
      s.x_star = Vector::Zero(0);
      s.mu_bound = Vector::Zero(0);
      s.mu_eq = Vector::Zero(m);
      const bool ok = m == 0 || detail::inf_norm(problem.b_eq) <= settings_.eps_prim;
      s.status = ok ? QpStatus::Optimal : QpStatus::Infeasible;
      s.primal_residual = m ? detail::inf_norm(problem.b_eq) : 0.0;
      s.dual_residual = 0.0;
      s.certificate_residual = ok ? 0.0 : s.primal_residual;
      return s;
    }
    setup(problem);
    return iterate(problem, warm_x, warm_mu_eq);
  }

 private:
  SolverSettings settings_;

  // Scaled data.
  detail::Scaling scale_;
  Matrix Hs_, As_, AtA_;
  Vector gs_, bs_, ls_, us_;
  Vector rho_b_;
  double rho_ = 0.1;
  double rho_eq_ = 100.0;
  Eigen::LLT<Matrix> kkt_;

  void setup(const QpProblem& p) {
    scale_ = detail::ruiz(p, settings_.ruiz_iterations);
    const auto& D = scale_.D;
    const auto& E = scale_.E;
    Hs_ = scale_.c * (D.asDiagonal() * p.H * D.asDiagonal());
    gs_ = scale_.c * D.cwiseProduct(p.g);
    As_ = E.asDiagonal() * p.A_eq * D.asDiagonal();
    bs_ = E.cwiseProduct(p.b_eq);
    ls_ = p.lb.cwiseQuotient(D);
    us_ = p.ub.cwiseQuotient(D);
    AtA_ = As_.transpose() * As_;
    rho_ = settings_.rho;
    factor();
  }

  void factor() {
    const Index n = Hs_.rows();
    rho_eq_ = 1e3 * rho_;
    rho_b_.resize(n);
    for (Index i = 0; i < n; ++i) {
      const bool free = std::isinf(ls_(i)) && std::isinf(us_(i));
      const bool fixed = ls_(i) == us_(i);
      rho_b_(i) = free ? 1e-6 : (fixed ? 1e3 * rho_ : rho_);
    }
    Matrix K = Hs_;
    K.diagonal().array() += settings_.sigma;
    K.diagonal() += rho_b_;
    if (As_.rows() > 0) K += rho_eq_ * AtA_;
    kkt_.compute(K);
  }

  struct Iterate {
    Vector x, zb, yb, yeq;
  };

  QpSolution iterate(const QpProblem& p, const Vector* warm_x, const Vector* warm_mu_eq) {
    const Index n = p.num_variables();
    const Index m = p.num_equalities();
    const auto& D = scale_.D;
    const auto& E = scale_.E;
    const double c = scale_.c;
    const double alpha = settings_.relaxation;

    Iterate it;
    it.x = Vector::Zero(n);
    if (warm_x && warm_x->size() == n) it.x = warm_x->cwiseQuotient(D);
    it.zb = it.x.cwiseMax(ls_).cwiseMin(us_);
    it.yb = Vector::Zero(n);
    it.yeq = Vector::Zero(m);
    if (warm_mu_eq && warm_mu_eq->size() == m) it.yeq = c * warm_mu_eq->cwiseQuotient(E);

    QpSolution best;
    best.status = QpStatus::MaxIterations;

    std::vector<signed char> last_polish_guess;
    double window_start_prim = kInf;
    int window_start_iter = 0;
    Vector yeq_prev = it.yeq, yb_prev = it.yb, x_prev = it.x;

    Vector rhs(n), xt(n), zt(n), zb_new(n), Axt(m);
    for (int k = 1; k <= settings_.max_iterations; ++k) {
      x_prev = it.x;
      yeq_prev = it.yeq;
      yb_prev = it.yb;

      rhs = settings_.sigma * it.x - gs_ + rho_b_.cwiseProduct(it.zb) - it.yb;
      if (m) rhs.noalias() += As_.transpose() * (rho_eq_ * bs_ - it.yeq);
      xt = kkt_.solve(rhs);
      it.x = alpha * xt + (1.0 - alpha) * it.x;
      zt = alpha * xt + (1.0 - alpha) * it.zb;
      zb_new = (zt + it.yb.cwiseQuotient(rho_b_)).cwiseMax(ls_).cwiseMin(us_);
      it.yb += rho_b_.cwiseProduct(zt - zb_new);
      it.zb = zb_new;
      if (m) {
        Axt.noalias() = As_ * xt;
        it.yeq += rho_eq_ * (alpha * Axt + (1.0 - alpha) * bs_ - bs_);
      }

      const bool check = (k % 5 == 0) || k == settings_.max_iterations;
      if (!check) continue;

      // Residuals on the unscaled problem.
      const Vector x = D.cwiseProduct(it.x);
      const Vector mu_eq = E.cwiseProduct(it.yeq) / c;
      const Vector mu_b = it.yb.cwiseQuotient(D) / c;
      double r_prim = detail::inf_norm(x - D.cwiseProduct(it.zb));
      if (m) r_prim = std::max(r_prim, detail::inf_norm(p.A_eq * x - p.b_eq));
      Vector stat = p.H * x + p.g + mu_b;
      if (m) stat.noalias() += p.A_eq.transpose() * mu_eq;
      const double r_dual = detail::inf_norm(stat);

      if (r_prim <= settings_.eps_prim && r_dual <= settings_.eps_dual) {
        QpSolution s = package(p, x, mu_eq, mu_b, k, QpStatus::Optimal);
        s.primal_residual = r_prim;
        s.dual_residual = r_dual;
        if (settings_.polish) {
          if (auto pol = polish(p, guess_active(it), k)) return *pol;
        }
        return s;
      }

      // Scaled relative residuals drive rho adaptation and polish triggers.
      double prim_norm = std::max(detail::inf_norm(it.x), detail::inf_norm(it.zb));
      double prim_s = detail::inf_norm(it.x - it.zb);
      if (m) {
        Vector ax = As_ * it.x;
        prim_norm = std::max({prim_norm, detail::inf_norm(ax), detail::inf_norm(bs_)});
        prim_s = std::max(prim_s, detail::inf_norm(ax - bs_));
      }
      Vector aty = it.yb;
      if (m) aty.noalias() += As_.transpose() * it.yeq;
      Vector hx = Hs_ * it.x;
      const double dual_norm =
          std::max({detail::inf_norm(hx), detail::inf_norm(aty), detail::inf_norm(gs_)});
      const double dual_s = detail::inf_norm(hx + gs_ + aty);
      const double rel_prim = prim_s / std::max(prim_norm, 1e-12);
      const double rel_dual = dual_s / std::max(dual_norm, 1e-12);

      if (k % settings_.adaptive_rho_interval == 0) {
        if (settings_.polish && rel_prim < settings_.polish_trigger &&
            rel_dual < settings_.polish_trigger) {
          auto guess = guess_active(it);
          if (guess != last_polish_guess) {
            last_polish_guess = guess;
            if (auto pol = polish(p, guess, k)) return *pol;
          }
        }
        const double ratio = std::sqrt(rel_prim / std::max(rel_dual, 1e-30));
        const double new_rho = std::clamp(rho_ * ratio, 1e-6, 1e6);
        if (new_rho > rho_ * settings_.adaptive_rho_tolerance ||
            new_rho < rho_ / settings_.adaptive_rho_tolerance) {
          // Keep the scaled duals; only the penalty and factorization change.
          rho_ = new_rho;
          factor();
        }
      }

      // Primal infeasibility certificate: dy with A'dy ~ 0 and support < 0.
      {
        const Vector dyb = it.yb - yb_prev;
        const Vector dyeq = it.yeq - yeq_prev;
        const double dnorm = std::max(detail::inf_norm(dyb), detail::inf_norm(dyeq));
        if (dnorm > 1e-10) {
          Vector atdy = dyb;
          if (m) atdy.noalias() += As_.transpose() * dyeq;
          double support = m ? bs_.dot(dyeq) : 0.0;
          bool finite = true;
          for (Index i = 0; i < n; ++i) {
            if (dyb(i) > 0) {
              if (std::isinf(us_(i))) { finite = false; break; }
              support += us_(i) * dyb(i);
            } else if (dyb(i) < 0) {
              if (std::isinf(ls_(i))) { finite = false; break; }
              support += ls_(i) * dyb(i);
            }
          }
          const double tol = settings_.certificate_tolerance * dnorm;
          if (finite && detail::inf_norm(atdy) <= tol && support <= -tol) {
            QpSolution s = package(p, x, mu_eq, mu_b, k, QpStatus::Infeasible);
            s.primal_residual = r_prim;
            s.dual_residual = r_dual;
            s.certificate_residual = -support / dnorm;
            return s;
          }
        }
      }

      // Dual infeasibility certificate: dx with H dx ~ 0, g'dx < 0, feasible ray.
      {
        const Vector dx = it.x - x_prev;
        const double dnorm = detail::inf_norm(dx);
        if (dnorm > 1e-10) {
          const double tol = settings_.certificate_tolerance * dnorm;
          bool ray = detail::inf_norm(Hs_ * dx) <= tol && gs_.dot(dx) <= -tol;
          if (ray && m) ray = detail::inf_norm(As_ * dx) <= tol;
          for (Index i = 0; ray && i < n; ++i) {
            if (!std::isinf(us_(i)) && dx(i) > tol) ray = false;
            if (!std::isinf(ls_(i)) && dx(i) < -tol) ray = false;
          }
          if (ray) {
            QpSolution s = package(p, x, mu_eq, mu_b, k, QpStatus::Unbounded);
            s.primal_residual = r_prim;
            s.dual_residual = r_dual;
            s.certificate_residual = -gs_.dot(dx) / dnorm;
            return s;
          }
        }
      }

      // Stagnation heuristic: primal residual not halving over a window
      // while the dual residual has settled.
      if (window_start_iter == 0) {
        window_start_prim = r_prim;
        window_start_iter = k;
      } else if (k - window_start_iter >= settings_.infeasibility_window) {
        if (r_prim > settings_.eps_prim &&
            r_prim > settings_.infeasibility_decrease * window_start_prim &&
            rel_dual < settings_.polish_trigger) {
          QpSolution s = package(p, x, mu_eq, mu_b, k, QpStatus::Infeasible);
          s.primal_residual = r_prim;
          s.dual_residual = r_dual;
          s.certificate_residual = r_prim;
          return s;
        }
        window_start_prim = r_prim;
        window_start_iter = k;
      }

      if (k == settings_.max_iterations) {
        best = package(p, x, mu_eq, mu_b, k, QpStatus::MaxIterations);
        best.primal_residual = r_prim;
        best.dual_residual = r_dual;
      }
    }
    return best;
  }

  QpSolution package(const QpProblem& p, const Vector& x, const Vector& mu_eq,
                     const Vector& mu_b, int k, QpStatus status) const {
    QpSolution s;
    s.x_star = x;
    s.mu_eq = mu_eq;
    s.mu_bound = mu_b;
    s.objective = p.objective(x);
    s.status = status;
    s.iterations = k;
    return s;
  }

  // -1 lower active, +1 upper active, 2 fixed (lb == ub), 0 inactive.
  std::vector<signed char> guess_active(const Iterate& it) const {
    const Index n = it.x.size();
    std::vector<signed char> g(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
      if (ls_(i) == us_(i)) {
        g[static_cast<std::size_t>(i)] = 2;
      } else if (it.zb(i) - ls_(i) < -it.yb(i)) {
        g[static_cast<std::size_t>(i)] = -1;
      } else if (us_(i) - it.zb(i) < it.yb(i)) {
        g[static_cast<std::size_t>(i)] = 1;
      }
    }
    return g;
  }

  struct Reduced {
    Vector x, mu_eq, mu_b;
  };

  // Equality-constrained QP with the variables in `active` pinned to their
  // bounds. Regularized KKT solve with iterative refinement on the exact
  // system, so dependent equality rows are tolerated.
  static std::optional<Reduced> solve_reduced(const QpProblem& p,
                                              const std::vector<signed char>& active) {
    const Index n = p.num_variables();
    const Index m = p.num_equalities();
    std::vector<Index> freev, fixedv;
    Vector x = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      const auto a = active[static_cast<std::size_t>(i)];
      if (a == 0) {
        freev.push_back(i);
      } else {
        fixedv.push_back(i);
        x(i) = (a == 1) ? p.ub(i) : p.lb(i);
      }
    }
    const Index nf = static_cast<Index>(freev.size());
    Matrix Hff(nf, nf), Aff(m, nf);
    Vector rhs_x(nf), rhs_e = p.b_eq;
    for (Index a = 0; a < nf; ++a) {
      for (Index b = 0; b < nf; ++b) Hff(a, b) = p.H(freev[a], freev[b]);
      for (Index r = 0; r < m; ++r) Aff(r, a) = p.A_eq(r, freev[a]);
    }
    Vector hx_fixed = Vector::Zero(n);
    for (Index j : fixedv) hx_fixed += p.H.col(j) * x(j);
    for (Index a = 0; a < nf; ++a) rhs_x(a) = -p.g(freev[a]) - hx_fixed(freev[a]);
    if (m)
      for (Index j : fixedv) rhs_e -= p.A_eq.col(j) * x(j);

    const Index dim = nf + m;
    Vector sol = Vector::Zero(dim);
    if (dim > 0) {
      const double scale = std::max(
          {1.0, nf ? Hff.cwiseAbs().maxCoeff() : 0.0, (nf && m) ? Aff.cwiseAbs().maxCoeff() : 0.0});
      const double delta = 1e-9 * scale;
      Matrix Kexact = Matrix::Zero(dim, dim);
      Kexact.topLeftCorner(nf, nf) = Hff;
      Kexact.topRightCorner(nf, m) = Aff.transpose();
      Kexact.bottomLeftCorner(m, nf) = Aff;
      Matrix Kreg = Kexact;
      Kreg.diagonal().head(nf).array() += delta;
      Kreg.diagonal().tail(m).array() -= delta;
      Eigen::PartialPivLU<Matrix> lu(Kreg);
      Vector rhs(dim);
      rhs << rhs_x, rhs_e;
      sol = lu.solve(rhs);
      for (int r = 0; r < 50; ++r) {
        const Vector res = rhs - Kexact * sol;
        if (detail::inf_norm(res) <= 1e-14 * scale * std::max(1.0, detail::inf_norm(rhs))) break;
        sol += lu.solve(res);
      }
      if (!sol.allFinite()) return std::nullopt;
    }
    Reduced out;
    for (Index a = 0; a < nf; ++a) x(freev[a]) = sol(a);
    out.mu_eq = sol.tail(m);
    Vector grad = p.H * x + p.g;
    if (m) grad.noalias() += p.A_eq.transpose() * out.mu_eq;
    out.mu_b = Vector::Zero(n);
    for (Index j : fixedv) out.mu_b(j) = -grad(j);
    out.x = std::move(x);
    return out;
  }

  // Polish from the ADMM active-set guess. A few primal-dual active-set
  // corrections (release wrong-signed bounds, pin violated ones) handle
  // degenerate guesses. Accepted only if every KKT condition holds.
  std::optional<QpSolution> polish(const QpProblem& p, std::vector<signed char> active,
                                   int k) const {
    const Index n = p.num_variables();
    const double ep = settings_.eps_prim;
    const double ed = settings_.eps_dual;
    for (int round = 0; round < 8; ++round) {
      auto red = solve_reduced(p, active);
      if (!red) return std::nullopt;
      bool changed = false;
      for (Index i = 0; i < n; ++i) {
        auto& a = active[static_cast<std::size_t>(i)];
        const double y = red->mu_b(i);
        if ((a == -1 && y > ed) || (a == 1 && -y > ed)) {
          a = 0;
          changed = true;
        } else if (a == 0 && red->x(i) < p.lb(i) - ep) {
          a = -1;
          changed = true;
        } else if (a == 0 && red->x(i) > p.ub(i) + ep) {
          a = 1;
          changed = true;
        }
      }
      if (changed) continue;
      const KktResiduals r = kkt_residuals(p, red->x, red->mu_eq, red->mu_b, ep);
      const bool ok = r.equality <= ep && r.bound_violation <= ep && r.stationarity <= ed;
      if (!ok) return std::nullopt;
      QpSolution s = package(p, red->x, red->mu_eq, red->mu_b, k, QpStatus::Optimal);
      s.polished = true;
      s.primal_residual = std::max(r.equality, r.bound_violation);
      s.dual_residual = r.stationarity;
      return s;
    }
    return std::nullopt;
  }
};

/// Solves the problem from a cold start (or the supplied primal/dual guess).
inline QpSolution solve_qp(const QpProblem& problem, const SolverSettings& settings = {},
                           const Vector* warm_x = nullptr, const Vector* warm_mu_eq = nullptr) {
  QpSolver solver(settings);
  return solver.solve(problem, warm_x, warm_mu_eq);
}

/// Pins selected variables by appending one equality row each; the
/// multipliers of those rows are returned in mu_fixed (ascending index).
inline QpSolution solve_qp_with_fixed_variables(const QpProblem& problem,
                                                const std::map<Index, double>& fixed,
                                                const SolverSettings& settings = {},
                                                const Vector* warm_x = nullptr) {
  problem.validate();
  const Index n = problem.num_variables();
  for (const auto& [i, v] : fixed) {
    if (i < 0 || i >= n) throw QpError("fixed variable index out of range: " + std::to_string(i));
    if (v < problem.lb(i) || v > problem.ub(i)) {
      QpSolution s;
      s.status = QpStatus::Infeasible;
      s.x_star = Vector::Zero(n);
      s.mu_eq = Vector::Zero(problem.num_equalities());
      s.mu_bound = Vector::Zero(n);
      s.mu_fixed = Vector::Zero(static_cast<Index>(fixed.size()));
      s.iterations = 0;
      s.certificate_residual = std::max(problem.lb(i) - v, v - problem.ub(i));
      return s;
    }
  }
  const Index m0 = problem.num_equalities();
  const Index nf = static_cast<Index>(fixed.size());
  QpProblem ext = problem;
  ext.A_eq = Matrix::Zero(m0 + nf, n);
  ext.A_eq.topRows(m0) = problem.A_eq;
  ext.b_eq.resize(m0 + nf);
  ext.b_eq.head(m0) = problem.b_eq;
  Index r = m0;
  for (const auto& [i, v] : fixed) {
    ext.A_eq(r, i) = 1.0;
    ext.b_eq(r) = v;
    ++r;
  }
  QpSolution s = solve_qp(ext, settings, warm_x);
  s.mu_fixed = s.mu_eq.tail(nf);
  s.mu_eq = s.mu_eq.head(m0).eval();
  return s;
}

}  // namespace empc
