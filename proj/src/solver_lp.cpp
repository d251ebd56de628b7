#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include "feederopt/solver.hpp"

namespace feederopt {

namespace {

constexpr signed char kBasic = 0, kAtLower = 1, kAtUpper = 2, kFreeNb = 3;

// Bounded-variable revised simplex on the computational form
//   min c'x   s.t.  A x + s = b,  lo <= (x,s) <= hi,
// with one logical variable per row. The basis inverse is kept as a dense
// LU factorization plus an eta file, refactorized periodically.
class Simplex {
 public:
  Simplex(const LinearProgram& lp, const SimplexOptions& opts)
      : opts_(opts), n_(lp.num_vars()), m_(lp.num_rows()), total_(n_ + m_) {
    c_.assign(total_, 0.0);
    lo_.resize(total_);
    hi_.resize(total_);
    const double sign = lp.maximize ? -1.0 : 1.0;
    for (int j = 0; j < n_; ++j) {
      c_[j] = sign * lp.cost[j];
      lo_[j] = lp.lo[j];
      hi_[j] = lp.hi[j];
      if (!(lo_[j] <= hi_[j]))
        throw ValidationError("variable bounds inverted");
      if (!std::isfinite(c_[j]))
        throw ValidationError("non-finite objective coefficient");
    }
    cols_.resize(n_);
    b_.resize(m_);
    for (int r = 0; r < m_; ++r) {
      const auto& row = lp.rows[r];
      b_(r) = row.rhs;
      for (auto [j, v] : row.coeffs) {
        if (j < 0 || j >= n_) throw ValidationError("row references unknown variable");
        if (!std::isfinite(v)) throw ValidationError("non-finite row coefficient");
        if (v != 0.0) cols_[j].push_back({r, v});
      }
      int s = n_ + r;
      switch (row.rel) {
        case Rel::LE: lo_[s] = 0.0; hi_[s] = kInf; break;
        case Rel::GE: lo_[s] = -kInf; hi_[s] = 0.0; break;
        case Rel::EQ: lo_[s] = 0.0; hi_[s] = 0.0; break;
      }
    }
  }

  Solution run() {
    init_basis();
    Solution sol;
    int iters = 0;
    bool bland = false;
    int degenerate_streak = 0;

    for (int phase = 1; phase <= 2; ++phase) {
      if (phase == 2 && infeasibility() > feas_threshold()) {
        sol.status = SolveStatus::Infeasible;
        finalize(sol, iters);
        return sol;
      }
      while (true) {
        if (iters >= opts_.max_iterations) {
          sol.status = SolveStatus::IterLimit;
          finalize(sol, iters);
          return sol;
        }
        const bool ph1 = (phase == 1) && infeasibility() > feas_threshold();
        if (phase == 1 && !ph1) break;  // feasible: on to phase 2

        Eigen::VectorXd y = duals_vector(ph1);
        int enter = pick_entering(y, ph1, bland);
        if (enter < 0) {
          if (ph1) {
            sol.status = SolveStatus::Infeasible;
            finalize(sol, iters);
            return sol;
          }
          sol.status = SolveStatus::Optimal;
          finalize(sol, iters, &y);
          return sol;
        }
        ++iters;

        double d = reduced_cost(enter, y, ph1);
        double dir = 0.0;
        if (state_[enter] == kAtLower) dir = 1.0;
        else if (state_[enter] == kAtUpper) dir = -1.0;
        else dir = (d < 0.0) ? 1.0 : -1.0;

        Eigen::VectorXd w(m_);
        column(enter, w);
        ftran(w);

        RatioResult rr = ratio_test(enter, w, dir, ph1);
        if (rr.t == kInf) {
          if (ph1)
            throw ConvergenceError("internal: unbounded phase-1 direction");
          sol.status = SolveStatus::Unbounded;
          finalize(sol, iters);
          return sol;
        }
        if (!rr.bound_flip && std::abs(w(rr.leave_row)) < 1e-11 &&
            !etas_.empty()) {
          // numerically weak pivot: refactorize and redo this iteration
          if (!refactorize())
            throw ConvergenceError("numerically singular basis");
          compute_xb();
          continue;
        }

        if (rr.t <= 1e-12) {
          if (++degenerate_streak > 60) bland = true;
        } else {
          degenerate_streak = 0;
          bland = false;
        }

        apply_step(enter, w, dir, rr.t, rr.leave_row, rr.leave_to_upper,
                   rr.bound_flip);
      }
    }
    throw ConvergenceError("internal: simplex fell through");
  }

  // --- warm start plumbing -------------------------------------------------
  void set_warm(const SimplexState& s) {
    warm_ = &s;
  }

 private:
  const SimplexOptions& opts_;
  int n_, m_, total_;
  std::vector<double> c_, lo_, hi_;
  std::vector<std::vector<std::pair<int, double>>> cols_;
  Eigen::VectorXd b_;

  std::vector<int> basic_;
  std::vector<signed char> state_;
  Eigen::VectorXd xb_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  struct Eta {
    int r;
    Eigen::VectorXd w;
  };
  std::vector<Eta> etas_;
  int pivots_since_refactor_ = 0;
  const SimplexState* warm_ = nullptr;

  double feas_threshold() const { return opts_.feas_tol * 10.0; }

  void column(int j, Eigen::VectorXd& out) const {
    out.setZero();
    if (j < n_) {
      for (auto [r, v] : cols_[j]) out(r) = v;
    } else {
      out(j - n_) = 1.0;
    }
  }

  void ftran(Eigen::VectorXd& v) const {
    v = lu_.solve(v);
    for (const Eta& e : etas_) {
      double t = v(e.r) / e.w(e.r);
      v -= t * e.w;
      v(e.r) = t;
    }
  }

  void btran(Eigen::VectorXd& v) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      double dot = it->w.dot(v) - it->w(it->r) * v(it->r);
      v(it->r) = (v(it->r) - dot) / it->w(it->r);
    }
    v = lu_.transpose().solve(v);
  }

  bool refactorize() {
    Eigen::MatrixXd bmat(m_, m_);
    Eigen::VectorXd col(m_);
    for (int i = 0; i < m_; ++i) {
      column(basic_[i], col);
      bmat.col(i) = col;
    }
    lu_.compute(bmat);
    const auto& u = lu_.matrixLU();
    double dmax = 0.0;
    for (int i = 0; i < m_; ++i) dmax = std::max(dmax, std::abs(u(i, i)));
    for (int i = 0; i < m_; ++i)
      if (std::abs(u(i, i)) < 1e-12 * std::max(1.0, dmax)) return false;
    etas_.clear();
    pivots_since_refactor_ = 0;
    return true;
  }

  double nb_value(int j) const {
    switch (state_[j]) {
      case kAtLower: return lo_[j];
      case kAtUpper: return hi_[j];
      default: return 0.0;
    }
  }

  void compute_xb() {
    Eigen::VectorXd rhs = b_;
    for (int j = 0; j < total_; ++j) {
      if (state_[j] == kBasic) continue;
      double v = nb_value(j);
      if (v == 0.0) continue;
      if (j < n_) {
        for (auto [r, a] : cols_[j]) rhs(r) -= a * v;
      } else {
        rhs(j - n_) -= v;
      }
    }
    ftran(rhs);
    xb_ = rhs;
  }

  void init_basis() {
    state_.assign(total_, kAtLower);
    for (int j = 0; j < total_; ++j) {
      if (std::isfinite(lo_[j])) state_[j] = kAtLower;
      else if (std::isfinite(hi_[j])) state_[j] = kAtUpper;
      else state_[j] = kFreeNb;
    }
    basic_.resize(m_);
    bool warm_ok = false;
    if (warm_ && static_cast<int>(warm_->state.size()) == total_ &&
        static_cast<int>(warm_->basic.size()) == m_) {
      basic_ = warm_->basic;
      std::vector<signed char> st = warm_->state;
      bool consistent = true;
      for (int i = 0; i < m_ && consistent; ++i)
        consistent = basic_[i] >= 0 && basic_[i] < total_ &&
                     st[static_cast<size_t>(basic_[i])] == kBasic;
      if (consistent) {
        // nonbasic states must refer to finite bounds
        for (int j = 0; j < total_; ++j) {
          if (st[j] == kAtLower && !std::isfinite(lo_[j]))
            st[j] = std::isfinite(hi_[j]) ? kAtUpper : kFreeNb;
          else if (st[j] == kAtUpper && !std::isfinite(hi_[j]))
            st[j] = std::isfinite(lo_[j]) ? kAtLower : kFreeNb;
        }
        state_ = st;
        if (refactorize()) warm_ok = true;
      }
    }
    if (!warm_ok) {
      for (int j = 0; j < total_; ++j) {
        if (std::isfinite(lo_[j])) state_[j] = kAtLower;
        else if (std::isfinite(hi_[j])) state_[j] = kAtUpper;
        else state_[j] = kFreeNb;
      }
      for (int r = 0; r < m_; ++r) {
        basic_[r] = n_ + r;
        state_[n_ + r] = kBasic;
      }
      if (!refactorize())
        throw ConvergenceError("internal: singular logical basis");
    }
    compute_xb();
  }

  double violation(int i) const {
    int j = basic_[i];
    double v = xb_(i);
    double scale = 1.0 + std::abs(v);
    if (v < lo_[j] - opts_.feas_tol * scale) return lo_[j] - v;
    if (v > hi_[j] + opts_.feas_tol * scale) return v - hi_[j];
    return 0.0;
  }

  double infeasibility() const {
    double s = 0.0;
    for (int i = 0; i < m_; ++i) s += violation(i);
    return s;
  }

  Eigen::VectorXd duals_vector(bool ph1) const {
    Eigen::VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) {
      int j = basic_[i];
      if (ph1) {
        double v = xb_(i);
        double scale = 1.0 + std::abs(v);
        if (v < lo_[j] - opts_.feas_tol * scale) cb(i) = -1.0;
        else if (v > hi_[j] + opts_.feas_tol * scale) cb(i) = 1.0;
        else cb(i) = 0.0;
      } else {
        cb(i) = c_[j];
      }
    }
    btran(cb);
    return cb;
  }

  double reduced_cost(int j, const Eigen::VectorXd& y, bool ph1) const {
    double cj = ph1 ? 0.0 : c_[j];
    if (j < n_) {
      double dot = 0.0;
      for (auto [r, v] : cols_[j]) dot += y(r) * v;
      return cj - dot;
    }
    return cj - y(j - n_);
  }

  int pick_entering(const Eigen::VectorXd& y, bool ph1, bool bland) const {
    int best = -1;
    double best_score = opts_.cost_tol;
    for (int j = 0; j < total_; ++j) {
      if (state_[j] == kBasic) continue;
      if (lo_[j] == hi_[j]) continue;  // fixed
      double d = reduced_cost(j, y, ph1);
      double score = 0.0;
      if (state_[j] == kAtLower && d < -opts_.cost_tol) score = -d;
      else if (state_[j] == kAtUpper && d > opts_.cost_tol) score = d;
      else if (state_[j] == kFreeNb && std::abs(d) > opts_.cost_tol) score = std::abs(d);
      if (score <= 0.0) continue;
      if (bland) return j;  // first eligible index
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    return best;
  }

  struct RatioResult {
    double t = kInf;
    int leave_row = -1;
    bool leave_to_upper = false;
    bool bound_flip = false;
  };

  // Breakpoint of basic row i along the edge, or +inf. In phase 1 an
  // infeasible basic only blocks when moving towards its violated bound.
  double row_breakpoint(int i, double rate, bool ph1, bool* hits_upper) const {
    int j = basic_[i];
    double v = xb_(i);
    double scale = 1.0 + std::abs(v);
    bool below = v < lo_[j] - opts_.feas_tol * scale;
    bool above = v > hi_[j] + opts_.feas_tol * scale;
    double t_i = kInf;
    if (ph1 && below) {
      if (rate > 0.0) { t_i = (lo_[j] - v) / rate; *hits_upper = false; }
    } else if (ph1 && above) {
      if (rate < 0.0) { t_i = (hi_[j] - v) / rate; *hits_upper = true; }
    } else if (rate < 0.0 && std::isfinite(lo_[j])) {
      t_i = (lo_[j] - v) / rate;
      *hits_upper = false;
    } else if (rate > 0.0 && std::isfinite(hi_[j])) {
      t_i = (hi_[j] - v) / rate;
      *hits_upper = true;
    }
    return std::max(t_i, 0.0);
  }

  // Two-pass ratio test: find the minimum breakpoint, then among blockers
  // within tolerance of it take the largest pivot magnitude (ties: lowest
  // variable index). A full bound flip of the entering variable applies only
  // when strictly shorter than every row breakpoint.
  RatioResult ratio_test(int enter, const Eigen::VectorXd& w, double dir,
                         bool ph1) const {
    constexpr double kPivTol = 1e-10;
    double t_min = kInf;
    bool up_dummy = false;
    for (int i = 0; i < m_; ++i) {
      double rate = -w(i) * dir;
      if (std::abs(rate) < kPivTol) continue;
      t_min = std::min(t_min, row_breakpoint(i, rate, ph1, &up_dummy));
    }
    double t_flip = kInf;
    if (std::isfinite(lo_[enter]) && std::isfinite(hi_[enter]))
      t_flip = hi_[enter] - lo_[enter];

    RatioResult rr;
    if (t_flip < t_min) {
      rr.t = t_flip;
      rr.bound_flip = true;
      return rr;
    }
    if (t_min == kInf) return rr;  // unbounded edge

    const double window = t_min + 1e-9 * (1.0 + t_min);
    double best_piv = -1.0;
    for (int i = 0; i < m_; ++i) {
      double rate = -w(i) * dir;
      if (std::abs(rate) < kPivTol) continue;
      bool hits_upper = false;
      double t_i = row_breakpoint(i, rate, ph1, &hits_upper);
      if (t_i > window) continue;
      double piv = std::abs(w(i));
      if (piv > best_piv + 1e-15 ||
          (std::abs(piv - best_piv) <= 1e-15 && rr.leave_row >= 0 &&
           basic_[i] < basic_[rr.leave_row])) {
        best_piv = piv;
        rr.t = t_i;
        rr.leave_row = i;
        rr.leave_to_upper = hits_upper;
      }
    }
    return rr;
  }

  void apply_step(int enter, const Eigen::VectorXd& w, double dir, double t,
                  int leave_row, bool leave_to_upper, bool bound_flip) {
    xb_ -= (t * dir) * w;
    if (bound_flip) {
      state_[enter] = (state_[enter] == kAtLower) ? kAtUpper : kAtLower;
      return;
    }
    int leaving = basic_[leave_row];
    double enter_val = nb_value(enter) + t * dir;
    if (std::abs(w(leave_row)) < 1e-13)
      throw ConvergenceError("numerically singular pivot");
    basic_[leave_row] = enter;
    state_[enter] = kBasic;
    state_[leaving] = leave_to_upper ? kAtUpper : kAtLower;
    if (!std::isfinite(leave_to_upper ? hi_[leaving] : lo_[leaving]))
      state_[leaving] = kFreeNb;  // free variable leaving at no bound
    etas_.push_back({leave_row, w});
    xb_(leave_row) = enter_val;
    if (++pivots_since_refactor_ >= opts_.refactor_every) {
      if (!refactorize())
        throw ConvergenceError("numerically singular basis");
      compute_xb();
    }
  }

  void finalize(Solution& sol, int iters, const Eigen::VectorXd* y = nullptr) {
    sol.iterations = iters;
    sol.x.assign(static_cast<size_t>(n_), 0.0);
    std::vector<double> full(static_cast<size_t>(total_), 0.0);
    for (int j = 0; j < total_; ++j)
      if (state_[j] != kBasic) full[static_cast<size_t>(j)] = nb_value(j);
    for (int i = 0; i < m_; ++i) full[static_cast<size_t>(basic_[i])] = xb_(i);
    for (int j = 0; j < n_; ++j) sol.x[static_cast<size_t>(j)] = full[static_cast<size_t>(j)];
    double obj = 0.0;
    for (int j = 0; j < total_; ++j) obj += c_[j] * full[static_cast<size_t>(j)];
    sol.objective = obj;
    if (y) {
      sol.duals.assign(static_cast<size_t>(m_), 0.0);
      for (int r = 0; r < m_; ++r) sol.duals[static_cast<size_t>(r)] = (*y)(r);
      // dual objective: y'b plus reduced-cost contributions of the
      // nonbasic structural variables at finite bounds
      double dobj = 0.0;
      for (int r = 0; r < m_; ++r) dobj += (*y)(r)*b_(r);
      for (int j = 0; j < total_; ++j) {
        if (state_[j] == kBasic) continue;
        double v = nb_value(j);
        if (v == 0.0) continue;
        dobj += reduced_cost(j, *y, false) * v;
      }
      sol.dual_objective = dobj;
    }
    SimplexState st;
    st.basic = basic_;
    st.state = state_;
    sol.basis = std::move(st);
  }
};

}  // namespace

Solution solve_lp(const LinearProgram& lp, const SimplexOptions& opts) {
  Simplex s(lp, opts);
  if (opts.warm) s.set_warm(*opts.warm);
  Solution sol = s.run();
  if (lp.maximize) {
    sol.objective = -sol.objective;
    sol.dual_objective = -sol.dual_objective;
  }
  return sol;
}

std::string LinearProgram::dump(const std::vector<int>* int_vars) const {
  std::ostringstream os;
  os << (maximize ? "maximize" : "minimize") << "\n";
  for (int j = 0; j < num_vars(); ++j) {
    if (cost[j] == 0.0) continue;
    os << "  " << fmt_double(cost[j]) << " "
       << (names.empty() ? "x" + std::to_string(j) : names[j]) << "\n";
  }
  os << "subject to\n";
  for (const auto& row : rows) {
    os << " ";
    for (auto [j, v] : row.coeffs)
      os << " " << (v >= 0 ? "+" : "") << fmt_double(v) << " "
         << (names.empty() ? "x" + std::to_string(j) : names[j]);
    os << (row.rel == Rel::LE ? " <= " : row.rel == Rel::GE ? " >= " : " = ")
       << fmt_double(row.rhs) << "\n";
  }
  os << "bounds\n";
  for (int j = 0; j < num_vars(); ++j)
    os << "  " << fmt_double(lo[j]) << " <= "
       << (names.empty() ? "x" + std::to_string(j) : names[j])
       << " <= " << fmt_double(hi[j]) << "\n";
  if (int_vars && !int_vars->empty()) {
    os << "integers\n ";
    for (int j : *int_vars)
      os << " " << (names.empty() ? "x" + std::to_string(j) : names[j]);
    os << "\n";
  }
  return os.str();
}

}  // namespace feederopt
