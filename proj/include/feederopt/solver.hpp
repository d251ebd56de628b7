#pragma once

// Self-contained linear programming: bounded-variable revised simplex with
// an eta-file basis, a branch-and-bound layer for the few integers the OPF
// needs (taps, shift indicators, charge/discharge exclusivity), the polygon
// linearization helper for quadratic envelopes, and a small active-set
// solver for inequality-constrained weighted least squares.
//
// Determinism: Dantzig pricing with lowest-index tie-breaking, Bland's rule
// after a degeneracy streak, sequential node ids in branch and bound. The
// same input always yields the same Solution.

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "feederopt/common.hpp"

namespace feederopt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Rel { LE, EQ, GE };

struct LinearProgram {
  struct Row {
    std::vector<std::pair<int, double>> coeffs;  // (var, value), var unique
    Rel rel = Rel::LE;
    double rhs = 0.0;
  };

  std::vector<double> cost;
  std::vector<double> lo, hi;
  std::vector<std::string> names;
  std::vector<Row> rows;
  bool maximize = false;

  int num_vars() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }

  int add_var(const std::string& name, double lo_v, double hi_v,
              double cost_v) {
    if (!(lo_v <= hi_v)) throw ValidationError("variable '" + name + "': lo > hi");
    names.push_back(name);
    lo.push_back(lo_v);
    hi.push_back(hi_v);
    cost.push_back(cost_v);
    return num_vars() - 1;
  }
  void add_row(Row r) { rows.push_back(std::move(r)); }
  void add_row(std::vector<std::pair<int, double>> coeffs, Rel rel, double rhs) {
    rows.push_back(Row{std::move(coeffs), rel, rhs});
  }

  // Documented plain-text dump (objective, rows, bounds, integers) for
  // debugging and the external-solver adapter.
  std::string dump(const std::vector<int>* int_vars = nullptr) const;
};

struct IntegerSpec {
  std::vector<int> int_vars;                    // integrality-constrained ids
  std::vector<std::pair<int, int>> int_range;   // admissible [lo,hi] per entry
  // pairs of nonnegative variables of which at most one may be nonzero
  // (battery charge/discharge exclusivity); branched on directly
  std::vector<std::pair<int, int>> exclusive_pairs;
  int max_nodes = 20000;
  int max_integers = 64;

  bool empty() const {
    return int_vars.empty() && exclusive_pairs.empty();
  }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterLimit, NodeLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterLimit: return "iteration-limit";
    default: return "node-limit";
  }
}

// Warm-start snapshot: basis membership per row plus the bound status of all
// structural and logical variables.
struct SimplexState {
  std::vector<int> basic;
  std::vector<signed char> state;  // 0 basic, 1 at lower, 2 at upper, 3 free-at-0
};

struct Solution {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::vector<double> duals;        // per row (LP solves only)
  double dual_objective = 0.0;
  double gap = 0.0;                 // MILP optimality gap at termination
  int iterations = 0;
  int nodes = 0;
  std::optional<SimplexState> basis;  // for warm starts

  bool optimal() const { return status == SolveStatus::Optimal; }
};

struct SimplexOptions {
  double feas_tol = 1e-9;
  double cost_tol = 1e-9;
  int max_iterations = 200000;
  int refactor_every = 64;
  const SimplexState* warm = nullptr;
};

Solution solve_lp(const LinearProgram& lp, const SimplexOptions& opts = {});

Solution solve_milp(const LinearProgram& lp, const IntegerSpec& ints,
                    const SimplexOptions& opts = {});

// Half-planes a_p * p + a_q * q <= rhs of the regular polygon inscribed in
// the circle of radius s_max (vertex on the positive p axis). Conservative:
// every feasible point satisfies p^2 + q^2 <= s_max^2; the worst radial
// under-coverage is s_max * (1 - cos(pi/sides)).
struct HalfPlane {
  double a_p = 0.0;
  double a_q = 0.0;
  double rhs = 0.0;
};
std::vector<HalfPlane> polygonize_quadratic(double s_max, int sides);

// minimize || diag(w)^(1/2) (A x - b) ||^2  s.t.  G x <= h,
// starting from a feasible x0 (default: zero vector, which the caller must
// know to be feasible). Primal active-set method; sizes here are tiny.
struct ClsProblem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd w;      // sample weights, >= 0
  Eigen::MatrixXd g;      // may have zero rows
  Eigen::VectorXd h;
  Eigen::VectorXd x0;     // empty => zeros
};
Eigen::VectorXd constrained_least_squares(const ClsProblem& prob);

}  // namespace feederopt
