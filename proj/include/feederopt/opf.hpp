#pragma once

// Deterministic multi-period three-phase OPF on the single-sweep linearized
// network model: the inner loop that alternates a MILP solve with an exact
// power-flow projection onto the AC-feasible manifold.
//
// Modeling notes:
//  - Voltages and branch currents are not LP variables: at a frozen voltage
//    profile v_bar the single sweep makes them affine in the DER decision
//    variables, so every network constraint is a row over those variables.
//  - Magnitude limits (|R V|, |I|, |V-|) enter as supporting-hyperplane cuts
//    generated lazily at the violation angle and kept in a pool that
//    persists across inner iterations; at the fixed point the limits hold
//    to the cut tolerance.
//  - The loss term of the objective is a bundle model: one epigraph
//    variable per period supported from below by first-order cuts of the
//    true loss (value + gradient by finite differences of exact power
//    flows), one cut per inner iteration. A single frozen-voltage
//    linearization misprices the reactive direction by O(voltage angle)
//    and a single tangent overshoots past the loss minimum; accumulated
//    tangents give the model the curvature it needs to settle. The exact
//    per-phase |Re(S_f + S_t)| losses are recomputed from the projected
//    flows for the reported objective.
//  - The infinity-norm penalty uses one shared epigraph variable per
//    constraint family (voltage / current / unbalance).
//
// Variable census per day (documented for the dimension test):
//   T * (3*G + 5*S + F + (tap variable ? 1 : 0) + 1) + 3
// with G PV units (p, q+, q-), S batteries (p_ch, p_dis, q+, q-, e), F
// shiftable loads (n), one integer tap per period when the changer has
// range, the per-period loss epigraph variable, plus the three norm
// variables. Battery channels carry a tiny tie-break cost
// (reg_bess_frac * c_p) so cost-free dispatch does not wander between
// equally optimal schedules across inner iterations.

#include <vector>

#include "feederopt/der.hpp"
#include "feederopt/network.hpp"
#include "feederopt/powerflow.hpp"
#include "feederopt/scenario.hpp"
#include "feederopt/solver.hpp"

namespace feederopt {

struct OpfConfig {
  double c_p = 0.1;       // cost per kWh curtailed / lost
  double c_q = 0.001;     // cost per kvarh of DG reactive use
  double c_h = 100.0;     // penalty per pu of constraint slack
  double v_min = 0.96;    // pu
  double v_max = 1.04;    // pu
  double vuf_max_pct = 2.0;
  double dt_h = 1.0;
  int horizon = 24;
  double inner_tol = 1e-4;   // pu voltage change between inner iterations
  int inner_max_iter = 12;
  // integer decisions (taps, shifts) are frozen at their last values after
  // this many inner iterations so the continuous polish can reach a fixed
  // point; equal-cost integer patterns would otherwise alternate forever
  int freeze_int_after = 3;
  int milp_max_nodes = 20000;
  double cut_tol = 1e-7;     // magnitude-cut feasibility tolerance, pu
  int max_cut_rounds = 60;
  bool enable_vuf = true;
  int der_polygon_sides = 16;   // battery apparent-power polygon
  double reg_bess_frac = 1e-2;  // battery tie-break cost as fraction of c_p

  void validate() const {
    if (!(c_q < c_p)) throw ValidationError("OpfConfig: requires c_q < c_p");
    if (!(v_min < v_max)) throw ValidationError("OpfConfig: v_min >= v_max");
    if (!(dt_h > 0.0)) throw ValidationError("OpfConfig: dt <= 0");
    if (horizon < 1) throw ValidationError("OpfConfig: empty horizon");
  }
};

struct Margins {
  Eigen::MatrixXd v_upper;  // node_pairs x T, pu
  Eigen::MatrixXd v_lower;
  Eigen::MatrixXd i_upper;  // branch_pairs x T, pu

  static Margins zeros(const NetworkModel& net, int horizon) {
    Margins m;
    m.v_upper = Eigen::MatrixXd::Zero(net.pairs().nodes(), horizon);
    m.v_lower = Eigen::MatrixXd::Zero(net.pairs().nodes(), horizon);
    m.i_upper = Eigen::MatrixXd::Zero(net.pairs().branches(), horizon);
    return m;
  }
  double max_abs_diff(const Margins& other) const {
    double d = (v_upper - other.v_upper).cwiseAbs().maxCoeff();
    d = std::max(d, (v_lower - other.v_lower).cwiseAbs().maxCoeff());
    if (i_upper.size())
      d = std::max(d, (i_upper - other.i_upper).cwiseAbs().maxCoeff());
    return d;
  }
};

struct OpfSolution {
  Eigen::MatrixXd p_g, q_g;               // n_pv x T (pu)
  Eigen::MatrixXd p_ch, p_dis, q_b, e_b;  // n_bess x T (pu; e in pu*h)
  Eigen::MatrixXi n_shift;                // n_flex x T
  std::vector<int> tap;                   // per period
  double slack_v = 0.0, slack_i = 0.0, slack_vuf = 0.0;
  std::vector<FlowResult> flows;          // exact projected flows per period
  Eigen::MatrixXd pv_avail;               // copy of the day's availability
  double objective = 0.0;        // MILP objective (linearized model)
  double objective_exact = 0.0;  // recomputed from the exact flows
  bool converged = false;
  int inner_iterations = 0;

  DerCommands commands_at(int t) const {
    DerCommands c;
    c.pv_p = p_g.col(t);
    c.pv_q = q_g.col(t);
    c.bess_p = p_dis.col(t) - p_ch.col(t);
    c.bess_q = q_b.col(t);
    c.shift = n_shift.col(t);
    return c;
  }
};

// Lazily generated magnitude cuts; the pool persists across assemblies.
struct CutPool {
  struct Cut {
    enum class Kind { VUpper, VLower, IUpper, VufUpper };
    Kind kind;
    int entity;  // node pair / branch pair / vuf row
    int t;
    double angle = 0.0;
  };
  std::vector<Cut> cuts;
};

// First-order supports of the true per-period loss accumulated over the
// inner iterations: loss_t >= base + grad' (x_t - xbar).
struct LossBundle {
  struct Cut {
    double base = 0.0;
    Eigen::VectorXd grad;  // over the period block
    Eigen::VectorXd xbar;
  };
  std::vector<std::vector<Cut>> per_period;
};

struct OpfModel {
  LinearProgram lp;
  IntegerSpec ints;
  double obj_offset = 0.0;
  int T = 0, n_pv = 0, n_bess = 0, n_flex = 0;
  bool tap_variable = false;
  int block = 0;  // variables per period

  int var_pg(int g, int t) const { return t * block + g; }
  int var_qgp(int g, int t) const { return t * block + n_pv + g; }
  int var_qgn(int g, int t) const { return t * block + 2 * n_pv + g; }
  int var_pch(int s, int t) const { return t * block + 3 * n_pv + s; }
  int var_pdis(int s, int t) const { return t * block + 3 * n_pv + n_bess + s; }
  int var_qbp(int s, int t) const { return t * block + 3 * n_pv + 2 * n_bess + s; }
  int var_qbn(int s, int t) const { return t * block + 3 * n_pv + 3 * n_bess + s; }
  int var_eb(int s, int t) const { return t * block + 3 * n_pv + 4 * n_bess + s; }
  int var_n(int f, int t) const { return t * block + 3 * n_pv + 5 * n_bess + f; }
  int var_rho(int t) const { return t * block + 3 * n_pv + 5 * n_bess + n_flex; }
  int var_loss(int t) const { return t * block + block - 1; }
  int var_mv() const { return T * block; }
  int var_mi() const { return T * block + 1; }
  int var_mvuf() const { return T * block + 2; }

  // affine maps V(x), I(x), V-(x) per period over that period's block
  struct PeriodMap {
    Eigen::MatrixXcd v_coef;     // node_pairs x block
    Eigen::VectorXcd v_const;
    Eigen::MatrixXcd i_coef;     // branch_pairs x block
    Eigen::VectorXcd i_const;
    Eigen::MatrixXcd vneg_coef;  // vuf rows x block
    Eigen::VectorXcd vneg_const;
    std::vector<int> vuf_bus;
    LossBundle::Cut loss_cut;    // support computed at this assembly's point
  };
  std::vector<PeriodMap> period;

  Eigen::VectorXd block_values(const std::vector<double>& x, int t) const {
    Eigen::VectorXd b(block);
    for (int k = 0; k < block; ++k) b(k) = x[static_cast<size_t>(t * block + k)];
    return b;
  }
};

// Builds the full MILP at the frozen voltage profile v_bar (one VoltageState
// per period), materializing the given cut pool. Margins shift the limit
// right-hand sides; zero margins reproduce the raw deterministic
// constraints. prev_cmds holds the iterate the loss term is linearized
// around (null: all-zero commands, matching a flat-start first iteration).
OpfModel assemble_opf(const NetworkModel& net, const DerFleet& fleet,
                      const FleetIndex& idx, const DayContext& day,
                      const OpfConfig& cfg, const Margins& margins,
                      const std::vector<VoltageState>& v_bar,
                      const CutPool& pool,
                      const std::vector<DerCommands>* prev_cmds = nullptr,
                      const LossBundle* bundle = nullptr);

OpfSolution solve_deterministic_opf(const NetworkModel& net,
                                    const DerFleet& fleet,
                                    const FleetIndex& idx,
                                    const DayContext& day,
                                    const OpfConfig& cfg,
                                    const Margins& margins);

// Recomputes the cost function from the solution's exact flows: curtailment
// and reactive use at c_p/c_q, per-phase |Re(S_f + S_t)| losses at c_p, and
// the infinity-norm slack penalty against the raw (untightened) limits.
double evaluate_objective(const NetworkModel& net, const OpfSolution& sol,
                          const OpfConfig& cfg);

}  // namespace feederopt
