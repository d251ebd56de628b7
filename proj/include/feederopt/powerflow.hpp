#pragma once

// Backward/forward sweep power flow on the radial three-phase feeder, the
// single linearized sweep used inside the OPF, voltage-unbalance and loss
// evaluation.
//
// Current convention: branch_currents holds the aggregated injection current
// flowing from the `to` side towards the slack (export positive). Apparent
// powers branch_power_from/to are the powers flowing INTO the branch from
// each end, so Re(s_from + s_to) is the per-phase branch loss.

#include <Eigen/Dense>
#include <vector>

#include "feederopt/common.hpp"
#include "feederopt/network.hpp"

namespace feederopt {

struct VoltageState {
  Eigen::VectorXcd v;        // per node pair (non-slack), pu
  int tap_position = 0;

  cplx at(const NetworkModel& net, int bus, int z) const {
    if (bus == net.slack()) return net.slack_voltage(z, tap_position);
    int idx = net.pairs().node_of(bus, z);
    if (idx < 0) throw ValidationError("phase absent at bus");
    return v(idx);
  }
};

struct InjectionState {
  Eigen::VectorXd p;         // per node pair, pu (generation positive)
  Eigen::VectorXd q;

  static InjectionState zeros(const NetworkModel& net) {
    InjectionState s;
    s.p = Eigen::VectorXd::Zero(net.pairs().nodes());
    s.q = Eigen::VectorXd::Zero(net.pairs().nodes());
    return s;
  }
};

struct FlowResult {
  VoltageState voltages;
  Eigen::VectorXcd branch_currents;     // per branch pair, export positive
  Eigen::VectorXcd branch_power_from;   // into branch at `from` end, pu
  Eigen::VectorXcd branch_power_to;     // into branch at `to` end, pu
  int iterations = 0;
  bool converged = false;
  double final_mismatch = 0.0;
};

struct VufResult {
  double vuf_percent = 0.0;   // exact IEC ratio, percent
  double v_neg_mag = 0.0;     // |V-| pu, the OPF approximation
  bool defined = true;        // false when |V+| ~ 0
};

// Exact iterative BFS power flow. Throws ConvergenceError on max_iter
// exhaustion ("...final mismatch ...") or voltage collapse. v_init overrides
// the flat start; the converged fixed point does not depend on it.
FlowResult bfs_power_flow(const NetworkModel& net, const InjectionState& inj,
                          int tap, double tol = 1e-8, int max_iter = 100,
                          const Eigen::VectorXcd* v_init = nullptr);

// One backward+forward pass with injection currents computed against the
// frozen voltages v_bar; linear in (p, q) for fixed v_bar.
FlowResult linearized_sweep(const NetworkModel& net, const InjectionState& inj,
                            const VoltageState& v_bar, int tap);

// Symmetrical-component unbalance of one bus's three phase voltages.
VufResult symmetrical_vuf(const std::array<cplx, 3>& v_abc);

// Per-(branch,phase) loss |Re(s_from + s_to)| and the plain sum variant.
Eigen::VectorXd phase_losses(const FlowResult& flow);
double total_loss(const FlowResult& flow);

// Largest |S_inj - V * conj(I_net)| style power mismatch; diagnostic oracle.
double power_mismatch(const NetworkModel& net, const InjectionState& inj,
                      const FlowResult& flow);

}  // namespace feederopt
