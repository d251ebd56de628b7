#include "feederopt/powerflow.hpp"

namespace feederopt {

namespace {

Eigen::VectorXcd slack_vector(const NetworkModel& net, int tap) {
  const auto& pairs = net.pairs();
  Eigen::VectorXcd v(pairs.nodes());
  for (int p = 0; p < pairs.nodes(); ++p)
    v(p) = net.slack_voltage(pairs.node_pairs[static_cast<size_t>(p)].second, tap);
  return v;
}

Eigen::VectorXcd injection_currents(const InjectionState& inj,
                                    const Eigen::VectorXcd& v) {
  Eigen::VectorXcd i(v.size());
  for (int p = 0; p < v.size(); ++p) {
    cplx s(inj.p(p), inj.q(p));
    i(p) = std::conj(s) / std::conj(v(p));
  }
  return i;
}

void fill_branch_quantities(const NetworkModel& net, FlowResult& r) {
  const auto& pairs = net.pairs();
  r.branch_power_from.resize(pairs.branches());
  r.branch_power_to.resize(pairs.branches());
  for (int bp = 0; bp < pairs.branches(); ++bp) {
    auto [br, z] = pairs.branch_pairs[static_cast<size_t>(bp)];
    const Branch& branch = net.branches()[static_cast<size_t>(br)];
    cplx v_from = r.voltages.at(net, branch.from, z);
    cplx v_to = r.voltages.at(net, branch.to, z);
    cplx i = r.branch_currents(bp);
    r.branch_power_from(bp) = -v_from * std::conj(i);
    r.branch_power_to(bp) = v_to * std::conj(i);
  }
}

}  // namespace

FlowResult bfs_power_flow(const NetworkModel& net, const InjectionState& inj,
                          int tap, double tol, int max_iter,
                          const Eigen::VectorXcd* v_init) {
  if (tap < net.tap().tap_min || tap > net.tap().tap_max)
    throw ValidationError("tap position outside range");
  const auto& topo = net.topology();
  Eigen::VectorXcd v_slack = slack_vector(net, tap);
  Eigen::VectorXcd v = v_slack;  // flat start at the slack profile
  if (v_init) {
    if (v_init->size() != v.size())
      throw ValidationError("v_init dimension mismatch");
    v = *v_init;
  }

  FlowResult r;
  double delta = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    for (int p = 0; p < v.size(); ++p)
      if (std::abs(v(p)) < 1e-6)
        throw ConvergenceError("voltage collapse in sweep");
    Eigen::VectorXcd i_inj = injection_currents(inj, v);
    Eigen::VectorXcd i_br = topo.bibc * i_inj;
    Eigen::VectorXcd v_new = v_slack + topo.bcbv * i_br;
    delta = (v_new - v).cwiseAbs().maxCoeff();
    v = v_new;
    if (delta < tol) {
      r.voltages.v = v;
      r.voltages.tap_position = tap;
      r.branch_currents = i_br;
      r.iterations = it;
      r.converged = true;
      r.final_mismatch = delta;
      fill_branch_quantities(net, r);
      return r;
    }
  }
  throw ConvergenceError("power flow did not converge in " +
                         std::to_string(max_iter) +
                         " iterations; final mismatch " + fmt_double(delta));
}

FlowResult linearized_sweep(const NetworkModel& net, const InjectionState& inj,
                            const VoltageState& v_bar, int tap) {
  for (int p = 0; p < v_bar.v.size(); ++p)
    if (std::abs(v_bar.v(p)) == 0.0)
      throw ValidationError("linearized sweep: zero entry in v_bar");
  const auto& topo = net.topology();
  Eigen::VectorXcd i_inj = injection_currents(inj, v_bar.v);
  Eigen::VectorXcd i_br = topo.bibc * i_inj;
  FlowResult r;
  r.voltages.v = slack_vector(net, tap) + topo.bcbv * i_br;
  r.voltages.tap_position = tap;
  r.branch_currents = i_br;
  r.iterations = 1;
  r.converged = true;
  fill_branch_quantities(net, r);
  return r;
}

VufResult symmetrical_vuf(const std::array<cplx, 3>& v_abc) {
  const cplx a = std::polar(1.0, 2.0 * kPi / 3.0);
  const cplx a2 = a * a;
  cplx v_pos = (v_abc[0] + a * v_abc[1] + a2 * v_abc[2]) / 3.0;
  cplx v_neg = (v_abc[0] + a2 * v_abc[1] + a * v_abc[2]) / 3.0;
  VufResult r;
  r.v_neg_mag = std::abs(v_neg);
  if (std::abs(v_pos) < 1e-6) {
    r.defined = false;
    r.vuf_percent = 0.0;
  } else {
    r.vuf_percent = 100.0 * std::abs(v_neg) / std::abs(v_pos);
  }
  return r;
}

Eigen::VectorXd phase_losses(const FlowResult& flow) {
  Eigen::VectorXd loss(flow.branch_power_from.size());
  for (int bp = 0; bp < loss.size(); ++bp)
    loss(bp) = std::abs((flow.branch_power_from(bp) + flow.branch_power_to(bp)).real());
  return loss;
}

double total_loss(const FlowResult& flow) { return phase_losses(flow).sum(); }

double power_mismatch(const NetworkModel& net, const InjectionState& inj,
                      const FlowResult& flow) {
  const auto& pairs = net.pairs();
  // implied injection current per node from branch-current KCL
  Eigen::VectorXcd implied = Eigen::VectorXcd::Zero(pairs.nodes());
  for (int p = 0; p < pairs.nodes(); ++p) {
    auto [bus, z] = pairs.node_pairs[static_cast<size_t>(p)];
    int parent = net.parent_branch(bus);
    int bp = pairs.branch_of(parent, z);
    if (bp >= 0) implied(p) += flow.branch_currents(bp);
  }
  for (int bp = 0; bp < pairs.branches(); ++bp) {
    auto [br, z] = pairs.branch_pairs[static_cast<size_t>(bp)];
    int from = net.branches()[static_cast<size_t>(br)].from;
    if (from == net.slack()) continue;
    int p = pairs.node_of(from, z);
    if (p >= 0) implied(p) -= flow.branch_currents(bp);
  }
  double worst = 0.0;
  for (int p = 0; p < pairs.nodes(); ++p) {
    cplx s_implied = flow.voltages.v(p) * std::conj(implied(p));
    cplx s_spec(inj.p(p), inj.q(p));
    worst = std::max(worst, std::abs(s_spec - s_implied));
  }
  return worst;
}

}  // namespace feederopt
