#include "feederopt/opf.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

namespace feederopt {

namespace {

constexpr double kAnglesEqualTol = 1e-7;

// injection effect of one decision variable at one node pair
struct InjEffect {
  int pair = -1;
  double dp = 0.0;
  double dq = 0.0;
};

std::string block_var_name(const OpfModel& m, const DerFleet& fleet, int k,
                           int t) {
  int g = m.n_pv, s = m.n_bess;
  if (k < g) return "pg:" + fleet.pv[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= g;
  if (k < g) return "qg+:" + fleet.pv[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= g;
  if (k < g) return "qg-:" + fleet.pv[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= g;
  if (k < s) return "pch:" + fleet.bess[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= s;
  if (k < s) return "pdis:" + fleet.bess[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= s;
  if (k < s) return "qb+:" + fleet.bess[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= s;
  if (k < s) return "qb-:" + fleet.bess[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= s;
  if (k < s) return "eb:" + fleet.bess[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= s;
  if (k < m.n_flex) return "n:" + fleet.flex[static_cast<size_t>(k)].id + ":" + std::to_string(t);
  k -= m.n_flex;
  if (m.tap_variable && k == 0) return "rho:" + std::to_string(t);
  return "loss:" + std::to_string(t);
}

// Appends the LP row for one cut. Margins shift the right-hand sides.
void materialize_cut(OpfModel& model, const NetworkModel& net,
                     const OpfConfig& cfg, const Margins& margins,
                     const CutPool::Cut& cut) {
  const auto& pm = model.period[static_cast<size_t>(cut.t)];
  LinearProgram::Row row;
  auto add_block_coeffs = [&](const Eigen::VectorXcd& coef, cplx factor) {
    for (int k = 0; k < model.block; ++k) {
      double a = (factor * coef(k)).real();
      if (a != 0.0) row.coeffs.push_back({cut.t * model.block + k, a});
    }
  };
  using Kind = CutPool::Cut::Kind;
  switch (cut.kind) {
    case Kind::VUpper: {
      int z = net.pairs().node_pairs[static_cast<size_t>(cut.entity)].second;
      cplx dir = std::polar(1.0, -cut.angle) * phase_rotation(z);
      add_block_coeffs(pm.v_coef.row(cut.entity).transpose(), dir);
      row.coeffs.push_back({model.var_mv(), -1.0});
      row.rel = Rel::LE;
      row.rhs = cfg.v_max - margins.v_upper(cut.entity, cut.t) -
                (dir * pm.v_const(cut.entity)).real();
      break;
    }
    case Kind::VLower: {
      int z = net.pairs().node_pairs[static_cast<size_t>(cut.entity)].second;
      cplx dir = phase_rotation(z);
      add_block_coeffs(pm.v_coef.row(cut.entity).transpose(), dir);
      row.coeffs.push_back({model.var_mv(), 1.0});
      row.rel = Rel::GE;
      row.rhs = cfg.v_min + margins.v_lower(cut.entity, cut.t) -
                (dir * pm.v_const(cut.entity)).real();
      break;
    }
    case Kind::IUpper: {
      auto [br, z] = net.pairs().branch_pairs[static_cast<size_t>(cut.entity)];
      (void)z;
      cplx dir = std::polar(1.0, -cut.angle);
      add_block_coeffs(pm.i_coef.row(cut.entity).transpose(), dir);
      row.coeffs.push_back({model.var_mi(), -1.0});
      row.rel = Rel::LE;
      row.rhs = net.branches()[static_cast<size_t>(br)].ampacity_pu -
                margins.i_upper(cut.entity, cut.t) -
                (dir * pm.i_const(cut.entity)).real();
      break;
    }
    case Kind::VufUpper: {
      cplx dir = std::polar(1.0, -cut.angle);
      add_block_coeffs(pm.vneg_coef.row(cut.entity).transpose(), dir);
      row.coeffs.push_back({model.var_mvuf(), -1.0});
      row.rel = Rel::LE;
      row.rhs = cfg.vuf_max_pct / 100.0 - (dir * pm.vneg_const(cut.entity)).real();
      break;
    }
  }
  model.lp.add_row(std::move(row));
}

// Scans the candidate solution for magnitude violations beyond the cut
// tolerance; returns the new cuts (deterministic order).
std::vector<CutPool::Cut> scan_violations(const OpfModel& model,
                                          const NetworkModel& net,
                                          const OpfConfig& cfg,
                                          const Margins& margins,
                                          const std::vector<double>& x,
                                          const CutPool& pool) {
  std::vector<CutPool::Cut> fresh;
  const double mv = x[static_cast<size_t>(model.var_mv())];
  const double mi = x[static_cast<size_t>(model.var_mi())];
  const double mvuf = x[static_cast<size_t>(model.var_mvuf())];
  using Kind = CutPool::Cut::Kind;

  auto already_have = [&](Kind kind, int entity, int t, double angle) {
    for (const auto& c : pool.cuts)
      if (c.kind == kind && c.entity == entity && c.t == t &&
          (kind == Kind::VLower || std::abs(c.angle - angle) < kAnglesEqualTol))
        return true;
    for (const auto& c : fresh)
      if (c.kind == kind && c.entity == entity && c.t == t &&
          (kind == Kind::VLower || std::abs(c.angle - angle) < kAnglesEqualTol))
        return true;
    return false;
  };

  for (int t = 0; t < model.T; ++t) {
    const auto& pm = model.period[static_cast<size_t>(t)];
    Eigen::VectorXd xb = model.block_values(x, t);
    Eigen::VectorXcd v = pm.v_const + pm.v_coef * xb;
    Eigen::VectorXcd ibr = pm.i_const + pm.i_coef * xb;

    for (int p = 0; p < v.size(); ++p) {
      int z = net.pairs().node_pairs[static_cast<size_t>(p)].second;
      cplx zrot = phase_rotation(z) * v(p);
      double mag = std::abs(zrot);
      if (mag - mv > cfg.v_max - margins.v_upper(p, t) + cfg.cut_tol) {
        double ang = std::arg(zrot);
        if (!already_have(Kind::VUpper, p, t, ang))
          fresh.push_back({Kind::VUpper, p, t, ang});
      }
      if (zrot.real() + mv < cfg.v_min + margins.v_lower(p, t) - cfg.cut_tol) {
        if (!already_have(Kind::VLower, p, t, 0.0))
          fresh.push_back({Kind::VLower, p, t, 0.0});
      }
    }
    for (int bp = 0; bp < ibr.size(); ++bp) {
      auto [br, z] = net.pairs().branch_pairs[static_cast<size_t>(bp)];
      (void)z;
      double amp = net.branches()[static_cast<size_t>(br)].ampacity_pu;
      double mag = std::abs(ibr(bp));
      if (mag - mi > amp - margins.i_upper(bp, t) + cfg.cut_tol) {
        double ang = std::arg(ibr(bp));
        if (!already_have(Kind::IUpper, bp, t, ang))
          fresh.push_back({Kind::IUpper, bp, t, ang});
      }
    }
    if (cfg.enable_vuf && pm.vneg_coef.rows() > 0) {
      Eigen::VectorXcd vneg = pm.vneg_const + pm.vneg_coef * xb;
      for (int r = 0; r < vneg.size(); ++r) {
        double mag = std::abs(vneg(r));
        if (mag - mvuf > cfg.vuf_max_pct / 100.0 + cfg.cut_tol) {
          double ang = std::arg(vneg(r));
          if (!already_have(Kind::VufUpper, r, t, ang))
            fresh.push_back({Kind::VufUpper, r, t, ang});
        }
      }
    }
  }
  return fresh;
}

void extend_state_for_rows(SimplexState& st, int n_vars, int new_rows) {
  int old_rows = static_cast<int>(st.basic.size());
  st.state.resize(static_cast<size_t>(n_vars + new_rows), 0);
  for (int r = old_rows; r < new_rows; ++r) {
    st.basic.push_back(n_vars + r);
    st.state[static_cast<size_t>(n_vars + r)] = 0;  // basic
  }
}

}  // namespace

OpfModel assemble_opf(const NetworkModel& net, const DerFleet& fleet,
                      const FleetIndex& idx, const DayContext& day,
                      const OpfConfig& cfg, const Margins& margins,
                      const std::vector<VoltageState>& v_bar,
                      const CutPool& pool,
                      const std::vector<DerCommands>* prev_cmds) {
  cfg.validate();
  if (day.horizon != cfg.horizon)
    throw ValidationError("assemble_opf: scenario horizon " +
                          std::to_string(day.horizon) + " != config horizon " +
                          std::to_string(cfg.horizon));
  if (static_cast<int>(v_bar.size()) != day.horizon)
    throw ValidationError("assemble_opf: v_bar horizon mismatch");

  OpfModel m;
  m.T = day.horizon;
  m.n_pv = static_cast<int>(fleet.pv.size());
  m.n_bess = static_cast<int>(fleet.bess.size());
  m.n_flex = static_cast<int>(fleet.flex.size());
  m.tap_variable = !net.tap().fixed();
  m.block = 3 * m.n_pv + 5 * m.n_bess + m.n_flex + (m.tap_variable ? 1 : 0) + 1;

  const double s1 = net.s_base_1ph_kw();
  const double kwh_pu = s1 * day.dt_h;  // kWh represented by 1 pu over dt
  const auto& pairs = net.pairs();
  const int np = pairs.nodes();


  // ---- variables --------------------------------------------------------
  for (int t = 0; t < m.T; ++t) {
    for (int g = 0; g < m.n_pv; ++g)
      m.lp.add_var(block_var_name(m, fleet, g, t), 0.0,
                   std::max(0.0, day.pv_avail(g, t)), 0.0);
    for (int g = 0; g < m.n_pv; ++g) {
      const PvUnit& pv = fleet.pv[static_cast<size_t>(g)];
      double cap;
      if (pv.q_mode == QMode::PowerFactorCone)
        cap = pv.s_rated_kva / s1 * std::tan(std::acos(pv.pf_min));
      else
        cap = std::max(0.0, pv.q_max_kvar / s1);
      m.lp.add_var(block_var_name(m, fleet, m.n_pv + g, t), 0.0, cap,
                   cfg.c_q * kwh_pu);
    }
    for (int g = 0; g < m.n_pv; ++g) {
      const PvUnit& pv = fleet.pv[static_cast<size_t>(g)];
      double cap;
      if (pv.q_mode == QMode::PowerFactorCone)
        cap = pv.s_rated_kva / s1 * std::tan(std::acos(pv.pf_min));
      else
        cap = std::max(0.0, -pv.q_min_kvar / s1);
      m.lp.add_var(block_var_name(m, fleet, 2 * m.n_pv + g, t), 0.0, cap,
                   cfg.c_q * kwh_pu);
    }
    const double reg = cfg.reg_bess_frac * cfg.c_p * kwh_pu;
    for (int s = 0; s < m.n_bess; ++s)
      m.lp.add_var(block_var_name(m, fleet, 3 * m.n_pv + s, t), 0.0,
                   fleet.bess[static_cast<size_t>(s)].p_max_kw / s1, reg);
    for (int s = 0; s < m.n_bess; ++s)
      m.lp.add_var(block_var_name(m, fleet, 3 * m.n_pv + m.n_bess + s, t), 0.0,
                   fleet.bess[static_cast<size_t>(s)].p_max_kw / s1, reg);
    for (int s = 0; s < m.n_bess; ++s) {
      double smax = fleet.bess[static_cast<size_t>(s)].s_max_kva / s1;
      m.lp.add_var(block_var_name(m, fleet, 3 * m.n_pv + 2 * m.n_bess + s, t),
                   0.0, smax, reg);
    }
    for (int s = 0; s < m.n_bess; ++s) {
      double smax = fleet.bess[static_cast<size_t>(s)].s_max_kva / s1;
      m.lp.add_var(block_var_name(m, fleet, 3 * m.n_pv + 2 * m.n_bess + m.n_bess + s, t),
                   0.0, smax, reg);
    }
    for (int s = 0; s < m.n_bess; ++s) {
      const Bess& b = fleet.bess[static_cast<size_t>(s)];
      double cap_puh = b.e_cap_kwh / s1;
      m.lp.add_var(block_var_name(m, fleet, 3 * m.n_pv + 4 * m.n_bess + s, t),
                   b.soc_min * cap_puh, b.soc_max * cap_puh, 0.0);
    }
    for (int f = 0; f < m.n_flex; ++f) {
      double shift_pu = fleet.flex[static_cast<size_t>(f)].p_shift_kw / s1;
      double lo = (day.flex_base(f, t) >= shift_pu - 1e-12) ? -1.0 : 0.0;
      m.lp.add_var(block_var_name(m, fleet, 3 * m.n_pv + 5 * m.n_bess + f, t),
                   lo, 1.0, 0.0);
    }
    if (m.tap_variable)
      m.lp.add_var("rho:" + std::to_string(t), net.tap().tap_min,
                   net.tap().tap_max, 0.0);
    m.lp.add_var("loss:" + std::to_string(t), 0.0, kInf, cfg.c_p * kwh_pu);
  }
  m.lp.add_var("norm_v", 0.0, kInf, cfg.c_h);
  m.lp.add_var("norm_i", 0.0, kInf, cfg.c_h);
  m.lp.add_var("norm_vuf", 0.0, kInf, cfg.c_h);

  // integer structure
  for (int t = 0; t < m.T; ++t) {
    for (int f = 0; f < m.n_flex; ++f) {
      m.ints.int_vars.push_back(m.var_n(f, t));
      m.ints.int_range.push_back({-1, 1});
    }
    if (m.tap_variable) {
      m.ints.int_vars.push_back(m.var_rho(t));
      m.ints.int_range.push_back({net.tap().tap_min, net.tap().tap_max});
    }
    for (int s = 0; s < m.n_bess; ++s)
      m.ints.exclusive_pairs.push_back({m.var_pch(s, t), m.var_pdis(s, t)});
  }
  m.ints.max_nodes = cfg.milp_max_nodes;

  // ---- affine maps and objective ----------------------------------------
  Eigen::MatrixXcd bibc_c = net.topology().bibc.cast<cplx>();
  const cplx seq_a = std::polar(1.0, 2.0 * kPi / 3.0);
  std::vector<int> vuf_buses;
  for (int b = 1; b < static_cast<int>(net.buses().size()); ++b)
    if (net.buses()[static_cast<size_t>(b)].three_phase()) vuf_buses.push_back(b);

  m.period.resize(static_cast<size_t>(m.T));
  for (int t = 0; t < m.T; ++t) {
    auto& pm = m.period[static_cast<size_t>(t)];
    if (v_bar[static_cast<size_t>(t)].v.size() != np)
      throw ValidationError("assemble_opf: v_bar dimension mismatch");

    // injection constants (loads and flexible-load bases)
    Eigen::VectorXd p_const = -day.p_load.col(t);
    Eigen::VectorXd q_const = -day.q_load.col(t);
    for (int f = 0; f < m.n_flex; ++f) {
      p_const(idx.flex_pair[static_cast<size_t>(f)]) -= day.flex_base(f, t);
      q_const(idx.flex_pair[static_cast<size_t>(f)]) -=
          day.flex_base(f, t) * idx.flex_tan_phi[static_cast<size_t>(f)];
    }

    // per-variable injection effects
    std::vector<InjEffect> effect(static_cast<size_t>(m.block));
    for (int g = 0; g < m.n_pv; ++g) {
      effect[static_cast<size_t>(g)] = {idx.pv_pair[static_cast<size_t>(g)], 1.0, 0.0};
      effect[static_cast<size_t>(m.n_pv + g)] = {idx.pv_pair[static_cast<size_t>(g)], 0.0, 1.0};
      effect[static_cast<size_t>(2 * m.n_pv + g)] = {idx.pv_pair[static_cast<size_t>(g)], 0.0, -1.0};
    }
    for (int s = 0; s < m.n_bess; ++s) {
      int pair = idx.bess_pair[static_cast<size_t>(s)];
      effect[static_cast<size_t>(3 * m.n_pv + s)] = {pair, -1.0, 0.0};
      effect[static_cast<size_t>(3 * m.n_pv + m.n_bess + s)] = {pair, 1.0, 0.0};
      effect[static_cast<size_t>(3 * m.n_pv + 2 * m.n_bess + s)] = {pair, 0.0, 1.0};
      effect[static_cast<size_t>(3 * m.n_pv + 3 * m.n_bess + s)] = {pair, 0.0, -1.0};
    }
    for (int f = 0; f < m.n_flex; ++f) {
      double shift_pu = fleet.flex[static_cast<size_t>(f)].p_shift_kw / s1;
      effect[static_cast<size_t>(3 * m.n_pv + 5 * m.n_bess + f)] = {
          idx.flex_pair[static_cast<size_t>(f)], -shift_pu,
          -shift_pu * idx.flex_tan_phi[static_cast<size_t>(f)]};
    }

    // injection currents: I = (P - jQ) * w, w = 1/conj(v_bar)
    Eigen::VectorXcd w(np);
    for (int p = 0; p < np; ++p) {
      cplx vb = v_bar[static_cast<size_t>(t)].v(p);
      if (std::abs(vb) == 0.0)
        throw ValidationError("assemble_opf: zero entry in v_bar");
      w(p) = 1.0 / std::conj(vb);
    }
    Eigen::MatrixXcd inj_coef = Eigen::MatrixXcd::Zero(np, m.block);
    Eigen::VectorXcd inj_const(np);
    for (int p = 0; p < np; ++p)
      inj_const(p) = cplx(p_const(p), -q_const(p)) * w(p);
    for (int k = 0; k < m.block; ++k) {
      const auto& e = effect[static_cast<size_t>(k)];
      if (e.pair >= 0 && (e.dp != 0.0 || e.dq != 0.0))
        inj_coef(e.pair, k) += cplx(e.dp, -e.dq) * w(e.pair);
    }

    pm.i_coef = bibc_c * inj_coef;
    pm.i_const = bibc_c * inj_const;
    pm.v_coef = net.topology().bcbv * pm.i_coef;
    pm.v_const = net.topology().bcbv * pm.i_const;
    for (int p = 0; p < np; ++p) {
      int z = pairs.node_pairs[static_cast<size_t>(p)].second;
      pm.v_const(p) += net.slack_voltage(z, m.tap_variable ? 0 : net.tap().tap_min);
      if (m.tap_variable) {
        cplx base = net.tap().slack_v[static_cast<size_t>(z)];
        pm.v_coef(p, m.var_rho(t) - t * m.block) +=
            -net.tap().step_pu * base / std::abs(base);
      }
    }

    // negative-sequence rows for three-phase buses
    pm.vuf_bus = vuf_buses;
    pm.vneg_coef = Eigen::MatrixXcd::Zero(static_cast<int>(vuf_buses.size()), m.block);
    pm.vneg_const = Eigen::VectorXcd::Zero(static_cast<int>(vuf_buses.size()));
    for (size_t r = 0; r < vuf_buses.size(); ++r) {
      int bus = vuf_buses[r];
      std::array<cplx, 3> f{1.0, seq_a * seq_a, seq_a};
      for (int z = 0; z < 3; ++z) {
        int p = pairs.node_of(bus, z);
        pm.vneg_coef.row(static_cast<int>(r)) += (f[static_cast<size_t>(z)] / 3.0) * pm.v_coef.row(p);
        pm.vneg_const(static_cast<int>(r)) += (f[static_cast<size_t>(z)] / 3.0) * pm.v_const(p);
      }
    }

    // objective: curtailment constant; losses enter through the epigraph
    // variable supported by first-order cuts of the true loss
    for (int g = 0; g < m.n_pv; ++g) {
      m.lp.cost[static_cast<size_t>(m.var_pg(g, t))] -= cfg.c_p * kwh_pu;
      m.obj_offset += cfg.c_p * kwh_pu * std::max(0.0, day.pv_avail(g, t));
    }

    DerCommands base_cmd = prev_cmds ? (*prev_cmds)[static_cast<size_t>(t)]
                                     : DerCommands::zeros(fleet);
    const int base_tap = v_bar[static_cast<size_t>(t)].tap_position;
    InjectionState base_inj = build_injections(net, fleet, idx, day, t, base_cmd);
    FlowResult base_flow = bfs_power_flow(net, base_inj, base_tap, 1e-10, 300,
                                          &v_bar[static_cast<size_t>(t)].v);

    auto loss_with = [&](const InjectionState& inj, int tap) {
      FlowResult f =
          bfs_power_flow(net, inj, tap, 1e-10, 300, &base_flow.voltages.v);
      return total_loss(f);
    };

    LossBundle::Cut& cut = pm.loss_cut;
    cut.base = total_loss(base_flow);
    cut.grad = Eigen::VectorXd::Zero(m.block);
    cut.xbar = Eigen::VectorXd::Zero(m.block);
    for (int g = 0; g < m.n_pv; ++g) {
      cut.xbar(g) = base_cmd.pv_p(g);
      cut.xbar(m.n_pv + g) = std::max(0.0, base_cmd.pv_q(g));
      cut.xbar(2 * m.n_pv + g) = std::max(0.0, -base_cmd.pv_q(g));
    }
    for (int s = 0; s < m.n_bess; ++s) {
      cut.xbar(3 * m.n_pv + s) = std::max(0.0, -base_cmd.bess_p(s));
      cut.xbar(3 * m.n_pv + m.n_bess + s) = std::max(0.0, base_cmd.bess_p(s));
      cut.xbar(3 * m.n_pv + 2 * m.n_bess + s) = std::max(0.0, base_cmd.bess_q(s));
      cut.xbar(3 * m.n_pv + 3 * m.n_bess + s) = std::max(0.0, -base_cmd.bess_q(s));
    }
    for (int f = 0; f < m.n_flex; ++f)
      cut.xbar(3 * m.n_pv + 5 * m.n_bess + f) = base_cmd.shift(f);

    const double h = 1e-4;
    for (int k = 0; k < m.block; ++k) {
      if (m.tap_variable && k == m.var_rho(t) - t * m.block) {
        int lo_tap = std::max(net.tap().tap_min, base_tap - 1);
        int hi_tap = std::min(net.tap().tap_max, base_tap + 1);
        if (hi_tap > lo_tap)
          cut.grad(k) = (loss_with(base_inj, hi_tap) -
                         loss_with(base_inj, lo_tap)) /
                        (hi_tap - lo_tap);
        cut.xbar(k) = base_tap;
      } else {
        const auto& e = effect[static_cast<size_t>(k)];
        if (e.pair < 0 || (e.dp == 0.0 && e.dq == 0.0)) continue;
        InjectionState up = base_inj;
        up.p(e.pair) += h * e.dp;
        up.q(e.pair) += h * e.dq;
        InjectionState dn = base_inj;
        dn.p(e.pair) -= h * e.dp;
        dn.q(e.pair) -= h * e.dq;
        cut.grad(k) =
            (loss_with(up, base_tap) - loss_with(dn, base_tap)) / (2.0 * h);
      }
    }

    // epigraph rows: the current support and any accumulated history
    auto add_loss_row = [&](const LossBundle::Cut& c) {
      LinearProgram::Row row;
      for (int k = 0; k < m.block; ++k)
        if (c.grad(k) != 0.0) row.coeffs.push_back({t * m.block + k, c.grad(k)});
      row.coeffs.push_back({m.var_loss(t), -1.0});
      row.rel = Rel::LE;
      row.rhs = c.grad.dot(c.xbar) - c.base;
      m.lp.add_row(std::move(row));
    };
    add_loss_row(cut);
    if (bundle && static_cast<int>(bundle->per_period.size()) > t)
      for (const auto& c : bundle->per_period[static_cast<size_t>(t)])
        if ((c.xbar - cut.xbar).lpNorm<Eigen::Infinity>() > 1e-9)
          add_loss_row(c);
  }

  // ---- static rows -------------------------------------------------------
  for (int s = 0; s < m.n_bess; ++s) {
    const Bess& b = fleet.bess[static_cast<size_t>(s)];
    double cap_puh = b.e_cap_kwh / s1;
    (void)cap_puh;
    double e_start_puh = b.e_start_kwh / s1;
    for (int t = 0; t < m.T; ++t) {
      LinearProgram::Row row;
      row.coeffs.push_back({m.var_eb(s, t), 1.0});
      row.coeffs.push_back({m.var_pch(s, t), -b.eta * day.dt_h});
      row.coeffs.push_back({m.var_pdis(s, t), day.dt_h / b.eta});
      if (t > 0) row.coeffs.push_back({m.var_eb(s, t - 1), -1.0});
      row.rel = Rel::EQ;
      row.rhs = (t == 0) ? e_start_puh : 0.0;
      m.lp.add_row(std::move(row));

      m.lp.add_row({{m.var_pch(s, t), 1.0}, {m.var_pdis(s, t), 1.0}}, Rel::LE,
                   b.p_max_kw / s1);

      double smax = b.s_max_kva / s1;
      if (smax > 0.0) {
        auto faces = polygonize_quadratic(smax, cfg.der_polygon_sides);
        for (const auto& hp : faces) {
          if (hp.a_p < -1e-12) continue;  // p >= 0, left faces never bind
          m.lp.add_row({{m.var_pch(s, t), hp.a_p},
                        {m.var_qbp(s, t), hp.a_q},
                        {m.var_qbn(s, t), -hp.a_q}},
                       Rel::LE, hp.rhs);
          m.lp.add_row({{m.var_pdis(s, t), hp.a_p},
                        {m.var_qbp(s, t), hp.a_q},
                        {m.var_qbn(s, t), -hp.a_q}},
                       Rel::LE, hp.rhs);
        }
      }
    }
  }
  for (int g = 0; g < m.n_pv; ++g) {
    const PvUnit& pv = fleet.pv[static_cast<size_t>(g)];
    if (pv.q_mode != QMode::PowerFactorCone) continue;
    double tanphi = std::tan(std::acos(pv.pf_min));
    for (int t = 0; t < m.T; ++t)
      m.lp.add_row({{m.var_qgp(g, t), 1.0},
                    {m.var_qgn(g, t), 1.0},
                    {m.var_pg(g, t), -tanphi}},
                   Rel::LE, 0.0);
  }
  for (int f = 0; f < m.n_flex; ++f) {
    LinearProgram::Row row;
    for (int t = 0; t < m.T; ++t) row.coeffs.push_back({m.var_n(f, t), 1.0});
    row.rel = Rel::EQ;
    row.rhs = 0.0;
    m.lp.add_row(std::move(row));
  }

  for (const auto& cut : pool.cuts) materialize_cut(m, net, cfg, margins, cut);
  return m;
}

OpfSolution solve_deterministic_opf(const NetworkModel& net,
                                    const DerFleet& fleet,
                                    const FleetIndex& idx,
                                    const DayContext& day,
                                    const OpfConfig& cfg,
                                    const Margins& margins) {
  cfg.validate();
  const int T = day.horizon;
  const auto& pairs = net.pairs();

  // flat start: slack profile at the neutral tap
  int tap0 = std::clamp(0, net.tap().tap_min, net.tap().tap_max);
  std::vector<VoltageState> v_bar(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto& vs = v_bar[static_cast<size_t>(t)];
    vs.tap_position = tap0;
    vs.v.resize(pairs.nodes());
    for (int p = 0; p < pairs.nodes(); ++p)
      vs.v(p) = net.slack_voltage(pairs.node_pairs[static_cast<size_t>(p)].second, tap0);
  }

  CutPool pool;
  OpfSolution out;
  out.inner_iterations = 0;
  Solution milp_sol;
  OpfModel model;
  SimplexState warm;
  bool have_warm = false;
  int warm_rows = 0;
  std::vector<DerCommands> prev_cmds;

  bool ints_frozen = false;
  std::vector<double> frozen_int_values;
  for (int inner = 1; inner <= cfg.inner_max_iter; ++inner) {
    out.inner_iterations = inner;
    model = assemble_opf(net, fleet, idx, day, cfg, margins, v_bar, pool,
                         prev_cmds.empty() ? nullptr : &prev_cmds);
    if (ints_frozen) {
      for (size_t k = 0; k < model.ints.int_vars.size(); ++k) {
        int j = model.ints.int_vars[k];
        model.lp.lo[static_cast<size_t>(j)] = frozen_int_values[k];
        model.lp.hi[static_cast<size_t>(j)] = frozen_int_values[k];
      }
      model.ints.int_vars.clear();
      model.ints.int_range.clear();
    }

    for (int round = 0; round <= cfg.max_cut_rounds; ++round) {
      SimplexOptions sopts;
      if (have_warm && warm_rows <= model.lp.num_rows()) {
        extend_state_for_rows(warm, model.lp.num_vars(), model.lp.num_rows());
        sopts.warm = &warm;
      }
      milp_sol = solve_milp(model.lp, model.ints, sopts);
      if ((milp_sol.status != SolveStatus::Optimal &&
           milp_sol.status != SolveStatus::NodeLimit) ||
          milp_sol.x.empty())
        throw ConvergenceError(std::string("OPF subproblem ") +
                               to_string(milp_sol.status));
      if (milp_sol.basis) {
        warm = *milp_sol.basis;
        warm_rows = model.lp.num_rows();
        have_warm = true;
      }
      auto fresh = scan_violations(model, net, cfg, margins, milp_sol.x, pool);
      if (fresh.empty()) break;
      if (round == cfg.max_cut_rounds)
        throw ConvergenceError("cut generation did not settle");
      for (const auto& cut : fresh) {
        pool.cuts.push_back(cut);
        materialize_cut(model, net, cfg, margins, cut);
      }
    }

    // extract setpoints
    out.p_g.resize(model.n_pv, T);
    out.q_g.resize(model.n_pv, T);
    out.p_ch.resize(model.n_bess, T);
    out.p_dis.resize(model.n_bess, T);
    out.q_b.resize(model.n_bess, T);
    out.e_b.resize(model.n_bess, T);
    out.n_shift.resize(model.n_flex, T);
    out.tap.assign(static_cast<size_t>(T), net.tap().fixed() ? net.tap().tap_min : 0);
    const auto& x = milp_sol.x;
    for (int t = 0; t < T; ++t) {
      for (int g = 0; g < model.n_pv; ++g) {
        out.p_g(g, t) = x[static_cast<size_t>(model.var_pg(g, t))];
        out.q_g(g, t) = x[static_cast<size_t>(model.var_qgp(g, t))] -
                        x[static_cast<size_t>(model.var_qgn(g, t))];
      }
      for (int s = 0; s < model.n_bess; ++s) {
        out.p_ch(s, t) = x[static_cast<size_t>(model.var_pch(s, t))];
        out.p_dis(s, t) = x[static_cast<size_t>(model.var_pdis(s, t))];
        // exclusivity tolerance cleanup
        if (out.p_ch(s, t) > 0 && out.p_dis(s, t) > 0) {
          if (out.p_ch(s, t) >= out.p_dis(s, t)) out.p_dis(s, t) = 0.0;
          else out.p_ch(s, t) = 0.0;
        }
        out.q_b(s, t) = x[static_cast<size_t>(model.var_qbp(s, t))] -
                        x[static_cast<size_t>(model.var_qbn(s, t))];
        out.e_b(s, t) = x[static_cast<size_t>(model.var_eb(s, t))];
      }
      for (int f = 0; f < model.n_flex; ++f)
        out.n_shift(f, t) =
            static_cast<int>(std::lround(x[static_cast<size_t>(model.var_n(f, t))]));
      if (model.tap_variable)
        out.tap[static_cast<size_t>(t)] =
            static_cast<int>(std::lround(x[static_cast<size_t>(model.var_rho(t))]));
    }
    out.slack_v = x[static_cast<size_t>(model.var_mv())];
    out.slack_i = x[static_cast<size_t>(model.var_mi())];
    out.slack_vuf = x[static_cast<size_t>(model.var_mvuf())];
    out.objective = milp_sol.objective + model.obj_offset;

    // project onto the AC-feasible manifold with exact power flows
    out.flows.clear();
    out.flows.reserve(static_cast<size_t>(T));
    prev_cmds.clear();
    double delta = 0.0;
    for (int t = 0; t < T; ++t) {
      prev_cmds.push_back(out.commands_at(t));
      InjectionState inj =
          build_injections(net, fleet, idx, day, t, prev_cmds.back());
      FlowResult flow = bfs_power_flow(net, inj, out.tap[static_cast<size_t>(t)],
                                       1e-10, 200,
                                       &v_bar[static_cast<size_t>(t)].v);
      delta = std::max(delta,
                       (flow.voltages.v - v_bar[static_cast<size_t>(t)].v)
                           .cwiseAbs()
                           .maxCoeff());
      v_bar[static_cast<size_t>(t)] = flow.voltages;
      out.flows.push_back(std::move(flow));
    }
    if (std::getenv("FEEDEROPT_OPF_TRACE")) {
      std::fprintf(stderr,
                   "[opf] inner=%d delta=%.3e obj=%.6f cuts=%zu nodes=%d\n",
                   inner, delta, milp_sol.objective + model.obj_offset,
                   pool.cuts.size(), milp_sol.nodes);
      for (int t = 0; t < std::min(T, 8); ++t) {
        std::fprintf(stderr, "  t=%d", t);
        for (int g = 0; g < model.n_pv; ++g)
          std::fprintf(stderr, " pg=%.4f qg=%.4f", out.p_g(g, t), out.q_g(g, t));
        for (int f = 0; f < model.n_flex; ++f)
          std::fprintf(stderr, " n=%d", out.n_shift(f, t));
        std::fprintf(stderr, " |V|=%.5f\n",
                     out.flows[static_cast<size_t>(t)].voltages.v.cwiseAbs().maxCoeff());
      }
    }
    if (delta < cfg.inner_tol) {
      out.converged = true;
      break;
    }
    if (!ints_frozen && inner >= cfg.freeze_int_after) {
      // lock discrete decisions at the values just obtained
      ints_frozen = true;
      frozen_int_values.clear();
      for (int j : model.ints.int_vars)
        frozen_int_values.push_back(
            std::round(milp_sol.x[static_cast<size_t>(j)]));
    }
  }

  out.pv_avail = day.pv_avail;
  out.objective_exact = evaluate_objective(net, out, cfg);
  return out;
}

double evaluate_objective(const NetworkModel& net, const OpfSolution& sol,
                          const OpfConfig& cfg) {
  const double s1 = net.s_base_1ph_kw();
  const int T = static_cast<int>(sol.flows.size());
  const double kwh_pu = s1 * cfg.dt_h;
  double cost = 0.0;
  double eta_v = 0.0, eta_i = 0.0, eta_vuf = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int g = 0; g < sol.p_g.rows(); ++g) {
      cost += cfg.c_p * kwh_pu * std::max(0.0, sol.pv_avail(g, t) - sol.p_g(g, t));
      cost += cfg.c_q * kwh_pu * std::abs(sol.q_g(g, t));
    }
    const FlowResult& flow = sol.flows[static_cast<size_t>(t)];
    cost += cfg.c_p * kwh_pu * total_loss(flow);

    for (int p = 0; p < flow.voltages.v.size(); ++p) {
      double mag = std::abs(flow.voltages.v(p));
      eta_v = std::max({eta_v, mag - cfg.v_max, cfg.v_min - mag});
    }
    for (int bp = 0; bp < flow.branch_currents.size(); ++bp) {
      auto [br, z] = net.pairs().branch_pairs[static_cast<size_t>(bp)];
      (void)z;
      eta_i = std::max(eta_i, std::abs(flow.branch_currents(bp)) -
                                  net.branches()[static_cast<size_t>(br)].ampacity_pu);
    }
    if (cfg.enable_vuf) {
      for (const auto& bus : net.buses()) {
        if (bus.is_slack || !bus.three_phase()) continue;
        int bi = net.bus_index(bus.id);
        std::array<cplx, 3> v{flow.voltages.at(net, bi, 0),
                              flow.voltages.at(net, bi, 1),
                              flow.voltages.at(net, bi, 2)};
        eta_vuf = std::max(eta_vuf,
                           symmetrical_vuf(v).v_neg_mag - cfg.vuf_max_pct / 100.0);
      }
    }
  }
  cost += cfg.c_h * (std::max(0.0, eta_v) + std::max(0.0, eta_i) +
                     std::max(0.0, eta_vuf));
  return cost;
}

}  // namespace feederopt
