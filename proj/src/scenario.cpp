#include "feederopt/scenario.hpp"

#include "feederopt/rng.hpp"

namespace feederopt {

namespace {

// demand shape: overnight base with morning and evening humps
double load_shape(double h) {
  return 0.38 + 0.30 * std::exp(-(h - 8.0) * (h - 8.0) / 6.0) +
         0.62 * std::exp(-(h - 19.0) * (h - 19.0) / 9.0);
}

// clear-sky solar bell, zero outside daylight, peak 1.0 at noon
double pv_shape(double h) {
  if (h < 5.5 || h > 18.5) return 0.0;
  double s = std::sin(kPi * (h - 5.5) / 13.0);
  return std::max(0.0, std::pow(s, 1.4));
}

}  // namespace

ScenarioSet generate_synthetic_scenarios(const SyntheticSpec& spec,
                                         std::uint64_t seed) {
  ScenarioSet out;
  out.dt_h = spec.dt_h;
  out.horizon = spec.horizon;
  out.series.resize(spec.days * spec.horizon,
                    static_cast<int>(spec.columns.size()));
  for (const auto& col : spec.columns) out.columns.push_back(col.id);

  double shape_max = 0.0;
  for (int t = 0; t < spec.horizon; ++t)
    shape_max = std::max(shape_max, load_shape(t * spec.dt_h));

  for (size_t c = 0; c < spec.columns.size(); ++c) {
    const auto& col = spec.columns[c];
    Rng rng(Rng::derive(seed, "scencol:" + col.id));
    for (int d = 0; d < spec.days; ++d) {
      double day_amp;
      if (col.kind == SyntheticSpec::Column::Kind::Pv) {
        double u = rng.uniform();
        day_amp = 1.0 - spec.day_spread * u * u;  // mostly clear days
      } else {
        day_amp = 1.0 + spec.day_spread * 0.4 * rng.uniform(-1.0, 1.0);
      }
      for (int t = 0; t < spec.horizon; ++t) {
        double h = t * spec.dt_h;
        double base = (col.kind == SyntheticSpec::Column::Kind::Pv)
                          ? pv_shape(h)
                          : load_shape(h) / shape_max;
        double v = col.peak_kw * day_amp * base *
                   (1.0 + spec.noise * rng.uniform(-1.0, 1.0));
        out.series(d * spec.horizon + t, static_cast<int>(c)) =
            std::max(0.0, v);
      }
    }
  }

  int test = std::max(0, std::min(spec.test_days, spec.days));
  out.day_tags.assign(static_cast<size_t>(spec.days), DayTag::Train);
  for (int d = spec.days - test; d < spec.days; ++d)
    out.day_tags[static_cast<size_t>(d)] = DayTag::Test;
  return out;
}

FleetIndex build_fleet_index(const NetworkModel& net, const DerFleet& fleet) {
  FleetIndex idx;
  auto resolve = [&](int bus_id, int phase, const std::string& what) {
    int bi = net.bus_index(bus_id);
    if (bi < 0)
      throw ValidationError(what + ": unknown bus id " + std::to_string(bus_id));
    int pair = net.pairs().node_of(bi, phase);
    if (pair < 0)
      throw ValidationError(what + ": phase " + phase_letter(phase) +
                            " absent at bus id " + std::to_string(bus_id));
    return pair;
  };
  for (const auto& pv : fleet.pv)
    idx.pv_pair.push_back(resolve(pv.bus, pv.phase, "pv " + pv.id));
  for (const auto& b : fleet.bess) {
    b.validate();
    idx.bess_pair.push_back(resolve(b.bus, b.phase, "bess " + b.id));
  }
  for (const auto& f : fleet.flex) {
    idx.flex_pair.push_back(resolve(f.bus, f.phase, "flexload " + f.id));
    idx.flex_tan_phi.push_back(std::tan(std::acos(f.power_factor)));
  }
  return idx;
}

DayContext build_day_context(const NetworkModel& net, const DerFleet& fleet,
                             const ScenarioSet& scen, int day) {
  if (day < 0 || day >= scen.days())
    throw ValidationError("day index out of range");
  DayContext ctx;
  ctx.day = day;
  ctx.horizon = scen.horizon;
  ctx.dt_h = scen.dt_h;
  const int np = net.pairs().nodes();
  const double s1 = net.s_base_1ph_kw();
  ctx.p_load = Eigen::MatrixXd::Zero(np, scen.horizon);
  ctx.q_load = Eigen::MatrixXd::Zero(np, scen.horizon);
  ctx.flex_base =
      Eigen::MatrixXd::Zero(static_cast<int>(fleet.flex.size()), scen.horizon);
  ctx.pv_avail =
      Eigen::MatrixXd::Zero(static_cast<int>(fleet.pv.size()), scen.horizon);

  auto col_of = [&](const std::string& id, const std::string& what) {
    int c = scen.column(id);
    if (c < 0)
      throw ValidationError(what + ": profile column '" + id + "' not found");
    return c;
  };
  for (const auto& ld : fleet.loads) {
    int bi = net.bus_index(ld.bus);
    if (bi < 0)
      throw ValidationError("load: unknown bus id " + std::to_string(ld.bus));
    int pair = net.pairs().node_of(bi, ld.phase);
    if (pair < 0)
      throw ValidationError("load: phase " + std::string(1, phase_letter(ld.phase)) +
                            " absent at bus id " + std::to_string(ld.bus));
    int c = col_of(ld.profile, "load at bus " + std::to_string(ld.bus));
    double tanphi = std::tan(std::acos(ld.power_factor));
    for (int t = 0; t < scen.horizon; ++t) {
      double p = scen.at(c, day, t) / s1;
      ctx.p_load(pair, t) += p;
      ctx.q_load(pair, t) += p * tanphi;
    }
  }
  for (size_t g = 0; g < fleet.pv.size(); ++g) {
    int c = col_of(fleet.pv[g].profile, "pv " + fleet.pv[g].id);
    for (int t = 0; t < scen.horizon; ++t)
      ctx.pv_avail(static_cast<int>(g), t) = scen.at(c, day, t) / s1;
  }
  for (size_t f = 0; f < fleet.flex.size(); ++f) {
    int c = col_of(fleet.flex[f].base_profile, "flexload " + fleet.flex[f].id);
    for (int t = 0; t < scen.horizon; ++t)
      ctx.flex_base(static_cast<int>(f), t) = scen.at(c, day, t) / s1;
  }
  return ctx;
}

DerCommands DerCommands::zeros(const DerFleet& fleet) {
  DerCommands c;
  c.pv_p = Eigen::VectorXd::Zero(static_cast<int>(fleet.pv.size()));
  c.pv_q = Eigen::VectorXd::Zero(static_cast<int>(fleet.pv.size()));
  c.bess_p = Eigen::VectorXd::Zero(static_cast<int>(fleet.bess.size()));
  c.bess_q = Eigen::VectorXd::Zero(static_cast<int>(fleet.bess.size()));
  c.shift = Eigen::VectorXi::Zero(static_cast<int>(fleet.flex.size()));
  return c;
}

InjectionState build_injections(const NetworkModel& net, const DerFleet& fleet,
                                const FleetIndex& idx, const DayContext& day,
                                int t, const DerCommands& cmd) {
  InjectionState inj = InjectionState::zeros(net);
  inj.p = -day.p_load.col(t);
  inj.q = -day.q_load.col(t);
  for (size_t g = 0; g < fleet.pv.size(); ++g) {
    inj.p(idx.pv_pair[g]) += cmd.pv_p(static_cast<int>(g));
    inj.q(idx.pv_pair[g]) += cmd.pv_q(static_cast<int>(g));
  }
  for (size_t s = 0; s < fleet.bess.size(); ++s) {
    inj.p(idx.bess_pair[s]) += cmd.bess_p(static_cast<int>(s));
    inj.q(idx.bess_pair[s]) += cmd.bess_q(static_cast<int>(s));
  }
  for (size_t f = 0; f < fleet.flex.size(); ++f) {
    double p_flex = day.flex_base(static_cast<int>(f), t) +
                    cmd.shift(static_cast<int>(f)) *
                        fleet.flex[f].p_shift_kw / net.s_base_1ph_kw();
    inj.p(idx.flex_pair[f]) -= p_flex;
    inj.q(idx.flex_pair[f]) -= p_flex * idx.flex_tan_phi[f];
  }
  return inj;
}

}  // namespace feederopt
