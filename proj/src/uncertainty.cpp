#include "feederopt/uncertainty.hpp"

#include <algorithm>

#include "feederopt/rng.hpp"

namespace feederopt {

namespace {

double draw_one(const ForecastErrorModel& model, Rng& rng) {
  switch (model.family) {
    case ForecastErrorModel::Family::None:
      return 0.0;
    case ForecastErrorModel::Family::Uniform:
      return rng.uniform(-model.half_width, model.half_width);
    case ForecastErrorModel::Family::Normal:
      return rng.normal(0.0, model.sigma);
    case ForecastErrorModel::Family::Empirical: {
      if (model.empirical.empty())
        throw ValidationError("empirical error model has no samples");
      size_t i = static_cast<size_t>(rng.next_u64() % model.empirical.size());
      return model.empirical[i];
    }
  }
  return 0.0;
}

// order statistic at 1-based index ceil(alpha * n) of a sorted copy
double quantile_sorted(const std::vector<double>& sorted, double alpha) {
  int n = static_cast<int>(sorted.size());
  int k = static_cast<int>(std::ceil(alpha * n));
  k = std::max(1, std::min(n, k));
  return sorted[static_cast<size_t>(k - 1)];
}

// exact power flow at the solution's commands under one availability draw
FlowResult sample_flow(const NetworkModel& net, const DerFleet& fleet,
                       const FleetIndex& idx, const DayContext& day,
                       const OpfSolution& sol,
                       const ForecastErrorModel& model,
                       const Eigen::MatrixXd& err, int t) {
  DerCommands cmd = sol.commands_at(t);
  const double s1 = net.s_base_1ph_kw();
  for (int g = 0; g < cmd.pv_p.size(); ++g) {
    double rated = fleet.pv[static_cast<size_t>(g)].s_rated_kva / s1;
    double avail = model.apply(day.pv_avail(g, t), rated, err(g, t));
    cmd.pv_p(g) = std::min(cmd.pv_p(g), avail);
  }
  InjectionState inj = build_injections(net, fleet, idx, day, t, cmd);
  const Eigen::VectorXcd* warm = nullptr;
  if (static_cast<int>(sol.flows.size()) > t)
    warm = &sol.flows[static_cast<size_t>(t)].voltages.v;
  return bfs_power_flow(net, inj, sol.tap[static_cast<size_t>(t)], 1e-9, 150,
                        warm);
}

}  // namespace

ErrorDraws sample_forecast_errors(const ForecastErrorModel& model, int n,
                                  int units, int periods, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample_forecast_errors: n < 1");
  ErrorDraws out;
  out.e.reserve(static_cast<size_t>(n));
  Rng rng(Rng::derive(seed, "forecast-errors"));
  for (int s = 0; s < n; ++s) {
    Eigen::MatrixXd m(units, periods);
    if (model.correlation == ForecastErrorModel::Correlation::Perfect) {
      for (int t = 0; t < periods; ++t) {
        double e = draw_one(model, rng);
        for (int g = 0; g < units; ++g) m(g, t) = e;
      }
    } else {
      for (int t = 0; t < periods; ++t)
        for (int g = 0; g < units; ++g) m(g, t) = draw_one(model, rng);
    }
    out.e.push_back(std::move(m));
  }
  return out;
}

Margins empirical_margins(const NetworkModel& net, const DerFleet& fleet,
                          const FleetIndex& idx, const DayContext& day,
                          const OpfSolution& sol,
                          const ForecastErrorModel& model,
                          const ErrorDraws& draws, double eps) {
  const int T = day.horizon;
  const int np = net.pairs().nodes();
  const int nbp = net.pairs().branches();
  if (static_cast<int>(sol.flows.size()) != T)
    throw ValidationError("empirical_margins: solution lacks base-case flows");

  // per (entity, t): magnitudes over surviving samples
  std::vector<std::vector<double>> v_mag(static_cast<size_t>(np * T));
  std::vector<std::vector<double>> i_mag(static_cast<size_t>(nbp * T));
  const int n = draws.samples();
  for (auto& v : v_mag) v.reserve(static_cast<size_t>(n));
  for (auto& v : i_mag) v.reserve(static_cast<size_t>(n));

  int dropped = 0;
  for (int s = 0; s < n; ++s) {
    // a sample is dropped as a whole if any period diverges
    std::vector<FlowResult> flows;
    flows.reserve(static_cast<size_t>(T));
    bool ok = true;
    for (int t = 0; t < T && ok; ++t) {
      try {
        flows.push_back(
            sample_flow(net, fleet, idx, day, sol, model, draws.e[static_cast<size_t>(s)], t));
      } catch (const ConvergenceError&) {
        ok = false;
      }
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    for (int t = 0; t < T; ++t) {
      const FlowResult& f = flows[static_cast<size_t>(t)];
      for (int p = 0; p < np; ++p)
        v_mag[static_cast<size_t>(p * T + t)].push_back(std::abs(f.voltages.v(p)));
      for (int bp = 0; bp < nbp; ++bp)
        i_mag[static_cast<size_t>(bp * T + t)].push_back(std::abs(f.branch_currents(bp)));
    }
  }
  if (dropped * 20 > n)
    throw ConvergenceError("empirical_margins: more than 5% of samples diverged (" +
                           std::to_string(dropped) + "/" + std::to_string(n) + ")");

  Margins out = Margins::zeros(net, T);
  for (int t = 0; t < T; ++t) {
    const FlowResult& base = sol.flows[static_cast<size_t>(t)];
    for (int p = 0; p < np; ++p) {
      auto& samples = v_mag[static_cast<size_t>(p * T + t)];
      if (samples.empty()) continue;
      std::sort(samples.begin(), samples.end());
      double v0 = std::abs(base.voltages.v(p));
      out.v_upper(p, t) = std::max(0.0, quantile_sorted(samples, 1.0 - eps) - v0);
      out.v_lower(p, t) = std::max(0.0, v0 - quantile_sorted(samples, eps));
    }
    for (int bp = 0; bp < nbp; ++bp) {
      auto& samples = i_mag[static_cast<size_t>(bp * T + t)];
      if (samples.empty()) continue;
      std::sort(samples.begin(), samples.end());
      double i0 = std::abs(base.branch_currents(bp));
      out.i_upper(bp, t) = std::max(0.0, quantile_sorted(samples, 1.0 - eps) - i0);
    }
  }
  return out;
}

CcResult solve_cc_opf(const NetworkModel& net, const DerFleet& fleet,
                      const FleetIndex& idx, const DayContext& day,
                      const OpfConfig& cfg, const CcConfig& cc) {
  cc.validate();
  CcResult res;
  res.margins = Margins::zeros(net, day.horizon);

  ErrorDraws draws = sample_forecast_errors(
      cc.error, cc.n_samples, static_cast<int>(fleet.pv.size()), day.horizon,
      cc.seed);

  double alpha = 1.0;
  double prev_direction = 0.0;
  for (int outer = 1; outer <= cc.outer_max_iter; ++outer) {
    res.outer_iterations = outer;
    res.sol = solve_deterministic_opf(net, fleet, idx, day, cfg, res.margins);
    Margins fresh =
        empirical_margins(net, fleet, idx, day, res.sol, cc.error, draws, cc.epsilon);

    double change = fresh.max_abs_diff(res.margins);
    res.margin_change_history.push_back(change);
    double change_v =
        std::max((fresh.v_upper - res.margins.v_upper).cwiseAbs().maxCoeff(),
                 (fresh.v_lower - res.margins.v_lower).cwiseAbs().maxCoeff());
    double change_i = fresh.i_upper.size()
                          ? (fresh.i_upper - res.margins.i_upper).cwiseAbs().maxCoeff()
                          : 0.0;
    if (change_v < cc.outer_tol_v && change_i < cc.outer_tol_i) {
      res.converged = true;
      return res;
    }

    // oscillation watch: when the aggregate update flips direction, damp
    double direction = (fresh.v_upper - res.margins.v_upper).sum() +
                       (fresh.v_lower - res.margins.v_lower).sum() +
                       (fresh.i_upper.size()
                            ? (fresh.i_upper - res.margins.i_upper).sum()
                            : 0.0);
    if (prev_direction != 0.0 && direction * prev_direction < 0.0)
      alpha = cc.acceleration;
    prev_direction = direction;

    auto blend = [&](Eigen::MatrixXd& cur, const Eigen::MatrixXd& next) {
      cur = (cur + alpha * (next - cur)).cwiseMax(0.0);
    };
    blend(res.margins.v_upper, fresh.v_upper);
    blend(res.margins.v_lower, fresh.v_lower);
    if (res.margins.i_upper.size()) blend(res.margins.i_upper, fresh.i_upper);
  }
  res.converged = false;
  res.diagnostic = "outer loop hit the iteration cap; cycling suspected";
  return res;
}

ViolationStats validate_chance_constraints(const NetworkModel& net,
                                           const DerFleet& fleet,
                                           const FleetIndex& idx,
                                           const DayContext& day,
                                           const OpfSolution& sol,
                                           const OpfConfig& cfg,
                                           const ForecastErrorModel& model,
                                           int n, std::uint64_t seed) {
  const int T = day.horizon;
  const int np = net.pairs().nodes();
  const int nbp = net.pairs().branches();
  ErrorDraws draws = sample_forecast_errors(
      model, n, static_cast<int>(fleet.pv.size()), T, seed);

  Eigen::MatrixXi v_up_cnt = Eigen::MatrixXi::Zero(np, T);
  Eigen::MatrixXi v_lo_cnt = Eigen::MatrixXi::Zero(np, T);
  Eigen::MatrixXi i_cnt = Eigen::MatrixXi::Zero(nbp, T);
  int kept = 0, dropped = 0;
  for (int s = 0; s < n; ++s) {
    std::vector<FlowResult> flows;
    bool ok = true;
    for (int t = 0; t < T && ok; ++t) {
      try {
        flows.push_back(sample_flow(net, fleet, idx, day, sol, model,
                                    draws.e[static_cast<size_t>(s)], t));
      } catch (const ConvergenceError&) {
        ok = false;
      }
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    ++kept;
    for (int t = 0; t < T; ++t) {
      const FlowResult& f = flows[static_cast<size_t>(t)];
      for (int p = 0; p < np; ++p) {
        double mag = std::abs(f.voltages.v(p));
        if (mag > cfg.v_max) v_up_cnt(p, t) += 1;
        if (mag < cfg.v_min) v_lo_cnt(p, t) += 1;
      }
      for (int bp = 0; bp < nbp; ++bp) {
        auto [br, z] = net.pairs().branch_pairs[static_cast<size_t>(bp)];
        (void)z;
        if (std::abs(f.branch_currents(bp)) >
            net.branches()[static_cast<size_t>(br)].ampacity_pu)
          i_cnt(bp, t) += 1;
      }
    }
  }

  ViolationStats stats;
  stats.samples = kept;
  stats.dropped = dropped;
  if (kept == 0) throw ConvergenceError("validation: all samples diverged");
  int worst = std::max({v_up_cnt.maxCoeff(), v_lo_cnt.maxCoeff(), i_cnt.size() ? i_cnt.maxCoeff() : 0});
  stats.worst_frequency = static_cast<double>(worst) / kept;
  return stats;
}

}  // namespace feederopt
