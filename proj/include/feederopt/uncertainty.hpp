#pragma once

// Monte-Carlo evaluation of chance-constraint tightenings and the outer
// loop that alternates the deterministic OPF with the margin update.
//
// Quantile convention: the alpha-quantile of n samples is the order
// statistic at 1-based index ceil(alpha * n). Margins are clamped at zero.

#include <cstdint>
#include <string>
#include <vector>

#include "feederopt/opf.hpp"
#include "feederopt/scenario.hpp"

namespace feederopt {

struct ForecastErrorModel {
  enum class Family { None, Uniform, Normal, Empirical };
  enum class Mode { Multiplicative, Additive };
  enum class Correlation { Perfect, Independent };

  Family family = Family::None;
  Mode mode = Mode::Multiplicative;
  Correlation correlation = Correlation::Perfect;
  double half_width = 0.0;          // uniform on [-half_width, half_width]
  double sigma = 0.0;               // normal
  std::vector<double> empirical;    // raw error table

  // availability under an error draw, clamped to [0, rated]
  double apply(double avail_pu, double rated_pu, double e) const {
    double v = (mode == Mode::Multiplicative) ? avail_pu * (1.0 + e)
                                              : avail_pu + e * rated_pu;
    return std::min(std::max(v, 0.0), rated_pu);
  }
};

// One error value per (pv unit, period) per sample. Under perfect spatial
// correlation all units of a sample share the same per-period draw.
struct ErrorDraws {
  std::vector<Eigen::MatrixXd> e;  // n samples of (units x periods)
  int samples() const { return static_cast<int>(e.size()); }
};

ErrorDraws sample_forecast_errors(const ForecastErrorModel& model, int n,
                                  int units, int periods, std::uint64_t seed);

struct CcConfig {
  double epsilon = 0.05;
  int n_samples = 1000;
  double outer_tol_v = 1e-3;   // pu
  double outer_tol_i = 1e-3;   // pu
  int outer_max_iter = 10;
  double acceleration = 0.5;   // engaged after an oscillation is detected
  std::uint64_t seed = 1;
  ForecastErrorModel error;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 0.5))
      throw ValidationError("CcConfig: epsilon outside (0, 0.5)");
    if (n_samples < static_cast<int>(std::ceil(10.0 / epsilon)))
      throw ValidationError("CcConfig: n_samples below 10/epsilon");
  }
};

// Monte-Carlo margins at fixed DER setpoints: one exact power flow per
// sample with the optimal commands held fixed (PV active power capped by
// the sampled availability), then per-(entity, t) empirical quantiles.
// Samples whose power flow diverges are dropped; more than 5% dropped is a
// hard error.
Margins empirical_margins(const NetworkModel& net, const DerFleet& fleet,
                          const FleetIndex& idx, const DayContext& day,
                          const OpfSolution& sol,
                          const ForecastErrorModel& model,
                          const ErrorDraws& draws, double eps);

struct CcResult {
  OpfSolution sol;
  Margins margins;
  int outer_iterations = 0;
  bool converged = false;
  std::string diagnostic;
  std::vector<double> margin_change_history;
};

CcResult solve_cc_opf(const NetworkModel& net, const DerFleet& fleet,
                      const FleetIndex& idx, const DayContext& day,
                      const OpfConfig& cfg, const CcConfig& cc);

// Ex-post validation: fresh draws at the converged solution, per-constraint
// empirical violation frequencies of the raw voltage/current limits.
struct ViolationStats {
  double worst_frequency = 0.0;   // max over all (entity, t) constraints
  int samples = 0;
  int dropped = 0;
};
ViolationStats validate_chance_constraints(const NetworkModel& net,
                                           const DerFleet& fleet,
                                           const FleetIndex& idx,
                                           const DayContext& day,
                                           const OpfSolution& sol,
                                           const OpfConfig& cfg,
                                           const ForecastErrorModel& model,
                                           int n, std::uint64_t seed);

}  // namespace feederopt
