#pragma once

// Distributed energy resource models: PV inverters, battery storage and
// shiftable loads, with their feasibility envelopes and state transitions.
// Ratings are kept in physical units (kW/kvar/kWh); conversion to pu happens
// where the values enter network equations.

#include <string>
#include <vector>

#include "feederopt/common.hpp"

namespace feederopt {

enum class QMode { Box, PowerFactorCone };

struct PvUnit {
  std::string id;
  int bus = -1;                 // external bus id
  int phase = 0;
  double s_rated_kva = 0.0;
  std::string profile;          // availability column id
  QMode q_mode = QMode::PowerFactorCone;
  double pf_min = 0.9;          // cone mode
  double q_min_kvar = 0.0;      // box mode
  double q_max_kvar = 0.0;

  // reactive limit magnitude for a given active dispatch (kvar)
  double q_limit_kvar(double p_kw) const {
    if (q_mode == QMode::PowerFactorCone)
      return p_kw * std::tan(std::acos(pf_min));
    return q_max_kvar;
  }
};

struct Bess {
  std::string id;
  int bus = -1;
  int phase = 0;
  double e_cap_kwh = 0.0;
  double soc_min = 0.1;
  double soc_max = 0.9;
  double e_start_kwh = 0.0;
  double p_max_kw = 0.0;
  double s_max_kva = 0.0;
  double eta = 0.95;

  void validate() const;
};

struct FlexLoad {
  std::string id;
  int bus = -1;
  int phase = 0;
  double p_shift_kw = 0.0;
  std::string base_profile;     // base demand column id
  double power_factor = 0.95;   // the shifted demand keeps the load pf
};

struct LoadPoint {
  double p_kw = 0.0;
  double power_factor = 1.0;

  double q_kvar() const {
    return p_kw * std::tan(std::acos(power_factor));
  }
};

// Fixed (uncontrolled) load attachment used by scenarios.
struct LoadAttachment {
  int bus = -1;
  int phase = 0;
  std::string profile;
  double power_factor = 0.95;
};

struct DerFleet {
  std::vector<PvUnit> pv;
  std::vector<Bess> bess;
  std::vector<FlexLoad> flex;
  std::vector<LoadAttachment> loads;
};

// Energy update E' = E + (eta * p_ch - p_dis / eta) * dt with SoC-window
// check. Simultaneous charge/discharge or a bound exit raises
// ValidationError naming the bound.
double bess_energy_step(double e_prev_kwh, double p_ch_kw, double p_dis_kw,
                        double dt_h, const Bess& bess);

// Reactive headroom sqrt(s_max^2 - max(p_ch, p_dis)^2); zero (with the
// `clipped` flag set) when the active power exceeds s_max.
double bess_q_limit(double p_ch_kw, double p_dis_kw, const Bess& bess,
                    bool* clipped = nullptr);

// Daily shift sequence check: every entry in {-1,0,1}, sum zero, and the
// shifted demand nonnegative against the base profile.
struct ScheduleCheck {
  bool valid = true;
  int residual = 0;          // sum of n when nonzero
  int first_negative = -1;   // period where shifted load would go negative
};
ScheduleCheck flexload_schedule_check(const std::vector<int>& n_seq,
                                      const FlexLoad& flex,
                                      const std::vector<double>& base_kw);

}  // namespace feederopt
