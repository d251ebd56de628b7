#pragma once

// Operating-scenario data: per-column kW time series over a set of days,
// train/test day tags, the synthetic generator that stands in for seasonal
// historical data, and the resolved per-day views (pu) consumed by the OPF,
// the margin evaluation and the closed-loop simulation.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "feederopt/common.hpp"
#include "feederopt/der.hpp"
#include "feederopt/network.hpp"
#include "feederopt/powerflow.hpp"

namespace feederopt {

enum class DayTag { Train, Test };

struct ScenarioSet {
  double dt_h = 1.0;
  int horizon = 24;                 // periods per day
  std::vector<std::string> columns;
  Eigen::MatrixXd series;           // (days*horizon) x columns, kW
  std::vector<DayTag> day_tags;

  int days() const { return static_cast<int>(day_tags.size()); }
  int column(const std::string& id) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == id) return static_cast<int>(i);
    return -1;
  }
  double at(int col, int day, int t) const {
    return series(day * horizon + t, col);
  }
  std::vector<int> days_with(DayTag tag) const {
    std::vector<int> out;
    for (int d = 0; d < days(); ++d)
      if (day_tags[static_cast<size_t>(d)] == tag) out.push_back(d);
    return out;
  }
};

// Synthetic scenario shapes: smooth diurnal double-peak demand and a solar
// bell centred on noon, with seeded per-day amplitude and per-period noise.
struct SyntheticSpec {
  struct Column {
    std::string id;
    enum class Kind { Load, Pv } kind = Kind::Load;
    double peak_kw = 1.0;
  };
  std::vector<Column> columns;
  int days = 30;
  int horizon = 24;
  double dt_h = 1.0;
  double noise = 0.04;          // relative per-period noise
  double day_spread = 0.25;     // per-day amplitude variation
  int train_days = -1;          // default: all but test_days
  int test_days = 0;
};

ScenarioSet generate_synthetic_scenarios(const SyntheticSpec& spec,
                                         std::uint64_t seed);

// DER/load placements resolved against the network's pair index.
struct FleetIndex {
  std::vector<int> pv_pair;
  std::vector<int> bess_pair;
  std::vector<int> flex_pair;
  std::vector<double> flex_tan_phi;
};
FleetIndex build_fleet_index(const NetworkModel& net, const DerFleet& fleet);

// One day of scenario data in per-unit on the network base.
struct DayContext {
  int day = 0;
  int horizon = 24;
  double dt_h = 1.0;
  Eigen::MatrixXd p_load;     // node_pairs x T, fixed demand (positive pu)
  Eigen::MatrixXd q_load;     // node_pairs x T
  Eigen::MatrixXd flex_base;  // n_flex x T (pu)
  Eigen::MatrixXd pv_avail;   // n_pv x T (pu)
};
DayContext build_day_context(const NetworkModel& net, const DerFleet& fleet,
                             const ScenarioSet& scen, int day);

// Per-period DER commands in pu (network base); the shared currency between
// the OPF, the margin evaluation and the closed-loop simulator.
struct DerCommands {
  Eigen::VectorXd pv_p;     // n_pv
  Eigen::VectorXd pv_q;
  Eigen::VectorXd bess_p;   // injection positive (discharge - charge)
  Eigen::VectorXd bess_q;
  Eigen::VectorXi shift;    // n_flex, in {-1,0,1}

  static DerCommands zeros(const DerFleet& fleet);
};

// Node injections for one period given commands and the day's loads.
InjectionState build_injections(const NetworkModel& net, const DerFleet& fleet,
                                const FleetIndex& idx, const DayContext& day,
                                int t, const DerCommands& cmd);

}  // namespace feederopt
