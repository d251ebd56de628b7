#pragma once

// Three-phase radial feeder model: Kron reduction of 4-conductor primitive
// impedance matrices, per-unit conversion, and the BIBC/BCBV topology
// matrices consumed by the sweep power flow and the OPF.
//
// Conventions:
//  - per-unit on a three-phase base (base_kva, base_v line-to-line);
//    Z_base = base_v^2 / (base_kva * 1000).
//  - bus 0 of NetworkModel::buses is the slack; it must carry all phases.
//  - branch current index pairs are (branch, phase); node index pairs are
//    (bus, phase) over non-slack buses only. Missing phases are absent pairs.

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "feederopt/common.hpp"

namespace feederopt {

// Neutral-earthing description. The effective neutral self-impedance used in
// the reduction is z_nn plus the parallel combination of the electrode
// resistances present (<=0 means absent / ideal).
struct GroundingSpec {
  double pole_ohm = 0.0;
  double transformer_ohm = 0.0;

  double series_ohm() const {
    bool p = pole_ohm > 0.0, t = transformer_ohm > 0.0;
    if (p && t) return pole_ohm * transformer_ohm / (pole_ohm + transformer_ohm);
    if (p) return pole_ohm;
    if (t) return transformer_ohm;
    return 0.0;
  }
};

struct BranchSpec {
  int from_bus = -1;
  int to_bus = -1;
  Eigen::Matrix4cd primitive_z;       // ohm per km, conductors a,b,c,n
  double length_km = 0.0;
  double ampacity_a = 0.0;            // per phase thermal limit, amperes
  std::array<bool, 3> phases{true, true, true};
};

struct TapChanger {
  double step_pu = 0.0;               // voltage magnitude change per tap
  int tap_min = 0;
  int tap_max = 0;
  std::array<cplx, 3> slack_v{phase_unit(0), phase_unit(1), phase_unit(2)};

  bool fixed() const { return tap_min == tap_max; }
};

struct Bus {
  int id = 0;                          // external id (file-facing)
  std::array<bool, 3> phases{true, true, true};
  bool is_slack = false;

  bool has_phase(int z) const { return phases[static_cast<size_t>(z)]; }
  bool three_phase() const { return phases[0] && phases[1] && phases[2]; }
};

struct Branch {
  int from = -1;                       // bus indices (positions, not ids)
  int to = -1;
  Eigen::Matrix3cd z_abc;              // pu, Kron-reduced
  double ampacity_pu = 0.0;
  std::array<bool, 3> phases{true, true, true};
};

// Index space of the stacked per-phase vectors.
struct PairIndex {
  std::vector<std::pair<int, int>> node_pairs;    // (bus idx, phase) non-slack
  std::vector<std::pair<int, int>> branch_pairs;  // (branch idx, phase)
  Eigen::MatrixXi node_of;                        // [bus][phase] -> idx | -1
  Eigen::MatrixXi branch_of;                      // [branch][phase] -> idx | -1

  int nodes() const { return static_cast<int>(node_pairs.size()); }
  int branches() const { return static_cast<int>(branch_pairs.size()); }
};

struct TopologyMatrices {
  Eigen::MatrixXd bibc;   // branch_pairs x node_pairs, entries in {0,1}
  Eigen::MatrixXcd bcbv;  // node_pairs x branch_pairs
  Eigen::MatrixXcd drop;  // bcbv * bibc, node_pairs x node_pairs
};

class NetworkModel {
 public:
  NetworkModel(std::vector<Bus> buses, std::vector<BranchSpec> branch_specs,
               TapChanger tap, double base_kva, double base_v,
               GroundingSpec grounding);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const TapChanger& tap() const { return tap_; }
  const GroundingSpec& grounding() const { return grounding_; }
  double base_kva() const { return base_kva_; }
  double base_v() const { return base_v_; }
  double z_base_ohm() const { return base_v_ * base_v_ / (base_kva_ * 1e3); }
  double i_base_a() const { return base_kva_ * 1e3 / (std::sqrt(3.0) * base_v_); }
  // single-phase power base (kW per pu) for per-phase quantities
  double s_base_1ph_kw() const { return base_kva_ / 3.0; }

  int slack() const { return 0; }
  int bus_index(int external_id) const;  // -1 if unknown
  const PairIndex& pairs() const { return pairs_; }
  const TopologyMatrices& topology() const { return topo_; }
  int parent_branch(int bus) const { return parent_branch_[static_cast<size_t>(bus)]; }

  // Slack phasor for phase z at a given tap position.
  cplx slack_voltage(int z, int tap_position) const;

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  TapChanger tap_;
  GroundingSpec grounding_;
  double base_kva_;
  double base_v_;
  std::vector<int> parent_branch_;
  std::vector<int> id_to_index_;
  PairIndex pairs_;
  TopologyMatrices topo_;
};

// Kron reduction of a 4x4 primitive matrix (ohm): eliminates the neutral
// conductor, Z_abc = Z_pp - Z_pn * Z_nn^-1 * Z_np, with the grounding
// resistance added to the neutral self term. Throws ValidationError
// ("non-reducible branch ...") when the neutral sub-block is singular.
Eigen::Matrix3cd kron_reduce(const Eigen::Matrix4cd& primitive_z,
                             const GroundingSpec& grounding,
                             const std::string& branch_label = "");

// Pass-through overload for already reduced 3x3 data.
inline Eigen::Matrix3cd kron_reduce(const Eigen::Matrix3cd& z_abc,
                                    const GroundingSpec&,
                                    const std::string& = "") {
  return z_abc;
}

// Builds the stacked BIBC/BCBV matrices. Throws ValidationError
// ("non-radial network") for meshed or disconnected branch sets.
TopologyMatrices build_topology_matrices(const PairIndex& pairs,
                                         const std::vector<Branch>& branches,
                                         const std::vector<int>& parent_branch,
                                         int num_buses);

}  // namespace feederopt
