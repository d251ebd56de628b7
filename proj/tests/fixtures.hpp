#pragma once

// Shared feeder fixtures for the test suites.

#include <Eigen/Dense>
#include <vector>

#include "feederopt/network.hpp"
#include "feederopt/powerflow.hpp"
#include "feederopt/rng.hpp"

namespace feederopt::testing {

// 4x4 primitive matrix (ohm/km) with common LV-cable structure: equal phase
// self terms, uniform mutual coupling, a neutral self term.
inline Eigen::Matrix4cd make_primitive(cplx self, cplx mutual, cplx neutral_self) {
  Eigen::Matrix4cd z;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) z(i, j) = (i == j) ? self : mutual;
  z(3, 3) = neutral_self;
  return z;
}

// Slack (abc) feeding one single-phase (phase a) bus.
inline NetworkModel two_bus_single_phase(cplx z_pu = {0.05, 0.02},
                                         double ampacity_a = 200.0) {
  std::vector<Bus> buses(2);
  buses[0].id = 1;
  buses[1].id = 2;
  buses[1].phases = {true, false, false};
  BranchSpec br;
  br.from_bus = 1;
  br.to_bus = 2;
  br.length_km = 1.0;
  br.phases = {true, false, false};
  double zb = 400.0 * 400.0 / (100.0 * 1e3);  // 1.6 ohm
  Eigen::Matrix4cd prim = Eigen::Matrix4cd::Zero();
  prim(0, 0) = z_pu * zb;
  prim(3, 3) = cplx(1.0, 0.0);  // irrelevant: no phase-neutral coupling
  br.primitive_z = prim;
  br.ampacity_a = ampacity_a;
  TapChanger tap;
  return NetworkModel(buses, {br}, tap, 100.0, 400.0, {});
}

// Three-phase line feeder 1-2-3-4 with mutual coupling.
inline NetworkModel four_bus_three_phase(double length_scale = 1.0) {
  std::vector<Bus> buses(4);
  for (int i = 0; i < 4; ++i) buses[static_cast<size_t>(i)].id = i + 1;
  Eigen::Matrix4cd prim =
      make_primitive({0.32, 0.12}, {0.06, 0.05}, {0.40, 0.13});
  std::vector<BranchSpec> brs;
  for (int i = 0; i < 3; ++i) {
    BranchSpec b;
    b.from_bus = i + 1;
    b.to_bus = i + 2;
    b.primitive_z = prim;
    b.length_km = 0.25 * length_scale;
    b.ampacity_a = 150.0;
    brs.push_back(b);
  }
  TapChanger tap;
  return NetworkModel(buses, brs, tap, 100.0, 400.0, {40.0, 3.0});
}

// Random radial feeder with nbus buses (4..8 in the acceptance suite),
// random tree shape, mixed single/three-phase laterals.
inline NetworkModel random_radial(Rng& rng, int nbus) {
  std::vector<Bus> buses(static_cast<size_t>(nbus));
  std::vector<std::array<bool, 3>> bus_phases(static_cast<size_t>(nbus),
                                              {true, true, true});
  std::vector<int> parent(static_cast<size_t>(nbus), 0);
  for (int i = 1; i < nbus; ++i)
    parent[static_cast<size_t>(i)] = static_cast<int>(rng.next_u64() % static_cast<unsigned>(i));
  for (int i = 0; i < nbus; ++i) buses[static_cast<size_t>(i)].id = i + 1;
  // phase presence: a bus keeps a subset of its parent's phases
  for (int i = 1; i < nbus; ++i) {
    auto ph = bus_phases[static_cast<size_t>(parent[static_cast<size_t>(i)])];
    int present = 0;
    for (bool b : ph) present += b;
    if (present == 3 && rng.uniform() < 0.3) {
      int drop = static_cast<int>(rng.next_u64() % 3);
      int keep = static_cast<int>(rng.next_u64() % 3);
      for (int z = 0; z < 3; ++z)
        if (z != keep && (z == drop || rng.uniform() < 0.3)) ph[static_cast<size_t>(z)] = false;
      bool any = ph[0] || ph[1] || ph[2];
      if (!any) ph[static_cast<size_t>(keep)] = true;
    }
    bus_phases[static_cast<size_t>(i)] = ph;
    buses[static_cast<size_t>(i)].phases = ph;
  }
  std::vector<BranchSpec> brs;
  for (int i = 1; i < nbus; ++i) {
    BranchSpec b;
    b.from_bus = parent[static_cast<size_t>(i)] + 1;
    b.to_bus = i + 1;
    b.phases = bus_phases[static_cast<size_t>(i)];
    double self_r = rng.uniform(0.2, 0.45);
    double self_x = rng.uniform(0.08, 0.16);
    double mut_r = rng.uniform(0.03, 0.07);
    double mut_x = rng.uniform(0.02, 0.05);
    b.primitive_z = make_primitive({self_r, self_x}, {mut_r, mut_x},
                                   {self_r * 1.2, self_x * 1.1});
    b.length_km = rng.uniform(0.05, 0.3);
    b.ampacity_a = 150.0;
    brs.push_back(b);
  }
  TapChanger tap;
  return NetworkModel(buses, brs, tap, 100.0, 400.0, {40.0, 3.0});
}

// Random moderate injections for a network (loads negative, pu).
inline InjectionState random_injections(const NetworkModel& net, Rng& rng,
                                        double scale = 0.05) {
  InjectionState inj = InjectionState::zeros(net);
  for (int p = 0; p < net.pairs().nodes(); ++p) {
    inj.p(p) = rng.uniform(-scale, scale * 0.5);
    inj.q(p) = rng.uniform(-scale * 0.4, scale * 0.2);
  }
  return inj;
}

}  // namespace feederopt::testing
