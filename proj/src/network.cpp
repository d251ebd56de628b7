#include "feederopt/network.hpp"

#include <algorithm>
#include <queue>

namespace feederopt {

Eigen::Matrix3cd kron_reduce(const Eigen::Matrix4cd& primitive_z,
                             const GroundingSpec& grounding,
                             const std::string& branch_label) {
  Eigen::Matrix3cd z_pp = primitive_z.topLeftCorner<3, 3>();
  Eigen::Vector3cd z_pn = primitive_z.topRightCorner<3, 1>();
  Eigen::RowVector3cd z_np = primitive_z.bottomLeftCorner<1, 3>();
  cplx z_nn = primitive_z(3, 3) + cplx(grounding.series_ohm(), 0.0);
  if (std::abs(z_nn) < 1e-12) {
    throw ValidationError("non-reducible branch" +
                          (branch_label.empty() ? std::string()
                                                : " " + branch_label) +
                          ": singular neutral sub-block");
  }
  return z_pp - (z_pn * z_np) / z_nn;
}

TopologyMatrices build_topology_matrices(const PairIndex& pairs,
                                         const std::vector<Branch>& branches,
                                         const std::vector<int>& parent_branch,
                                         int num_buses) {
  const int nn = pairs.nodes();
  const int nb = pairs.branches();
  TopologyMatrices t;
  t.bibc = Eigen::MatrixXd::Zero(nb, nn);
  t.bcbv = Eigen::MatrixXcd::Zero(nn, nb);

  // path from slack to each bus as a list of branch indices
  std::vector<std::vector<int>> path(static_cast<size_t>(num_buses));
  for (int b = 1; b < num_buses; ++b) {
    int cur = b;
    auto& p = path[static_cast<size_t>(b)];
    while (cur != 0) {
      int br = parent_branch[static_cast<size_t>(cur)];
      if (br < 0) throw ValidationError("non-radial network: unreachable bus");
      p.push_back(br);
      cur = branches[static_cast<size_t>(br)].from;
    }
    std::reverse(p.begin(), p.end());
  }

  for (int np = 0; np < nn; ++np) {
    auto [bus, z] = pairs.node_pairs[static_cast<size_t>(np)];
    for (int br : path[static_cast<size_t>(bus)]) {
      const Branch& branch = branches[static_cast<size_t>(br)];
      for (int w = 0; w < 3; ++w) {
        if (!branch.phases[static_cast<size_t>(w)]) continue;
        int bp = pairs.branch_of(br, w);
        if (w == z) t.bibc(bp, np) = 1.0;
        t.bcbv(np, bp) += branch.z_abc(z, w);
      }
    }
  }
  t.drop = t.bcbv * t.bibc;
  return t;
}

NetworkModel::NetworkModel(std::vector<Bus> buses,
                           std::vector<BranchSpec> branch_specs,
                           TapChanger tap, double base_kva, double base_v,
                           GroundingSpec grounding)
    : buses_(std::move(buses)),
      tap_(tap),
      grounding_(grounding),
      base_kva_(base_kva),
      base_v_(base_v) {
  const int nbus = static_cast<int>(buses_.size());
  if (nbus < 2) throw ValidationError("network needs at least two buses");
  buses_[0].is_slack = true;
  if (!buses_[0].three_phase())
    throw ValidationError("slack bus must carry all three phases");
  for (int i = 1; i < nbus; ++i)
    if (buses_[static_cast<size_t>(i)].is_slack)
      throw ValidationError("only the first bus may be slack");

  int max_id = 0;
  for (const auto& b : buses_) max_id = std::max(max_id, b.id);
  id_to_index_.assign(static_cast<size_t>(max_id) + 1, -1);
  for (int i = 0; i < nbus; ++i) {
    int id = buses_[static_cast<size_t>(i)].id;
    if (id_to_index_[static_cast<size_t>(id)] != -1)
      throw ValidationError("duplicate bus id " + std::to_string(id));
    id_to_index_[static_cast<size_t>(id)] = i;
  }

  if (static_cast<int>(branch_specs.size()) != nbus - 1)
    throw ValidationError("non-radial network: branch count " +
                          std::to_string(branch_specs.size()) + " != buses-1");

  const double zb = z_base_ohm();
  const double ib = i_base_a();
  branches_.reserve(branch_specs.size());
  for (size_t k = 0; k < branch_specs.size(); ++k) {
    const BranchSpec& s = branch_specs[k];
    if (s.from_bus == s.to_bus)
      throw ValidationError("branch " + std::to_string(k) + ": from == to");
    if (s.ampacity_a <= 0.0)
      throw ValidationError("branch " + std::to_string(k) + ": ampacity <= 0");
    Branch b;
    b.from = bus_index(s.from_bus);
    b.to = bus_index(s.to_bus);
    if (b.from < 0 || b.to < 0)
      throw ValidationError("branch " + std::to_string(k) +
                            ": unknown bus id");
    Eigen::Matrix4cd z_total = s.primitive_z * s.length_km;
    std::string label = std::to_string(s.from_bus) + "-" + std::to_string(s.to_bus);
    b.z_abc = kron_reduce(z_total, grounding_, label) / zb;
    if (!b.z_abc.allFinite())
      throw ValidationError("branch " + label + ": non-finite impedance");
    b.ampacity_pu = s.ampacity_a / ib;
    b.phases = s.phases;
    branches_.push_back(b);
  }

  // orient branches away from the slack (BFS) and record parent branches
  parent_branch_.assign(static_cast<size_t>(nbus), -1);
  std::vector<bool> seen(static_cast<size_t>(nbus), false);
  seen[0] = true;
  std::queue<int> frontier;
  frontier.push(0);
  std::vector<bool> branch_used(branches_.size(), false);
  while (!frontier.empty()) {
    int bus = frontier.front();
    frontier.pop();
    for (size_t k = 0; k < branches_.size(); ++k) {
      if (branch_used[k]) continue;
      Branch& br = branches_[k];
      int other = -1;
      if (br.from == bus) {
        other = br.to;
      } else if (br.to == bus) {
        std::swap(br.from, br.to);
        br.z_abc.transposeInPlace();  // symmetric in practice; keep exact
        other = br.to;
      } else {
        continue;
      }
      if (seen[static_cast<size_t>(other)])
        throw ValidationError("non-radial network: loop through bus id " +
                              std::to_string(buses_[static_cast<size_t>(other)].id));
      seen[static_cast<size_t>(other)] = true;
      branch_used[k] = true;
      parent_branch_[static_cast<size_t>(other)] = static_cast<int>(k);
      frontier.push(other);
    }
  }
  for (int i = 0; i < nbus; ++i)
    if (!seen[static_cast<size_t>(i)])
      throw ValidationError("non-radial network: bus id " +
                            std::to_string(buses_[static_cast<size_t>(i)].id) +
                            " unreachable from slack");

  // phase consistency: a bus's phases must exist on its parent branch, and a
  // branch may only carry phases present at its upstream bus
  for (int i = 1; i < nbus; ++i) {
    const Branch& pb = branches_[static_cast<size_t>(parent_branch_[static_cast<size_t>(i)])];
    for (int z = 0; z < 3; ++z) {
      if (buses_[static_cast<size_t>(i)].has_phase(z) && !pb.phases[static_cast<size_t>(z)])
        throw ValidationError("bus id " + std::to_string(buses_[static_cast<size_t>(i)].id) +
                              " phase " + phase_letter(z) +
                              " missing on its supply branch");
    }
  }
  for (const Branch& br : branches_) {
    for (int z = 0; z < 3; ++z) {
      if (br.phases[static_cast<size_t>(z)] &&
          !buses_[static_cast<size_t>(br.from)].has_phase(z))
        throw ValidationError("branch from bus id " +
                              std::to_string(buses_[static_cast<size_t>(br.from)].id) +
                              " carries phase " + phase_letter(z) +
                              " absent at that bus");
    }
  }

  // index maps
  pairs_.node_of = Eigen::MatrixXi::Constant(nbus, 3, -1);
  pairs_.branch_of = Eigen::MatrixXi::Constant(static_cast<int>(branches_.size()), 3, -1);
  for (int i = 1; i < nbus; ++i)
    for (int z = 0; z < 3; ++z)
      if (buses_[static_cast<size_t>(i)].has_phase(z)) {
        pairs_.node_of(i, z) = static_cast<int>(pairs_.node_pairs.size());
        pairs_.node_pairs.emplace_back(i, z);
      }
  for (size_t k = 0; k < branches_.size(); ++k)
    for (int z = 0; z < 3; ++z)
      if (branches_[k].phases[static_cast<size_t>(z)]) {
        pairs_.branch_of(static_cast<int>(k), z) =
            static_cast<int>(pairs_.branch_pairs.size());
        pairs_.branch_pairs.emplace_back(static_cast<int>(k), z);
      }

  if (tap_.tap_min > tap_.tap_max)
    throw ValidationError("tap_min > tap_max");
  if (tap_.step_pu < 0.0) throw ValidationError("negative tap step");
  for (int z = 0; z < 3; ++z) {
    double m = std::abs(tap_.slack_v[static_cast<size_t>(z)]);
    if (m < 0.9 || m > 1.1)
      throw ValidationError("slack voltage magnitude outside [0.9, 1.1] pu");
  }

  topo_ = build_topology_matrices(pairs_, branches_, parent_branch_, nbus);
}

int NetworkModel::bus_index(int external_id) const {
  if (external_id < 0 || external_id >= static_cast<int>(id_to_index_.size()))
    return -1;
  return id_to_index_[static_cast<size_t>(external_id)];
}

cplx NetworkModel::slack_voltage(int z, int tap_position) const {
  cplx v = tap_.slack_v[static_cast<size_t>(z)];
  cplx unit = v / std::abs(v);
  return v - tap_.step_pu * static_cast<double>(tap_position) * unit;
}

}  // namespace feederopt
