#include <algorithm>
#include <cmath>
#include <memory>
#include <queue>

#include "feederopt/solver.hpp"

namespace feederopt {

namespace {

struct Node {
  std::vector<double> lo, hi;
  SimplexState warm;
  bool has_warm = false;
  double bound = -kInf;  // parent LP objective (minimization sense)
  int id = 0;
};

struct NodeOrder {
  bool operator()(const Node* a, const Node* b) const {
    if (a->bound != b->bound) return a->bound > b->bound;  // min-heap
    return a->id > b->id;
  }
};

}  // namespace

Solution solve_milp(const LinearProgram& lp_in, const IntegerSpec& ints,
                    const SimplexOptions& opts) {
  if (static_cast<int>(ints.int_vars.size()) > ints.max_integers)
    throw ValidationError("integer count exceeds cap of " +
                          std::to_string(ints.max_integers));
  if (!ints.int_range.empty() &&
      ints.int_range.size() != ints.int_vars.size())
    throw ValidationError("int_range size mismatch");

  // internal minimization copy
  LinearProgram lp = lp_in;
  if (lp.maximize) {
    for (auto& c : lp.cost) c = -c;
    lp.maximize = false;
  }
  const double flip = lp_in.maximize ? -1.0 : 1.0;

  Solution out;
  // intersect declared integer ranges with the variable bounds
  for (size_t k = 0; k < ints.int_vars.size(); ++k) {
    int j = ints.int_vars[k];
    if (j < 0 || j >= lp.num_vars())
      throw ValidationError("integer spec references unknown variable");
    if (!ints.int_range.empty()) {
      lp.lo[j] = std::max(lp.lo[j], static_cast<double>(ints.int_range[k].first));
      lp.hi[j] = std::min(lp.hi[j], static_cast<double>(ints.int_range[k].second));
    }
    // integral bound shrink
    lp.lo[j] = std::ceil(lp.lo[j] - 1e-9);
    lp.hi[j] = std::floor(lp.hi[j] + 1e-9);
    if (lp.lo[j] > lp.hi[j]) {
      out.status = SolveStatus::Infeasible;
      return out;
    }
  }

  const double int_tol = 1e-6;
  const double excl_tol = 1e-7;

  std::priority_queue<Node*, std::vector<Node*>, NodeOrder> open;
  std::vector<std::unique_ptr<Node>> storage;
  auto push_node = [&](std::vector<double> lo, std::vector<double> hi,
                       const SimplexState* warm, double bound, int id) {
    auto node = std::make_unique<Node>();
    node->lo = std::move(lo);
    node->hi = std::move(hi);
    if (warm) {
      node->warm = *warm;
      node->has_warm = true;
    }
    node->bound = bound;
    node->id = id;
    open.push(node.get());
    storage.push_back(std::move(node));
  };

  int next_id = 0;
  push_node(lp.lo, lp.hi, opts.warm, -kInf, next_id++);

  double incumbent_obj = kInf;
  Solution incumbent;
  bool have_incumbent = false;
  int nodes = 0;
  int total_iters = 0;
  bool hit_cap = false;
  double best_open_bound = kInf;

  while (!open.empty()) {
    Node* node = open.top();
    open.pop();
    if (have_incumbent && node->bound >= incumbent_obj - 1e-9) continue;
    if (nodes >= ints.max_nodes) {
      hit_cap = true;
      best_open_bound = std::min(best_open_bound, node->bound);
      continue;
    }
    ++nodes;

    LinearProgram sub = lp;
    sub.lo = node->lo;
    sub.hi = node->hi;
    SimplexOptions sopts = opts;
    if (node->has_warm) sopts.warm = &node->warm;
    Solution rel = solve_lp(sub, sopts);
    total_iters += rel.iterations;
    if (rel.status == SolveStatus::Unbounded) {
      out = rel;
      out.nodes = nodes;
      out.objective = flip * rel.objective;
      return out;
    }
    if (rel.status != SolveStatus::Optimal) continue;  // infeasible: prune
    if (have_incumbent && rel.objective >= incumbent_obj - 1e-9) continue;

    // most fractional integer variable
    int branch_var = -1;
    double branch_score = kInf;  // |frac - 0.5|, smaller = more fractional
    for (int j : ints.int_vars) {
      double v = rel.x[static_cast<size_t>(j)];
      double fr = v - std::floor(v);
      double dist = std::min(fr, 1.0 - fr);
      if (dist <= int_tol) continue;
      double score = std::abs(fr - 0.5);
      if (score < branch_score - 1e-12) {
        branch_score = score;
        branch_var = j;
      }
    }

    int excl_a = -1, excl_b = -1;
    if (branch_var < 0) {
      double best_overlap = excl_tol;
      for (auto [p, q] : ints.exclusive_pairs) {
        double overlap = std::min(rel.x[static_cast<size_t>(p)],
                                  rel.x[static_cast<size_t>(q)]);
        if (overlap > best_overlap) {
          best_overlap = overlap;
          excl_a = p;
          excl_b = q;
        }
      }
    }

    if (branch_var < 0 && excl_a < 0) {
      // integral and exclusive-feasible: new incumbent
      incumbent = rel;
      for (int j : ints.int_vars)
        incumbent.x[static_cast<size_t>(j)] =
            std::round(incumbent.x[static_cast<size_t>(j)]);
      incumbent_obj = rel.objective;
      have_incumbent = true;
      continue;
    }

    const SimplexState* warm =
        rel.basis.has_value() ? &rel.basis.value() : nullptr;
    if (branch_var >= 0) {
      double v = rel.x[static_cast<size_t>(branch_var)];
      auto lo1 = node->lo;
      auto hi1 = node->hi;
      hi1[static_cast<size_t>(branch_var)] = std::floor(v);
      if (lo1[static_cast<size_t>(branch_var)] <= hi1[static_cast<size_t>(branch_var)])
        push_node(std::move(lo1), std::move(hi1), warm, rel.objective, next_id++);
      auto lo2 = node->lo;
      auto hi2 = node->hi;
      lo2[static_cast<size_t>(branch_var)] = std::ceil(v);
      if (lo2[static_cast<size_t>(branch_var)] <= hi2[static_cast<size_t>(branch_var)])
        push_node(std::move(lo2), std::move(hi2), warm, rel.objective, next_id++);
    } else {
      auto lo1 = node->lo;
      auto hi1 = node->hi;
      hi1[static_cast<size_t>(excl_a)] = std::min(hi1[static_cast<size_t>(excl_a)], 0.0);
      push_node(std::move(lo1), std::move(hi1), warm, rel.objective, next_id++);
      auto lo2 = node->lo;
      auto hi2 = node->hi;
      hi2[static_cast<size_t>(excl_b)] = std::min(hi2[static_cast<size_t>(excl_b)], 0.0);
      push_node(std::move(lo2), std::move(hi2), warm, rel.objective, next_id++);
    }
  }

  if (!have_incumbent) {
    out.status = hit_cap ? SolveStatus::NodeLimit : SolveStatus::Infeasible;
    out.nodes = nodes;
    out.iterations = total_iters;
    return out;
  }
  out = incumbent;
  out.status = hit_cap ? SolveStatus::NodeLimit : SolveStatus::Optimal;
  out.objective = flip * incumbent_obj;
  out.nodes = nodes;
  out.iterations = total_iters;
  out.gap = 0.0;
  if (hit_cap && best_open_bound < incumbent_obj)
    out.gap = (incumbent_obj - best_open_bound) /
              std::max(1.0, std::abs(incumbent_obj));
  return out;
}

std::vector<HalfPlane> polygonize_quadratic(double s_max, int sides) {
  if (sides < 4) throw ValidationError("polygonize_quadratic: sides < 4");
  if (s_max < 0.0) throw ValidationError("polygonize_quadratic: negative radius");
  std::vector<HalfPlane> planes;
  planes.reserve(static_cast<size_t>(sides));
  const double rhs = s_max * std::cos(kPi / sides);
  for (int k = 0; k < sides; ++k) {
    double phi = (2.0 * k + 1.0) * kPi / sides;
    planes.push_back({std::cos(phi), std::sin(phi), rhs});
  }
  return planes;
}

Eigen::VectorXd constrained_least_squares(const ClsProblem& prob) {
  const int nv = static_cast<int>(prob.a.cols());
  const int nr = static_cast<int>(prob.g.rows());
  Eigen::VectorXd x = prob.x0.size() ? prob.x0 : Eigen::VectorXd::Zero(nv);
  if (x.size() != nv) throw ValidationError("cls: x0 dimension mismatch");
  if (nr > 0) {
    Eigen::VectorXd slack = prob.h - prob.g * x;
    if (slack.minCoeff() < -1e-9)
      throw ValidationError("cls: start point infeasible");
  }

  Eigen::MatrixXd aw = prob.w.asDiagonal() * prob.a;
  Eigen::MatrixXd hmat = 2.0 * prob.a.transpose() * aw;
  double ridge = 1e-12 * std::max(1.0, hmat.trace());
  hmat.diagonal().array() += ridge;
  Eigen::VectorXd cvec = -2.0 * prob.a.transpose() * (prob.w.asDiagonal() * prob.b);

  std::vector<int> active;
  std::vector<bool> is_active(static_cast<size_t>(nr), false);

  for (int iter = 0; iter < 1000; ++iter) {
    const int na = static_cast<int>(active.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nv + na, nv + na);
    kkt.topLeftCorner(nv, nv) = hmat;
    for (int k = 0; k < na; ++k) {
      kkt.block(nv + k, 0, 1, nv) = prob.g.row(active[static_cast<size_t>(k)]);
      kkt.block(0, nv + k, nv, 1) =
          prob.g.row(active[static_cast<size_t>(k)]).transpose();
    }
    Eigen::VectorXd grad = hmat * x + cvec;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nv + na);
    rhs.head(nv) = -grad;
    Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    Eigen::VectorXd p = sol.head(nv);
    Eigen::VectorXd lambda = sol.tail(na);

    if (p.lpNorm<Eigen::Infinity>() <= 1e-11 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      int drop = -1;
      double most_negative = -1e-9;
      for (int k = 0; k < na; ++k) {
        if (lambda(k) < most_negative) {
          most_negative = lambda(k);
          drop = k;
        }
      }
      if (drop < 0) return x;  // KKT satisfied
      is_active[static_cast<size_t>(active[static_cast<size_t>(drop)])] = false;
      active.erase(active.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    int blocking = -1;
    for (int r = 0; r < nr; ++r) {
      if (is_active[static_cast<size_t>(r)]) continue;
      double gp = prob.g.row(r).dot(p);
      if (gp <= 1e-12) continue;
      double a_r = (prob.h(r) - prob.g.row(r).dot(x)) / gp;
      if (a_r < alpha - 1e-15) {
        alpha = std::max(a_r, 0.0);
        blocking = r;
      }
    }
    x += alpha * p;
    if (blocking >= 0) {
      active.push_back(blocking);
      is_active[static_cast<size_t>(blocking)] = true;
    }
  }
  throw ConvergenceError("constrained least squares: iteration limit");
}

}  // namespace feederopt
