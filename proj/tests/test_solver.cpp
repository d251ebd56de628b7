#include <cmath>

#include "doctest.h"
#include "feederopt/rng.hpp"
#include "feederopt/solver.hpp"

using namespace feederopt;

namespace {

double row_residual(const LinearProgram& lp, const std::vector<double>& x) {
  double worst = 0.0;
  for (const auto& row : lp.rows) {
    double lhs = 0.0;
    for (auto [j, v] : row.coeffs) lhs += v * x[static_cast<size_t>(j)];
    double scale = 1.0 + std::abs(row.rhs);
    double viol = 0.0;
    if (row.rel == Rel::LE) viol = (lhs - row.rhs) / scale;
    else if (row.rel == Rel::GE) viol = (row.rhs - lhs) / scale;
    else viol = std::abs(lhs - row.rhs) / scale;
    worst = std::max(worst, viol);
  }
  return worst;
}

}  // namespace

TEST_CASE("lp: min x subject to x >= 3") {
  LinearProgram lp;
  int x = lp.add_var("x", -kInf, kInf, 1.0);
  lp.add_row({{x, 1.0}}, Rel::GE, 3.0);
  auto s = solve_lp(lp);
  REQUIRE(s.optimal());
  CHECK(s.x[0] == doctest::Approx(3.0));
  CHECK(s.objective == doctest::Approx(3.0));
}

TEST_CASE("lp: facet tie resolves to the lowest-index vertex") {
  LinearProgram lp;
  int x = lp.add_var("x", 0.0, 1.0, -1.0);
  int y = lp.add_var("y", 0.0, 1.0, -1.0);
  lp.add_row({{x, 1.0}, {y, 1.0}}, Rel::LE, 1.0);
  auto s = solve_lp(lp);
  REQUIRE(s.optimal());
  CHECK(s.objective == doctest::Approx(-1.0));
  CHECK(s.x[0] == doctest::Approx(1.0));
  CHECK(s.x[1] == doctest::Approx(0.0));
}

TEST_CASE("lp: conflicting rows are infeasible, not a crash") {
  LinearProgram lp;
  int x = lp.add_var("x", -kInf, kInf, 1.0);
  lp.add_row({{x, 1.0}}, Rel::GE, 1.0);
  lp.add_row({{x, 1.0}}, Rel::LE, 0.0);
  auto s = solve_lp(lp);
  CHECK(s.status == SolveStatus::Infeasible);
}

TEST_CASE("lp: unbounded detection") {
  LinearProgram lp;
  lp.add_var("x", 0.0, kInf, -1.0);
  auto s = solve_lp(lp);
  CHECK(s.status == SolveStatus::Unbounded);
}

TEST_CASE("lp: equality rows and maximize flag") {
  LinearProgram lp;
  lp.maximize = true;
  int x = lp.add_var("x", 0.0, 10.0, 3.0);
  int y = lp.add_var("y", 0.0, 10.0, 2.0);
  lp.add_row({{x, 1.0}, {y, 1.0}}, Rel::EQ, 4.0);
  lp.add_row({{x, 1.0}}, Rel::LE, 3.0);
  auto s = solve_lp(lp);
  REQUIRE(s.optimal());
  CHECK(s.objective == doctest::Approx(11.0));
  CHECK(s.x[0] == doctest::Approx(3.0));
  CHECK(s.x[1] == doctest::Approx(1.0));
}

TEST_CASE("lp: duality gap and feasibility residual on random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 3 + static_cast<int>(rng.next_u64() % 6);
    int m = 2 + static_cast<int>(rng.next_u64() % 6);
    LinearProgram lp;
    for (int j = 0; j < n; ++j)
      lp.add_var("x" + std::to_string(j), 0.0, 5.0, rng.uniform(-2, 2));
    std::vector<double> xstar(static_cast<size_t>(n));
    for (auto& v : xstar) v = rng.uniform(0, 2);
    for (int r = 0; r < m; ++r) {
      LinearProgram::Row row;
      double lhs = 0.0;
      for (int j = 0; j < n; ++j) {
        double a = rng.uniform(-1, 1);
        if (std::abs(a) < 0.2) continue;
        row.coeffs.push_back({j, a});
        lhs += a * xstar[static_cast<size_t>(j)];
      }
      if (row.coeffs.empty()) row.coeffs.push_back({0, 1.0});
      row.rel = (rng.uniform() < 0.3) ? Rel::GE : Rel::LE;
      row.rhs = (row.rel == Rel::LE) ? lhs + rng.uniform(0, 1)
                                     : lhs - rng.uniform(0, 1);
      lp.add_row(row);
    }
    auto s = solve_lp(lp);
    REQUIRE(s.optimal());  // xstar is feasible by construction
    CHECK(row_residual(lp, s.x) <= 1e-7);
    double scale = std::max(1.0, std::abs(s.objective));
    CHECK(std::abs(s.objective - s.dual_objective) / scale <= 1e-6);
  }
}

TEST_CASE("lp: deterministic across repeated solves") {
  Rng rng(77);
  LinearProgram lp;
  for (int j = 0; j < 8; ++j)
    lp.add_var("x" + std::to_string(j), 0.0, 3.0, rng.uniform(-1, 1));
  for (int r = 0; r < 6; ++r) {
    LinearProgram::Row row;
    for (int j = 0; j < 8; ++j) row.coeffs.push_back({j, rng.uniform(-1, 1)});
    row.rel = Rel::LE;
    row.rhs = rng.uniform(0.5, 3.0);
    lp.add_row(row);
  }
  auto a = solve_lp(lp);
  auto b = solve_lp(lp);
  REQUIRE(a.status == b.status);
  for (size_t j = 0; j < a.x.size(); ++j) CHECK(a.x[j] == b.x[j]);
}

TEST_CASE("lp: warm start after a bound change reaches the same optimum") {
  LinearProgram lp;
  int x = lp.add_var("x", 0.0, 4.0, -1.0);
  int y = lp.add_var("y", 0.0, 4.0, -2.0);
  lp.add_row({{x, 1.0}, {y, 1.0}}, Rel::LE, 5.0);
  auto s1 = solve_lp(lp);
  REQUIRE(s1.optimal());
  lp.hi[static_cast<size_t>(y)] = 2.0;  // tighten
  SimplexOptions opts;
  opts.warm = &s1.basis.value();
  auto s2 = solve_lp(lp, opts);
  auto s2_cold = solve_lp(lp);
  REQUIRE(s2.optimal());
  CHECK(s2.objective == doctest::Approx(s2_cold.objective));
  CHECK(s2.x[static_cast<size_t>(y)] == doctest::Approx(2.0));
  (void)x;
}

TEST_CASE("milp: integral relaxation short-circuits to the lp solution") {
  LinearProgram lp;
  int x = lp.add_var("x", 0.0, 3.0, -1.0);
  lp.add_row({{x, 1.0}}, Rel::LE, 2.0);
  IntegerSpec ints;
  ints.int_vars = {x};
  auto milp = solve_milp(lp, ints);
  auto rel = solve_lp(lp);
  REQUIRE(milp.optimal());
  CHECK(milp.objective == doctest::Approx(rel.objective));
  CHECK(milp.nodes == 1);
}

TEST_CASE("milp: knapsack toy matches exhaustive enumeration") {
  LinearProgram lp;
  lp.maximize = true;
  int a = lp.add_var("a", 0.0, 1.0, 5.0);
  int b = lp.add_var("b", 0.0, 1.0, 4.0);
  lp.add_row({{a, 2.0}, {b, 2.0}}, Rel::LE, 3.0);
  IntegerSpec ints;
  ints.int_vars = {a, b};
  auto milp = solve_milp(lp, ints);
  REQUIRE(milp.optimal());

  // exhaustive oracle over the 4 binary points
  double best = -kInf;
  int best_a = 0, best_b = 0;
  for (int va = 0; va <= 1; ++va)
    for (int vb = 0; vb <= 1; ++vb)
      if (2 * va + 2 * vb <= 3 && 5 * va + 4 * vb > best) {
        best = 5 * va + 4 * vb;
        best_a = va;
        best_b = vb;
      }
  CHECK(milp.objective == doctest::Approx(best));
  CHECK(milp.x[0] == doctest::Approx(best_a));
  CHECK(milp.x[1] == doctest::Approx(best_b));
  CHECK(best == 5.0);

  // never better than the relaxation bound
  auto rel = solve_lp(lp);
  CHECK(milp.objective <= rel.objective + 1e-9);
}

TEST_CASE("milp: empty integer range is infeasible") {
  LinearProgram lp;
  int x = lp.add_var("x", 0.4, 0.6, 1.0);
  IntegerSpec ints;
  ints.int_vars = {x};
  auto s = solve_milp(lp, ints);
  CHECK(s.status == SolveStatus::Infeasible);
}

TEST_CASE("milp: exclusive pairs forbid simultaneous activity") {
  // maximizing p+q with p+q <= 2 wants both at 1; exclusivity forces one to 0
  LinearProgram lp;
  lp.maximize = true;
  int p = lp.add_var("p", 0.0, 1.5, 1.0);
  int q = lp.add_var("q", 0.0, 1.0, 0.9);
  lp.add_row({{p, 1.0}, {q, 1.0}}, Rel::LE, 2.0);
  IntegerSpec ints;
  ints.exclusive_pairs = {{p, q}};
  auto s = solve_milp(lp, ints);
  REQUIRE(s.optimal());
  CHECK(std::min(s.x[0], s.x[1]) <= 1e-7);
  CHECK(s.objective == doctest::Approx(1.5));
}

TEST_CASE("milp: random instances agree with brute force") {
  Rng rng(303);
  for (int trial = 0; trial < 15; ++trial) {
    int n = 4;
    LinearProgram lp;
    for (int j = 0; j < n; ++j)
      lp.add_var("x" + std::to_string(j), 0.0, 3.0, rng.uniform(-3, 1));
    for (int r = 0; r < 3; ++r) {
      LinearProgram::Row row;
      for (int j = 0; j < n; ++j) row.coeffs.push_back({j, rng.uniform(0, 1)});
      row.rel = Rel::LE;
      row.rhs = rng.uniform(2.0, 6.0);
      lp.add_row(row);
    }
    IntegerSpec ints;
    ints.int_vars = {0, 1, 2, 3};
    auto milp = solve_milp(lp, ints);
    REQUIRE(milp.optimal());

    double best = kInf;
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; b <= 3; ++b)
        for (int c = 0; c <= 3; ++c)
          for (int d = 0; d <= 3; ++d) {
            std::vector<double> x{double(a), double(b), double(c), double(d)};
            if (row_residual(lp, x) > 1e-12) continue;
            double obj = 0.0;
            for (int j = 0; j < n; ++j)
              obj += lp.cost[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
            best = std::min(best, obj);
          }
    CHECK(milp.objective == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("polygonize: zero radius leaves only the origin") {
  auto planes = polygonize_quadratic(0.0, 16);
  // any nonzero point violates at least one face
  for (double ang = 0.0; ang < 2 * kPi; ang += 0.1) {
    double p = 0.01 * std::cos(ang), q = 0.01 * std::sin(ang);
    bool inside = true;
    for (const auto& hp : planes)
      inside = inside && (hp.a_p * p + hp.a_q * q <= hp.rhs + 1e-15);
    CHECK_FALSE(inside);
  }
}

TEST_CASE("polygonize: four sides give the closed-form under-coverage") {
  auto planes = polygonize_quadratic(1.0, 4);
  REQUIRE(planes.size() == 4);
  // the inradius is cos(pi/4); max radial under-coverage 1 - cos(pi/4)
  double worst = 0.0;
  for (int k = 0; k < 4096; ++k) {
    double ang = 2 * kPi * k / 4096.0;
    // largest feasible radius along this direction
    double r = kInf;
    for (const auto& hp : planes) {
      double proj = hp.a_p * std::cos(ang) + hp.a_q * std::sin(ang);
      if (proj > 1e-12) r = std::min(r, hp.rhs / proj);
    }
    worst = std::max(worst, 1.0 - r);
  }
  CHECK(worst == doctest::Approx(1.0 - std::cos(kPi / 4)).epsilon(1e-3));
}

TEST_CASE("polygonize: interior points satisfy the exact quadratic") {
  auto planes = polygonize_quadratic(2.5, 32);
  Rng rng(55);
  int kept = 0;
  while (kept < 1000) {
    double p = rng.uniform(-2.5, 2.5), q = rng.uniform(-2.5, 2.5);
    bool inside = true;
    for (const auto& hp : planes)
      inside = inside && (hp.a_p * p + hp.a_q * q <= hp.rhs);
    if (!inside) continue;
    ++kept;
    CHECK(p * p + q * q <= 2.5 * 2.5 + 1e-12);
  }
}

TEST_CASE("constrained least squares honours active inequalities") {
  // fit y = a + b t to data demanding b <= 0.5 while the free fit wants b = 2
  Eigen::MatrixXd a(4, 2);
  Eigen::VectorXd b(4), w = Eigen::VectorXd::Ones(4);
  for (int i = 0; i < 4; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = i;
    b(i) = 1.0 + 2.0 * i;
  }
  ClsProblem prob{a, b, w, Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1),
                  Eigen::VectorXd()};
  prob.g(0, 1) = 1.0;
  prob.h(0) = 0.5;
  auto x = constrained_least_squares(prob);
  CHECK(x(1) == doctest::Approx(0.5));
  // with the slope pinned, the intercept is the weighted mean residual fit
  double intercept = (b - a.col(1) * 0.5).mean();
  CHECK(x(0) == doctest::Approx(intercept));

  // unconstrained variant recovers the exact line
  ClsProblem free_prob{a, b, w, Eigen::MatrixXd::Zero(0, 2),
                       Eigen::VectorXd::Zero(0), Eigen::VectorXd()};
  auto xf = constrained_least_squares(free_prob);
  CHECK(xf(0) == doctest::Approx(1.0));
  CHECK(xf(1) == doctest::Approx(2.0));
}

TEST_CASE("lp dump lists objective, rows, bounds and integers") {
  LinearProgram lp;
  int x = lp.add_var("dispatch", 0.0, 2.0, 1.5);
  lp.add_row({{x, 1.0}}, Rel::LE, 1.0);
  std::vector<int> ints{x};
  auto text = lp.dump(&ints);
  CHECK(text.find("minimize") != std::string::npos);
  CHECK(text.find("dispatch") != std::string::npos);
  CHECK(text.find("integers") != std::string::npos);
}
