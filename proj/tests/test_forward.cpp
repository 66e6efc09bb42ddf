#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"
#include "pfinv/errors.hpp"
#include "pfinv/forward.hpp"

using namespace pfinv;

namespace {

NodalField random_phase(const TriMesh& m, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(m.num_vertices()));
  for (double& x : v) x = d(rng);
  return NodalField(m, v);
}

double manufactured(const Point2& p) { return std::cos(M_PI * p.x) * std::cos(M_PI * p.y); }

// L2 error against the exact solution with a 7-point degree-5 rule.
double l2_error(const TriMesh& m, const NodalField& y) {
  static const double a1 = 0.059715871789770, b1 = 0.470142064105115;
  static const double a2 = 0.797426985353087, b2 = 0.101286507323456;
  const double pts[7][3] = {{1. / 3, 1. / 3, 1. / 3}, {a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1},
                            {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2}};
  const double w[7] = {0.225, 0.132394152788506, 0.132394152788506, 0.132394152788506,
                       0.125939180544827, 0.125939180544827, 0.125939180544827};
  double s = 0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangle(t);
    for (int q = 0; q < 7; ++q) {
      Point2 p;
      double v = 0;
      for (int i = 0; i < 3; ++i) {
        p += m.vertex(tri[i]) * pts[q][i];
        v += y[static_cast<std::size_t>(tri[i])] * pts[q][i];
      }
      s += w[q] * m.area(t) * std::pow(v - manufactured(p), 2);
    }
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("constant solutions") {
  const TriMesh m = build_square_mesh(0.2);
  const NodalField u(m);
  const auto s1 = solve_direct(m, u, NodalField(m, 1.0), 0.1);
  for (double v : s1.y.values()) CHECK(std::abs(v - 1.0) < 1e-10);
  const auto s8 = solve_direct(m, u, NodalField(m, 8.0), 0.1);
  for (double v : s8.y.values()) CHECK(std::abs(v - 2.0) < 1e-10);
  const auto s0 = solve_direct(m, u, NodalField(m, 0.0), 0.1);
  for (double v : s0.y.values()) CHECK(v == 0.0);
}

TEST_CASE("manufactured solution converges at second order") {
  std::vector<double> hs, errs;
  for (double h : {0.25, 0.125, 0.0625, 0.03125}) {
    const TriMesh m = build_square_mesh(h);
    const NodalField f = interpolate_nodal(m, [](const Point2& p) {
      const double y = manufactured(p);
      return 2 * M_PI * M_PI * y + y * y * y;
    });
    const auto sol = solve_direct(m, NodalField(m), f, 0.1);
    CHECK(sol.final_residual <= 1e-10 * load_vector(m, f).norm());
    hs.push_back(h);
    errs.push_back(l2_error(m, sol.y));
  }
  for (std::size_t i = 1; i < hs.size(); ++i) CHECK(std::log2(errs[i - 1] / errs[i]) > 1.9);
  CHECK(oracle::loglog_slope(hs, errs) > 1.9);
}

TEST_CASE("Newton converges quadratically") {
  const TriMesh m = build_square_mesh(0.1);
  const NodalField f = interpolate_nodal(m, [](const Point2& p) { return 4.0 + 6.0 * p.x - 3.0 * p.y * p.y; });
  const auto sol = solve_direct(m, NodalField(m), f, 0.1, 1e-13);
  const auto& r = sol.residual_history;
  REQUIRE(r.size() >= 3);
  // Last productive steps: r_{n+1} / r_n^2 stays bounded.
  for (std::size_t i = 1; i + 1 < r.size(); ++i) {
    if (r[i] > 1e-9 && r[i + 1] > 1e-14) CHECK(r[i + 1] / (r[i] * r[i]) < 1e3);
  }
  CHECK(sol.newton_iters <= 12);
}

TEST_CASE("zero-mean source starting from zero") {
  const TriMesh m = build_square_mesh(0.1);
  const NodalField f = interpolate_nodal(m, [](const Point2& p) { return p.x; });
  const NodalField u = interpolate_nodal(m, [](const Point2& p) { return norm(p) < 0.45 ? 1.0 : 0.0; });
  const auto sol = solve_direct(m, u, f, 0.1);
  const SemilinearOperator op(m, coefficients_from_field(m, u, 0.1));
  CHECK(op.residual(to_vector(sol.y), load_vector(m, f)).norm() <= 1e-10 * load_vector(m, f).norm());
  // Odd symmetry of the data carries over to the solution.
  const PointLocator loc(m);
  CHECK(loc.evaluate(sol.y.values(), {0.7, 0.2}) == doctest::Approx(-loc.evaluate(sol.y.values(), {-0.7, 0.2})).epsilon(1e-8));
}

TEST_CASE("phase field validation") {
  const TriMesh m = build_square_mesh(0.5);
  CHECK_THROWS_AS(solve_direct(m, NodalField(m, 1.0), NodalField(m, 1.0), 0.1), ValidationError);
  CHECK_THROWS_AS(solve_direct(m, NodalField(m, 1.2), NodalField(m, 1.0), 0.1), ValidationError);
  CHECK_THROWS_AS(solve_direct(m, NodalField(m, -0.1), NodalField(m, 1.0), 0.1), ValidationError);
  CHECK_THROWS_AS(solve_direct(m, NodalField(m), NodalField(m), 1.0), ValidationError);
}

TEST_CASE("Jacobian matches finite differences of the residual") {
  std::mt19937_64 rng(2);
  const TriMesh m = build_square_mesh(0.25);
  const NodalField u = random_phase(m, rng, 0.0, 1.0);
  const SemilinearOperator op(m, coefficients_from_field(m, u, 0.1));
  const NodalField yv = random_phase(m, rng, -1.0, 2.0);
  const NodalField dv = random_phase(m, rng, -1.0, 1.0);
  const Vector y = to_vector(yv), d = to_vector(dv), load = Vector::Zero(m.num_vertices());
  const double s = 1e-6;
  const Vector fd = (op.residual(y + s * d, load) - op.residual(y - s * d, load)) / (2 * s);
  CHECK((fd - op.jacobian(y).matrix * d).norm() < 1e-8 * fd.norm());
}

TEST_CASE("linearized problem") {
  std::mt19937_64 rng(4);
  const TriMesh m = build_square_mesh(0.2);
  SUBCASE("zero direction") {
    const NodalField u(m);
    const auto y = solve_direct(m, u, NodalField(m, 1.0), 0.1);
    const NodalField s = solve_linearized(m, u, y, NodalField(m), 0.1);
    for (double v : s.values()) CHECK(v == 0.0);
  }
  SUBCASE("homogeneous case against direct assembly") {
    const NodalField u(m);
    const auto y = solve_direct(m, u, NodalField(m, 1.0), 0.1);
    const NodalField theta = random_phase(m, rng, -1.0, 1.0);
    const NodalField s = solve_linearized(m, u, y, theta, 0.1);
    const std::vector<double> one(static_cast<std::size_t>(m.num_triangles()), 1.0);
    const Eigen::MatrixXd a = oracle::dense_stiffness(m, one) + 3.0 * oracle::dense_mass(m, one);
    const Eigen::VectorXd rhs = oracle::dense_mass(m, one) * to_vector(theta);
    const Eigen::VectorXd ref = a.ldlt().solve(rhs);
    CHECK((to_vector(s) - ref).norm() < 1e-9 * ref.norm());
  }
  SUBCASE("Taylor remainder is second order") {
    const NodalField u = random_phase(m, rng, 0.2, 0.8);
    const NodalField theta = random_phase(m, rng, -1.0, 1.0);
    const NodalField f = interpolate_nodal(m, [](const Point2& p) { return 1.0 + p.x; });
    const auto y0 = solve_direct(m, u, f, 0.1, 1e-13);
    const NodalField sd = solve_linearized(m, u, y0, theta, 0.1);
    const std::vector<double> one(static_cast<std::size_t>(m.num_triangles()), 1.0);
    const SparseOperator k = assemble_stiffness(m, one), mm = assemble_mass(m, one);
    std::vector<double> ss, errs;
    for (double s : {1e-1, 1e-2, 1e-3, 1e-4}) {
      std::vector<double> us(u.size());
      for (std::size_t i = 0; i < us.size(); ++i) us[i] = u[i] + s * theta[i];
      const auto ys = solve_direct(m, NodalField(m, us), f, 0.1, 1e-13);
      const Vector r = to_vector(ys.y) - to_vector(y0.y) - s * to_vector(sd);
      ss.push_back(s);
      errs.push_back(h1_norm(k, mm, r));
    }
    CHECK(oracle::loglog_slope(ss, errs) >= 1.9);
  }
}

TEST_CASE("source assumption diagnostic") {
  const TriMesh m = build_square_mesh(0.1);
  const NodalField inner = interpolate_nodal(m, [](const Point2& p) { return norm(p) < 0.5 ? 1.0 : 0.0; });
  CHECK(check_source_assumption(m, NodalField(m, 1.0), inner).route == SourceRoute::kNonzeroMean);
  const NodalField fx = interpolate_nodal(m, [](const Point2& p) { return p.x; });
  const auto d = check_source_assumption(m, fx, inner);
  CHECK(d.route == SourceRoute::kBoundaryCollar);
  CHECK(std::abs(d.integral) < 1e-12);
  CHECK(check_source_assumption(m, NodalField(m), inner).route == SourceRoute::kNone);
  // The collar route needs the inclusion to stay away from the boundary.
  const NodalField touching = interpolate_nodal(m, [](const Point2& p) { return p.x > 0.5 ? 1.0 : 0.0; });
  CHECK(check_source_assumption(m, fx, touching).route == SourceRoute::kNone);
}

TEST_CASE("discrete monotonicity and solution bounds") {
  std::mt19937_64 rng(8);
  const TriMesh m = build_square_mesh(0.2);
  const NodalField f = interpolate_nodal(m, [](const Point2& p) { return p.x + 0.5 * p.y; });
  const std::vector<double> one(static_cast<std::size_t>(m.num_triangles()), 1.0);
  const SparseOperator k = assemble_stiffness(m, one), mm = assemble_mass(m, one);
  double max_norm = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const NodalField u = random_phase(m, rng, 0.0, 1.0);
    const SemilinearOperator op(m, coefficients_from_field(m, u, 0.1));
    const auto sol = solve_direct(op, f);
    max_norm = std::max(max_norm, h1_norm(k, mm, to_vector(sol.y)));
    if (trial < 20) {
      const Vector y1 = to_vector(random_phase(m, rng, -2.0, 2.0)), y2 = to_vector(random_phase(m, rng, -2.0, 2.0));
      const Vector load = load_vector(m, f);
      CHECK((op.residual(y1, load) - op.residual(y2, load)).dot(y1 - y2) >= 0.0);
    }
  }
  CHECK(std::isfinite(max_norm));
  CHECK(max_norm < 10.0);
}
