#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pfinv/errors.hpp"
#include "pfinv/objective.hpp"

using namespace pfinv;

namespace {

NodalField random_field(const TriMesh& m, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(m.num_vertices()));
  for (double& x : v) x = d(rng);
  return NodalField(m, v);
}

std::vector<Measurement> exact_measurements(const TriMesh& m, const NodalField& u, double k) {
  std::vector<Measurement> out;
  for (auto src : {SourceTerm{1, 0, 0}, SourceTerm{0, 1, 0}}) {
    const NodalField f = interpolate_nodal(m, src);
    out.push_back({f, solve_direct(m, u, f, k).y});
  }
  return out;
}

double profile(double s, double eps) {
  // Optimal one-dimensional transition from 0 to 1 centered at s = 0.
  const double w = M_PI * eps;
  if (s <= -w / 2) return 0.0;
  if (s >= w / 2) return 1.0;
  return std::pow(std::sin((s + w / 2) / (2 * eps)), 2);
}

}  // namespace

TEST_CASE("cost of exact data without inclusion is zero") {
  const TriMesh m = build_square_mesh(0.2);
  const auto meas = exact_measurements(m, NodalField(m), 0.1);
  const CostBreakdown c = eval_cost(m, NodalField(m), meas, 1e-4, 1.0 / (8 * M_PI), 0.1);
  CHECK(c.total == 0.0);
  const Vector g = eval_gradient(m, NodalField(m), meas, 1e-4, 1.0 / (8 * M_PI), 0.1);
  // Only the well term survives: (alpha/eps) M 1 >= 0 entrywise.
  for (int i = 0; i < g.size(); ++i) CHECK(g[i] > 0.0);
}

TEST_CASE("Ginzburg-Landau arithmetic and scaling") {
  const TriMesh m = build_square_mesh(0.2);
  const auto meas = exact_measurements(m, NodalField(m), 0.1);
  const double alpha = 1e-3, eps = 0.05;
  RelaxedObjective obj(m, meas, {alpha, eps, 0.1});
  const CostBreakdown half = obj.gl_energy(NodalField(m, 0.5));
  CHECK(std::abs(half.j_gl_gradient) < 1e-16);
  CHECK(half.j_gl_well == doctest::Approx(alpha / eps).epsilon(1e-12));

  std::mt19937_64 rng(3);
  const NodalField u = random_field(m, rng, 0.0, 1.0);
  RelaxedObjective obj2(m, meas, {alpha, 2 * eps, 0.1});
  const CostBreakdown c1 = obj.gl_energy(u), c2 = obj2.gl_energy(u);
  CHECK(c2.j_gl_well == doctest::Approx(0.5 * c1.j_gl_well).epsilon(1e-14));
  CHECK(c2.j_gl_gradient == doctest::Approx(2.0 * c1.j_gl_gradient).epsilon(1e-14));
  const CostBreakdown full = obj.evaluate(u, false).cost;
  CHECK(full.total == doctest::Approx(full.j_pde + full.j_gl_gradient + full.j_gl_well).epsilon(1e-15));
  CHECK(full.j_pde >= 0.0);
  CHECK(full.j_gl_well >= 0.0);
}

TEST_CASE("multi-measurement average") {
  std::mt19937_64 rng(4);
  const TriMesh m = build_square_mesh(0.2);
  const NodalField truth = interpolate_nodal(m, [](const Point2& p) { return norm(p - Point2{0.2, 0}) < 0.4 ? 1.0 : 0.0; });
  const auto meas = exact_measurements(m, truth, 0.1);
  const NodalField u = random_field(m, rng, 0.0, 1.0);
  const ObjectiveParams params{1e-4, 0.04, 0.1};
  const double both = RelaxedObjective(m, meas, params).evaluate(u, false).cost.j_pde;
  const double a = RelaxedObjective(m, {meas[0]}, params).evaluate(u, false).cost.j_pde;
  const double b = RelaxedObjective(m, {meas[1]}, params).evaluate(u, false).cost.j_pde;
  CHECK(std::abs(both - 0.5 * (a + b)) <= 1e-14 * both);
}

TEST_CASE("gradient passes the central-difference Taylor test") {
  std::mt19937_64 rng(12);
  const TriMesh m = build_square_mesh(0.2);
  const NodalField truth = interpolate_nodal(m, [](const Point2& p) { return norm(p - Point2{0.2, 0.1}) < 0.45 ? 1.0 : 0.0; });
  const auto meas = exact_measurements(m, truth, 0.1);
  ObjectiveParams params{1e-3, 1.0 / (8 * M_PI), 0.1};
  params.newton_tol = 1e-14;
  const RelaxedObjective obj(m, meas, params);
  for (int trial = 0; trial < 3; ++trial) {
    const NodalField u = random_field(m, rng, 0.15, 0.85);
    const NodalField theta = random_field(m, rng, -1.0, 1.0);
    const double dj = obj.evaluate(u, true).gradient.dot(to_vector(theta));
    std::vector<double> ss, errs;
    for (double s : {1e-1, 1e-2, 1e-3}) {
      std::vector<double> up(u.size()), um(u.size());
      for (std::size_t i = 0; i < up.size(); ++i) {
        up[i] = u[i] + s * theta[i];
        um[i] = u[i] - s * theta[i];
      }
      const double fd = (obj.value(NodalField(m, up)) - obj.value(NodalField(m, um))) / (2 * s);
      ss.push_back(s);
      errs.push_back(std::abs(fd - dj));
    }
    CHECK(oracle::loglog_slope(ss, errs) >= 1.9);
  }
}

TEST_CASE("Ginzburg-Landau gradient against hand assembly") {
  const TriMesh m = build_square_mesh(0.25);
  const NodalField u = interpolate_nodal(m, [](const Point2& p) { return 0.5 + 0.4 * p.x; });
  const auto meas = exact_measurements(m, NodalField(m), 0.1);
  const double alpha = 2e-3, eps = 0.07;
  const RelaxedObjective obj(m, meas, {alpha, eps, 0.1});
  const std::vector<double> one(static_cast<std::size_t>(m.num_triangles()), 1.0);
  const Eigen::VectorXd uv = to_vector(u);
  const Eigen::VectorXd ref = 2 * alpha * eps * oracle::dense_stiffness(m, one) * uv +
                              alpha / eps * oracle::dense_mass(m, one) * (Eigen::VectorXd::Ones(uv.size()) - 2 * uv);
  CHECK((obj.gl_gradient(u) - ref).norm() < 1e-13 * ref.norm());
}

TEST_CASE("total variation diagnostic") {
  const TriMesh m = build_square_mesh(0.02);
  CHECK(tv_diagnostic(m, NodalField(m, 0.3)) < 1e-13);
  CHECK(tv_diagnostic(m, interpolate_nodal(m, [](const Point2& p) { return p.x; })) == doctest::Approx(4.0).epsilon(1e-12));
  const NodalField disc = interpolate_nodal(m, [](const Point2& p) { return profile(0.5 - norm(p), 0.01); });
  CHECK(tv_diagnostic(m, disc) == doctest::Approx(M_PI).epsilon(0.1));
}

TEST_CASE("optimal profile energy approaches the Modica-Mortola constant") {
  const double c = oracle::modica_mortola_constant();
  CHECK(c == doctest::Approx(M_PI / 4).epsilon(1e-10));
  const double eps = 1.0 / (16 * M_PI), alpha = 1e-3;
  const TriMesh m = build_rectangle_mesh(-1, 1, -1, 1, 0.005, GridPattern::kDiagonal);
  const NodalField u = interpolate_nodal(m, [&](const Point2& p) { return profile(p.x - 0.1, eps); });
  std::vector<Measurement> local{{NodalField(m), NodalField(m)}};
  const RelaxedObjective obj(m, local, {alpha, eps, 0.1});
  const CostBreakdown gl = obj.gl_energy(u);
  CHECK(gl.j_gl_gradient + gl.j_gl_well == doctest::Approx(alpha * c * 2.0).epsilon(0.02));
}

TEST_CASE("objective validation") {
  const TriMesh m = build_square_mesh(0.5);
  CHECK_THROWS_AS(RelaxedObjective(m, {}, {}), ValidationError);
  std::vector<Measurement> one{{NodalField(m), NodalField(m)}};
  CHECK_THROWS_AS(RelaxedObjective(m, one, {0.0, 0.1, 0.1}), ValidationError);
  CHECK_THROWS_AS(RelaxedObjective(m, one, {1e-3, 0.1, 0.1}).evaluate(NodalField(m, 2.0), false), ValidationError);
}
