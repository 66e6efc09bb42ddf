#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"
#include "pfinv/adjoint.hpp"

using namespace pfinv;

namespace {

NodalField random_field(const TriMesh& m, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(m.num_vertices()));
  for (double& x : v) x = d(rng);
  return NodalField(m, v);
}

}  // namespace

TEST_CASE("adjoint vanishes for exact data") {
  const TriMesh m = build_square_mesh(0.2);
  const NodalField u = interpolate_nodal(m, [](const Point2& p) { return norm(p) < 0.5 ? 0.7 : 0.0; });
  const NodalField f = interpolate_nodal(m, [](const Point2& p) { return p.x; });
  const auto y = solve_direct(m, u, f, 0.1);
  const NodalField p = solve_adjoint(m, u, y, y.y, 0.1);
  for (double v : p.values()) CHECK(v == 0.0);
}

TEST_CASE("homogeneous adjoint against independent assembly") {
  const TriMesh m = build_square_mesh(0.25);
  const NodalField u(m);
  const auto y = solve_direct(m, u, NodalField(m, 1.0), 0.1);
  const NodalField p = solve_adjoint(m, u, y, NodalField(m), 0.1);
  const std::vector<double> one(static_cast<std::size_t>(m.num_triangles()), 1.0);
  const Eigen::MatrixXd a = oracle::dense_stiffness(m, one) + 3.0 * oracle::dense_mass(m, one);
  const Eigen::VectorXd rhs = oracle::dense_boundary_mass(m) * Eigen::VectorXd::Ones(m.num_vertices());
  const Eigen::VectorXd ref = a.ldlt().solve(rhs);
  CHECK((to_vector(p) - ref).norm() < 1e-9 * ref.norm());
}

TEST_CASE("adjoint identity and linearity") {
  std::mt19937_64 rng(21);
  const TriMesh m = build_square_mesh(0.2);
  const NodalField u = random_field(m, rng, 0.0, 0.9);
  const NodalField f = interpolate_nodal(m, [](const Point2& p) { return p.y; });
  const double k = 0.1;
  const SemilinearOperator op(m, coefficients_from_field(m, u, k));
  const auto sol = solve_direct(op, f);
  const NodalField y_meas = random_field(m, rng, -0.5, 0.5);
  const SparseOperator mb = assemble_boundary_mass(m);
  const NodalField p = solve_adjoint(op, sol.y, y_meas, mb);
  const Vector r = to_vector(sol.y) - to_vector(y_meas);
  for (int i = 0; i < 20; ++i) {
    const NodalField theta = random_field(m, rng, -1.0, 1.0);
    const NodalField s = solve_linearized(op, sol.y, theta);
    const double lhs = r.dot(mb.matrix * to_vector(s));
    const double rhs = linearized_load(op, sol.y, theta).dot(to_vector(p));
    CHECK(std::abs(lhs - rhs) <= 1e-9 * std::abs(lhs));
    // The transposed assembly reproduces the same pairing.
    CHECK(std::abs(coefficient_sensitivity(op, sol.y, p).dot(to_vector(theta)) - rhs) <= 1e-12 * std::abs(rhs));
  }
  // Doubling the misfit doubles p.
  std::vector<double> doubled(y_meas.size());
  for (std::size_t i = 0; i < doubled.size(); ++i) doubled[i] = sol.y[i] - 2.0 * (sol.y[i] - y_meas[i]);
  const NodalField p2 = solve_adjoint(op, sol.y, NodalField(m, doubled), mb);
  CHECK((to_vector(p2) - 2.0 * to_vector(p)).norm() <= 1e-12 * to_vector(p).norm() * 10);
}
