#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "pfinv/field.hpp"
#include "pfinv/mesh.hpp"

namespace pfinv {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Assembled bilinear form bound to the mesh it was built on.
struct SparseOperator {
  SparseMatrix matrix;
  bool symmetric = true;
  std::uint64_t mesh_id = 0;

  int dimension() const { return static_cast<int>(matrix.rows()); }
  Vector apply(const Vector& x) const { return matrix * x; }
};

/// Interior quadrature rule exact for quadratics: barycentric points
/// (2/3,1/6,1/6) and permutations, equal weights 1/3 of the area.
inline constexpr std::array<std::array<double, 3>, 3> kQuadBary{{
    {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
    {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0},
}};
inline constexpr double kQuadWeight = 1.0 / 3.0;

using QuadValues = std::array<double, 3>;

/// Coefficients of the direct problem: a(u) = 1-(1-k)u per triangle (from the
/// centroid value of u) and b(u) = 1-u at the three quadrature points.
struct CoefficientPair {
  double k = 0.1;
  std::vector<double> a_of_u;
  std::vector<QuadValues> b_of_u;
};

double coefficient_a(double u, double k);
double coefficient_b(double u);

/// Coefficients from a P1 phase field.
CoefficientPair coefficients_from_field(const TriMesh& mesh, const NodalField& u, double k);
/// Coefficients from an elementwise indicator (1 inside the inclusion).
CoefficientPair coefficients_from_indicator(const TriMesh& mesh, std::span<const double> chi, double k);

/// Values of a P1 field at the quadrature points of every triangle.
std::vector<QuadValues> quad_values(const TriMesh& mesh, std::span<const double> nodal);
/// Elementwise gradient of a P1 field.
std::vector<Point2> element_gradients(const TriMesh& mesh, std::span<const double> nodal);
/// Gradients of the three hat functions on triangle t.
std::array<Point2, 3> hat_gradients(const TriMesh& mesh, int t);

SparseOperator assemble_stiffness(const TriMesh& mesh, std::span<const double> coeff);
SparseOperator assemble_mass(const TriMesh& mesh, std::span<const double> coeff, bool lumped = false);
/// Mass matrix weighted by a coefficient given at the quadrature points.
SparseOperator assemble_quadrature_mass(const TriMesh& mesh, std::span<const QuadValues> coeff);
SparseOperator assemble_boundary_mass(const TriMesh& mesh);

/// Load vector (int f phi_i) of a P1 field, integrated exactly.
Vector load_vector(const TriMesh& mesh, const NodalField& f);

NodalField interpolate_nodal(const TriMesh& mesh, const std::function<double(const Point2&)>& f);
NodalField transfer_field(const TriMesh& src_mesh, const NodalField& field, const TriMesh& dst_mesh);

Vector to_vector(const NodalField& field);
NodalField to_field(const TriMesh& mesh, const Vector& v);

/// Sparse LDL^T solve with iterative refinement until |A x - rhs| <= tol |rhs|.
/// Throws SolverError when a pivot is not positive (operator not SPD) or the
/// tolerance is not reached.
Vector solve_spd(const SparseOperator& a, const Vector& rhs, double tol = 1e-11);
Vector solve_spd(const SparseMatrix& a, const Vector& rhs, double tol = 1e-11);

/// H1 norm sqrt(v^T K v + v^T M v) with the given stiffness and mass operators.
double h1_norm(const SparseOperator& stiffness, const SparseOperator& mass, const Vector& v);
double l2_norm(const SparseOperator& mass, const Vector& v);

}  // namespace pfinv
