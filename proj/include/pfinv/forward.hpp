#pragma once

#include <string>
#include <vector>

#include "pfinv/fem.hpp"

namespace pfinv {

/// Discrete operator of the direct problem for fixed coefficients:
/// F(y) = K_a y + N(y) - M f with N_i(y) = int b(u) y^3 phi_i (3-point rule).
class SemilinearOperator {
 public:
  SemilinearOperator(const TriMesh& mesh, CoefficientPair coefficients);

  const TriMesh& mesh() const { return *mesh_; }
  const CoefficientPair& coefficients() const { return coefficients_; }
  double k() const { return coefficients_.k; }
  /// K_a, assembled once.
  const SparseOperator& stiffness() const { return stiffness_; }

  Vector cubic_term(const Vector& y) const;
  Vector residual(const Vector& y, const Vector& load) const;
  /// Exact Jacobian K_a + mass(3 b y^2); also the adjoint and linearized operator.
  SparseOperator jacobian(const Vector& y) const;

 private:
  const TriMesh* mesh_;
  CoefficientPair coefficients_;
  SparseOperator stiffness_;
};

struct NewtonOptions {
  double tol = 1e-10;  // relative to |M f|
  int max_iterations = 50;
  int max_halvings = 30;
  const Vector* initial_guess = nullptr;
};

struct ForwardSolution {
  NodalField y;
  int newton_iters = 0;
  double final_residual = 0.0;
  std::vector<double> residual_history;
};

/// Throws ValidationError unless 0 <= u <= 1 nodally and u is not identically 1.
void validate_phase_field(const NodalField& u);

ForwardSolution solve_direct(const SemilinearOperator& op, const NodalField& f, const NewtonOptions& options = {});
ForwardSolution solve_direct(const TriMesh& mesh, const NodalField& u, const NodalField& f, double k,
                             double tol = 1e-10);

/// Right-hand side of the linearized problem for a nodal perturbation theta:
/// int (1-k) theta grad y . grad phi_j + int theta y^3 phi_j.
Vector linearized_load(const SemilinearOperator& op, const NodalField& y, const NodalField& theta);

/// S* with J(y) S* = linearized_load(theta).
NodalField solve_linearized(const SemilinearOperator& op, const NodalField& y, const NodalField& theta);
NodalField solve_linearized(const TriMesh& mesh, const NodalField& u, const ForwardSolution& y,
                            const NodalField& theta, double k);

/// Transpose of linearized_load: entry i = int (1-k) phi_i grad y . grad p + int phi_i y^3 p.
Vector coefficient_sensitivity(const SemilinearOperator& op, const NodalField& y, const NodalField& p);

enum class SourceRoute { kNonzeroMean, kBoundaryCollar, kNone };

struct SourceDiagnostic {
  SourceRoute route = SourceRoute::kNone;
  double integral = 0.0;         // int f
  double collar_integral = 0.0;  // int over the collar of |f|
  bool u_vanishes_on_collar = false;
  std::string message;
};

/// Checks the solvability hypotheses on the source: either int f != 0, or f is
/// nonzero on the boundary collar of width d0 where u vanishes.
SourceDiagnostic check_source_assumption(const TriMesh& mesh, const NodalField& f, const NodalField& u,
                                         double d0 = 0.1);

/// Distance from every vertex to the boundary polyline.
std::vector<double> boundary_distance(const TriMesh& mesh);

}  // namespace pfinv
