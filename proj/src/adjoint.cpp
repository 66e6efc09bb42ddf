#include "pfinv/adjoint.hpp"

#include "pfinv/errors.hpp"

namespace pfinv {

Vector boundary_misfit_load(const SparseOperator& boundary_mass, const NodalField& y, const NodalField& y_meas) {
  if (y.size() != y_meas.size() || static_cast<int>(y.size()) != boundary_mass.dimension()) {
    throw ValidationError("boundary misfit: size mismatch");
  }
  return boundary_mass.matrix * (to_vector(y) - to_vector(y_meas));
}

NodalField solve_adjoint(const SemilinearOperator& op, const NodalField& y, const NodalField& y_meas,
                         const SparseOperator& boundary_mass) {
  const TriMesh& mesh = op.mesh();
  require_bound(y, mesh, "solve_adjoint");
  require_bound(y_meas, mesh, "solve_adjoint");
  if (boundary_mass.mesh_id != mesh.id()) throw ValidationError("solve_adjoint: boundary mass built on another mesh");
  const Vector rhs = boundary_misfit_load(boundary_mass, y, y_meas);
  return to_field(mesh, solve_spd(op.jacobian(to_vector(y)), rhs));
}

NodalField solve_adjoint(const TriMesh& mesh, const NodalField& u, const ForwardSolution& y,
                         const NodalField& y_meas, double k) {
  validate_phase_field(u);
  const SemilinearOperator op(mesh, coefficients_from_field(mesh, u, k));
  return solve_adjoint(op, y.y, y_meas, assemble_boundary_mass(mesh));
}

}  // namespace pfinv
