#pragma once

#include "pfinv/forward.hpp"

namespace pfinv {

/// M_boundary (y - y_meas); only boundary values of y_meas matter.
Vector boundary_misfit_load(const SparseOperator& boundary_mass, const NodalField& y, const NodalField& y_meas);

/// p with J(y) p = M_boundary (y - y_meas), J the Newton Jacobian at the converged y.
NodalField solve_adjoint(const SemilinearOperator& op, const NodalField& y, const NodalField& y_meas,
                         const SparseOperator& boundary_mass);
NodalField solve_adjoint(const TriMesh& mesh, const NodalField& u, const ForwardSolution& y,
                         const NodalField& y_meas, double k);

}  // namespace pfinv
