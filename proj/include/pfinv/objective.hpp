#pragma once

#include <vector>

#include "pfinv/adjoint.hpp"
#include "pfinv/measurement.hpp"

namespace pfinv {

struct CostBreakdown {
  double j_pde = 0.0;
  double j_gl_gradient = 0.0;
  double j_gl_well = 0.0;
  double total = 0.0;
  double tv_diag = 0.0;
};

struct ObjectiveParams {
  double alpha = 1e-4;
  double epsilon = 0.0397887357729738;  // 1/(8 pi)
  double k = 0.1;
  double newton_tol = 1e-10;
};

/// States and derivative of the relaxed functional at one phase field.
struct ObjectiveEvaluation {
  CostBreakdown cost;
  std::vector<NodalField> y;  // one per measurement
  std::vector<NodalField> p;  // empty unless the gradient was requested
  Vector misfit_gradient;     // averaged PDE part of J'
  Vector gradient;            // full J' (misfit + Ginzburg-Landau)
};

/// Relaxed functional J_eps(u) = mean_i 1/2 |S_i(u) - y_meas,i|^2_{L2(dOmega)}
///   + alpha eps int |grad u|^2 + (alpha/eps) int u(1-u)
/// with the mesh operators assembled once.
class RelaxedObjective {
 public:
  RelaxedObjective(const TriMesh& mesh, std::vector<Measurement> measurements, ObjectiveParams params);

  const TriMesh& mesh() const { return *mesh_; }
  const ObjectiveParams& params() const { return params_; }
  const std::vector<Measurement>& measurements() const { return measurements_; }
  const SparseOperator& stiffness() const { return stiffness_; }
  const SparseOperator& mass() const { return mass_; }
  const SparseOperator& lumped_mass() const { return lumped_mass_; }
  const SparseOperator& boundary_mass() const { return boundary_mass_; }

  /// warm_y (optional) holds one previous state per measurement for Newton.
  ObjectiveEvaluation evaluate(const NodalField& u, bool with_gradient,
                               const std::vector<NodalField>* warm_y = nullptr) const;
  double value(const NodalField& u) const { return evaluate(u, false).cost.total; }

  /// Ginzburg-Landau parts only; fills j_gl_gradient, j_gl_well, tv_diag.
  CostBreakdown gl_energy(const NodalField& u) const;
  /// 2 alpha eps K u + (alpha/eps) M (1 - 2u).
  Vector gl_gradient(const NodalField& u) const;

 private:
  const TriMesh* mesh_;
  std::vector<Measurement> measurements_;
  ObjectiveParams params_;
  SparseOperator stiffness_;
  SparseOperator mass_;
  SparseOperator lumped_mass_;
  SparseOperator boundary_mass_;
};

CostBreakdown eval_cost(const TriMesh& mesh, const NodalField& u, const std::vector<Measurement>& measurements,
                        double alpha, double epsilon, double k);
Vector eval_gradient(const TriMesh& mesh, const NodalField& u, const std::vector<Measurement>& measurements,
                     double alpha, double epsilon, double k);

/// Sum over triangles of area * |grad u|.
double tv_diagnostic(const TriMesh& mesh, const NodalField& u);

/// Misfit 1/2 r^T M_boundary r of one state against its datum.
double boundary_misfit(const SparseOperator& boundary_mass, const NodalField& y, const NodalField& y_meas);

}  // namespace pfinv
