#include "pfinv/objective.hpp"

#include <cmath>

#include "pfinv/errors.hpp"

namespace pfinv {
namespace {

std::vector<double> ones_per_triangle(const TriMesh& mesh) {
  return std::vector<double>(static_cast<std::size_t>(mesh.num_triangles()), 1.0);
}

}  // namespace

RelaxedObjective::RelaxedObjective(const TriMesh& mesh, std::vector<Measurement> measurements, ObjectiveParams params)
    : mesh_(&mesh), measurements_(std::move(measurements)), params_(params) {
  if (measurements_.empty()) throw ValidationError("objective needs at least one measurement");
  if (!(params_.alpha > 0.0) || !(params_.epsilon > 0.0)) throw ValidationError("alpha and epsilon must be positive");
  if (!(params_.k > 0.0 && params_.k < 1.0)) throw ValidationError("contrast k must lie in (0, 1)");
  for (const Measurement& m : measurements_) {
    require_bound(m.f, mesh, "objective source");
    require_bound(m.y_meas, mesh, "objective datum");
  }
  const std::vector<double> one = ones_per_triangle(mesh);
  stiffness_ = assemble_stiffness(mesh, one);
  mass_ = assemble_mass(mesh, one, false);
  lumped_mass_ = assemble_mass(mesh, one, true);
  boundary_mass_ = assemble_boundary_mass(mesh);
}

CostBreakdown RelaxedObjective::gl_energy(const NodalField& u) const {
  require_bound(u, *mesh_, "gl_energy");
  const Vector uv = to_vector(u);
  const Vector mu = mass_.matrix * uv;
  CostBreakdown c;
  c.j_gl_gradient = params_.alpha * params_.epsilon * uv.dot(stiffness_.matrix * uv);
  c.j_gl_well = params_.alpha / params_.epsilon * (mu.sum() - uv.dot(mu));
  c.tv_diag = tv_diagnostic(*mesh_, u);
  return c;
}

Vector RelaxedObjective::gl_gradient(const NodalField& u) const {
  const Vector uv = to_vector(u);
  const Vector w = Vector::Ones(uv.size()) - 2.0 * uv;
  return 2.0 * params_.alpha * params_.epsilon * (stiffness_.matrix * uv) +
         params_.alpha / params_.epsilon * (mass_.matrix * w);
}

ObjectiveEvaluation RelaxedObjective::evaluate(const NodalField& u, bool with_gradient,
                                               const std::vector<NodalField>* warm_y) const {
  require_bound(u, *mesh_, "objective");
  validate_phase_field(u);
  const SemilinearOperator op(*mesh_, coefficients_from_field(*mesh_, u, params_.k));
  ObjectiveEvaluation ev;
  ev.cost = gl_energy(u);
  const double inv_n = 1.0 / static_cast<double>(measurements_.size());
  if (with_gradient) ev.misfit_gradient = Vector::Zero(mesh_->num_vertices());
  for (std::size_t i = 0; i < measurements_.size(); ++i) {
    const Measurement& m = measurements_[i];
    NewtonOptions options;
    options.tol = params_.newton_tol;
    Vector guess;
    if (warm_y != nullptr && i < warm_y->size() && (*warm_y)[i].bound_to(*mesh_)) {
      guess = to_vector((*warm_y)[i]);
      options.initial_guess = &guess;
    }
    ForwardSolution sol = solve_direct(op, m.f, options);
    ev.cost.j_pde += inv_n * boundary_misfit(boundary_mass_, sol.y, m.y_meas);
    if (with_gradient) {
      NodalField p = solve_adjoint(op, sol.y, m.y_meas, boundary_mass_);
      ev.misfit_gradient += inv_n * coefficient_sensitivity(op, sol.y, p);
      ev.p.push_back(std::move(p));
    }
    ev.y.push_back(std::move(sol.y));
  }
  ev.cost.total = ev.cost.j_pde + ev.cost.j_gl_gradient + ev.cost.j_gl_well;
  if (with_gradient) ev.gradient = ev.misfit_gradient + gl_gradient(u);
  return ev;
}

CostBreakdown eval_cost(const TriMesh& mesh, const NodalField& u, const std::vector<Measurement>& measurements,
                        double alpha, double epsilon, double k) {
  ObjectiveParams params{alpha, epsilon, k};
  return RelaxedObjective(mesh, measurements, params).evaluate(u, false).cost;
}

Vector eval_gradient(const TriMesh& mesh, const NodalField& u, const std::vector<Measurement>& measurements,
                     double alpha, double epsilon, double k) {
  ObjectiveParams params{alpha, epsilon, k};
  return RelaxedObjective(mesh, measurements, params).evaluate(u, true).gradient;
}

double tv_diagnostic(const TriMesh& mesh, const NodalField& u) {
  require_bound(u, mesh, "tv_diagnostic");
  const std::vector<Point2> g = element_gradients(mesh, u.values());
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) s += mesh.area(t) * norm(g[static_cast<std::size_t>(t)]);
  return s;
}

double boundary_misfit(const SparseOperator& boundary_mass, const NodalField& y, const NodalField& y_meas) {
  const Vector r = to_vector(y) - to_vector(y_meas);
  return 0.5 * r.dot(boundary_mass.matrix * r);
}

}  // namespace pfinv
