#include "pfinv/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pfinv/errors.hpp"

namespace pfinv {

SemilinearOperator::SemilinearOperator(const TriMesh& mesh, CoefficientPair coefficients)
    : mesh_(&mesh), coefficients_(std::move(coefficients)) {
  if (coefficients_.a_of_u.size() != static_cast<std::size_t>(mesh.num_triangles()) ||
      coefficients_.b_of_u.size() != static_cast<std::size_t>(mesh.num_triangles())) {
    throw ValidationError("coefficients do not match the mesh");
  }
  stiffness_ = assemble_stiffness(mesh, coefficients_.a_of_u);
}

Vector SemilinearOperator::cubic_term(const Vector& y) const {
  const TriMesh& mesh = *mesh_;
  Vector out = Vector::Zero(mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const double w = kQuadWeight * mesh.area(t);
    const QuadValues& b = coefficients_.b_of_u[static_cast<std::size_t>(t)];
    for (int q = 0; q < 3; ++q) {
      const auto& l = kQuadBary[static_cast<std::size_t>(q)];
      const double yq = l[0] * y[tri[0]] + l[1] * y[tri[1]] + l[2] * y[tri[2]];
      const double c = w * b[static_cast<std::size_t>(q)] * yq * yq * yq;
      for (int i = 0; i < 3; ++i) out[tri[i]] += c * l[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

Vector SemilinearOperator::residual(const Vector& y, const Vector& load) const {
  return stiffness_.matrix * y + cubic_term(y) - load;
}

SparseOperator SemilinearOperator::jacobian(const Vector& y) const {
  const TriMesh& mesh = *mesh_;
  std::vector<QuadValues> c = quad_values(mesh, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    for (int q = 0; q < 3; ++q) {
      double& v = c[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)];
      v = 3.0 * coefficients_.b_of_u[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)] * v * v;
    }
  }
  SparseOperator j = assemble_quadrature_mass(mesh, c);
  j.matrix += stiffness_.matrix;
  j.matrix.prune(0.0);
  return j;
}

void validate_phase_field(const NodalField& u) {
  bool all_one = u.size() > 0;
  for (double v : u.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("phase field must lie in [0, 1]");
    all_one = all_one && v == 1.0;
  }
  if (all_one) throw ValidationError("phase field is identically 1; the direct problem is not well posed");
}

ForwardSolution solve_direct(const SemilinearOperator& op, const NodalField& f, const NewtonOptions& options) {
  const TriMesh& mesh = op.mesh();
  require_bound(f, mesh, "solve_direct");
  const Vector load = load_vector(mesh, f);
  const double target = options.tol * std::max(load.norm(), std::numeric_limits<double>::min());

  Vector y;
  if (options.initial_guess != nullptr) {
    if (options.initial_guess->size() != mesh.num_vertices()) throw ValidationError("initial guess has wrong length");
    y = *options.initial_guess;
  } else {
    // A constant matching the mean balance int b c^3 = int f removes the
    // null space of K_a from the first Newton step.
    y = Vector::Zero(mesh.num_vertices());
    const double mean_f = load.sum();
    const double mean_b = op.cubic_term(Vector::Ones(mesh.num_vertices())).sum();
    if (mean_f != 0.0 && mean_b > 0.0) y.setConstant(std::cbrt(mean_f / mean_b));
  }

  ForwardSolution sol;
  Vector r = op.residual(y, load);
  double rnorm = r.norm();
  sol.residual_history.push_back(rnorm);
  SparseOperator unit_mass;
  while (rnorm > target) {
    if (sol.newton_iters >= options.max_iterations) {
      if (rnorm <= 1e3 * target) break;  // round-off plateau just above the target
      std::ostringstream msg;
      msg << "Newton iteration cap reached with residual " << rnorm << " (target " << target << ")";
      throw SolverError(msg.str());
    }
    const SparseOperator jac = op.jacobian(y);
    Vector dy;
    try {
      dy = solve_spd(jac, -r);
    } catch (const SolverError&) {
      // Levenberg-Marquardt fallback for a (nearly) singular Jacobian.
      if (unit_mass.matrix.size() == 0) {
        unit_mass = assemble_mass(mesh, std::vector<double>(static_cast<std::size_t>(mesh.num_triangles()), 1.0), true);
      }
      dy = solve_spd(SparseMatrix(jac.matrix + unit_mass.matrix), -r);
    }
    if (dy.norm() <= 1e-15 * std::max(y.norm(), 1.0) && rnorm <= 1e3 * target) break;
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      const Vector y_try = y + step * dy;
      const Vector r_try = op.residual(y_try, load);
      const double n_try = r_try.norm();
      if (std::isfinite(n_try) && n_try < rnorm) {
        y = y_try;
        r = r_try;
        rnorm = n_try;
        accepted = true;
        break;
      }
    }
    ++sol.newton_iters;
    sol.residual_history.push_back(rnorm);
    if (!accepted) {
      if (rnorm <= 1e3 * target) break;  // stagnation at round-off level
      throw SolverError("Newton line search failed to reduce the residual " + std::to_string(rnorm));
    }
  }
  sol.y = to_field(mesh, y);
  sol.final_residual = rnorm;
  return sol;
}

ForwardSolution solve_direct(const TriMesh& mesh, const NodalField& u, const NodalField& f, double k, double tol) {
  validate_phase_field(u);
  const SemilinearOperator op(mesh, coefficients_from_field(mesh, u, k));
  NewtonOptions options;
  options.tol = tol;
  return solve_direct(op, f, options);
}

Vector linearized_load(const SemilinearOperator& op, const NodalField& y, const NodalField& theta) {
  const TriMesh& mesh = op.mesh();
  require_bound(y, mesh, "linearized_load");
  require_bound(theta, mesh, "linearized_load");
  const double one_minus_k = 1.0 - op.k();
  Vector out = Vector::Zero(mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const auto g = hat_gradients(mesh, t);
    Point2 gy;
    for (int i = 0; i < 3; ++i) gy += g[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(tri[i])];
    const double area = mesh.area(t);
    const double theta_bar = (theta[static_cast<std::size_t>(tri[0])] + theta[static_cast<std::size_t>(tri[1])] +
                              theta[static_cast<std::size_t>(tri[2])]) / 3.0;
    for (int i = 0; i < 3; ++i) out[tri[i]] += one_minus_k * theta_bar * area * dot(gy, g[static_cast<std::size_t>(i)]);
    const double w = kQuadWeight * area;
    for (int q = 0; q < 3; ++q) {
      const auto& l = kQuadBary[static_cast<std::size_t>(q)];
      double yq = 0.0, tq = 0.0;
      for (int i = 0; i < 3; ++i) {
        yq += l[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(tri[i])];
        tq += l[static_cast<std::size_t>(i)] * theta[static_cast<std::size_t>(tri[i])];
      }
      const double c = w * tq * yq * yq * yq;
      for (int i = 0; i < 3; ++i) out[tri[i]] += c * l[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

NodalField solve_linearized(const SemilinearOperator& op, const NodalField& y, const NodalField& theta) {
  const Vector rhs = linearized_load(op, y, theta);
  return to_field(op.mesh(), solve_spd(op.jacobian(to_vector(y)), rhs));
}

NodalField solve_linearized(const TriMesh& mesh, const NodalField& u, const ForwardSolution& y,
                            const NodalField& theta, double k) {
  validate_phase_field(u);
  const SemilinearOperator op(mesh, coefficients_from_field(mesh, u, k));
  return solve_linearized(op, y.y, theta);
}

Vector coefficient_sensitivity(const SemilinearOperator& op, const NodalField& y, const NodalField& p) {
  const TriMesh& mesh = op.mesh();
  require_bound(y, mesh, "coefficient_sensitivity");
  require_bound(p, mesh, "coefficient_sensitivity");
  const double one_minus_k = 1.0 - op.k();
  Vector out = Vector::Zero(mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const auto g = hat_gradients(mesh, t);
    Point2 gy, gp;
    for (int i = 0; i < 3; ++i) {
      gy += g[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(tri[i])];
      gp += g[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(tri[i])];
    }
    const double area = mesh.area(t);
    const double grad_term = one_minus_k * area / 3.0 * dot(gy, gp);
    for (int i = 0; i < 3; ++i) out[tri[i]] += grad_term;
    const double w = kQuadWeight * area;
    for (int q = 0; q < 3; ++q) {
      const auto& l = kQuadBary[static_cast<std::size_t>(q)];
      double yq = 0.0, pq = 0.0;
      for (int i = 0; i < 3; ++i) {
        yq += l[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(tri[i])];
        pq += l[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(tri[i])];
      }
      const double c = w * yq * yq * yq * pq;
      for (int i = 0; i < 3; ++i) out[tri[i]] += c * l[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

std::vector<double> boundary_distance(const TriMesh& mesh) {
  std::vector<double> d(static_cast<std::size_t>(mesh.num_vertices()), std::numeric_limits<double>::infinity());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const Point2& p = mesh.vertex(v);
    double best = std::numeric_limits<double>::infinity();
    for (const Edge& e : mesh.boundary_edges()) {
      const Point2& a = mesh.vertex(e[0]);
      const Point2 ab = mesh.vertex(e[1]) - a;
      const double s = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
      best = std::min(best, distance(p, a + ab * s));
    }
    d[static_cast<std::size_t>(v)] = best;
  }
  return d;
}

SourceDiagnostic check_source_assumption(const TriMesh& mesh, const NodalField& f, const NodalField& u, double d0) {
  require_bound(f, mesh, "check_source_assumption");
  require_bound(u, mesh, "check_source_assumption");
  SourceDiagnostic diag;
  diag.integral = load_vector(mesh, f).sum();
  const std::vector<double> dist = boundary_distance(mesh);

  double scale = 0.0;
  for (double v : f.values()) scale = std::max(scale, std::abs(v));
  bool vanish = true;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (dist[static_cast<std::size_t>(v)] < d0 && std::abs(u[static_cast<std::size_t>(v)]) > 1e-12) vanish = false;
  }
  diag.u_vanishes_on_collar = vanish;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    bool in_collar = true;
    double fa = 0.0;
    for (int v : tri) {
      in_collar = in_collar && dist[static_cast<std::size_t>(v)] < d0;
      fa += std::abs(f[static_cast<std::size_t>(v)]) / 3.0;
    }
    if (in_collar) diag.collar_integral += fa * mesh.area(t);
  }

  std::ostringstream msg;
  if (std::abs(diag.integral) > 1e-12 * std::max(scale, 1.0) * mesh.total_area()) {
    diag.route = SourceRoute::kNonzeroMean;
    msg << "source has nonzero mean (integral " << diag.integral << ")";
  } else if (vanish && diag.collar_integral > 1e-12 * std::max(scale, 1.0) * mesh.total_area()) {
    diag.route = SourceRoute::kBoundaryCollar;
    msg << "source has zero mean but is nonzero on the boundary collar of width " << d0
        << " where the inclusion vanishes";
  } else {
    diag.route = SourceRoute::kNone;
    msg << "warning: source satisfies neither the nonzero-mean nor the boundary-collar hypothesis";
  }
  diag.message = msg.str();
  return diag;
}

}  // namespace pfinv
