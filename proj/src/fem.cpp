#include "pfinv/fem.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>

#include "pfinv/errors.hpp"

namespace pfinv {
namespace {

using Triplet = Eigen::Triplet<double>;

SparseOperator finish(const TriMesh& mesh, std::vector<Triplet>& triplets) {
  SparseOperator op;
  const int n = mesh.num_vertices();
  op.matrix.resize(n, n);
  op.matrix.setFromTriplets(triplets.begin(), triplets.end());
  op.matrix.prune(0.0);
  op.matrix.makeCompressed();
  op.symmetric = true;
  op.mesh_id = mesh.id();
  return op;
}

void require_elementwise(const TriMesh& mesh, std::size_t n, const char* what) {
  if (n != static_cast<std::size_t>(mesh.num_triangles())) {
    throw ValidationError(std::string(what) + ": coefficient length does not match triangle count");
  }
}

}  // namespace

double coefficient_a(double u, double k) { return 1.0 - (1.0 - k) * u; }
double coefficient_b(double u) { return 1.0 - u; }

CoefficientPair coefficients_from_field(const TriMesh& mesh, const NodalField& u, double k) {
  require_bound(u, mesh, "coefficients_from_field");
  if (!(k > 0.0 && k < 1.0)) throw ValidationError("contrast k must lie in (0, 1)");
  CoefficientPair c;
  c.k = k;
  c.a_of_u.resize(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const double ubar = (u[static_cast<std::size_t>(tri[0])] + u[static_cast<std::size_t>(tri[1])] +
                         u[static_cast<std::size_t>(tri[2])]) / 3.0;
    c.a_of_u[static_cast<std::size_t>(t)] = coefficient_a(ubar, k);
  }
  c.b_of_u = quad_values(mesh, u.values());
  for (QuadValues& q : c.b_of_u) {
    for (double& v : q) v = coefficient_b(v);
  }
  return c;
}

CoefficientPair coefficients_from_indicator(const TriMesh& mesh, std::span<const double> chi, double k) {
  require_elementwise(mesh, chi.size(), "coefficients_from_indicator");
  if (!(k > 0.0 && k < 1.0)) throw ValidationError("contrast k must lie in (0, 1)");
  CoefficientPair c;
  c.k = k;
  c.a_of_u.resize(chi.size());
  c.b_of_u.resize(chi.size());
  for (std::size_t t = 0; t < chi.size(); ++t) {
    c.a_of_u[t] = coefficient_a(chi[t], k);
    const double b = coefficient_b(chi[t]);
    c.b_of_u[t] = {b, b, b};
  }
  return c;
}

std::vector<QuadValues> quad_values(const TriMesh& mesh, std::span<const double> nodal) {
  std::vector<QuadValues> out(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const double v0 = nodal[static_cast<std::size_t>(tri[0])];
    const double v1 = nodal[static_cast<std::size_t>(tri[1])];
    const double v2 = nodal[static_cast<std::size_t>(tri[2])];
    for (int q = 0; q < 3; ++q) {
      const auto& l = kQuadBary[static_cast<std::size_t>(q)];
      out[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)] = l[0] * v0 + l[1] * v1 + l[2] * v2;
    }
  }
  return out;
}

std::array<Point2, 3> hat_gradients(const TriMesh& mesh, int t) {
  const Triangle& tri = mesh.triangle(t);
  const Point2& p0 = mesh.vertex(tri[0]);
  const Point2& p1 = mesh.vertex(tri[1]);
  const Point2& p2 = mesh.vertex(tri[2]);
  const double det = orient(p0, p1, p2);
  // grad phi_i is the inward normal of the opposite edge scaled by 1/det.
  return {Point2{p1.y - p2.y, p2.x - p1.x} * (1.0 / det), Point2{p2.y - p0.y, p0.x - p2.x} * (1.0 / det),
          Point2{p0.y - p1.y, p1.x - p0.x} * (1.0 / det)};
}

std::vector<Point2> element_gradients(const TriMesh& mesh, std::span<const double> nodal) {
  std::vector<Point2> out(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto g = hat_gradients(mesh, t);
    const Triangle& tri = mesh.triangle(t);
    Point2 s;
    for (int i = 0; i < 3; ++i) s += g[static_cast<std::size_t>(i)] * nodal[static_cast<std::size_t>(tri[i])];
    out[static_cast<std::size_t>(t)] = s;
  }
  return out;
}

SparseOperator assemble_stiffness(const TriMesh& mesh, std::span<const double> coeff) {
  require_elementwise(mesh, coeff.size(), "assemble_stiffness");
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double c = coeff[static_cast<std::size_t>(t)] * mesh.area(t);
    if (c == 0.0) continue;
    const auto g = hat_gradients(mesh, t);
    const Triangle& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        triplets.emplace_back(tri[i], tri[j], c * dot(g[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(j)]));
      }
    }
  }
  return finish(mesh, triplets);
}

SparseOperator assemble_mass(const TriMesh& mesh, std::span<const double> coeff, bool lumped) {
  require_elementwise(mesh, coeff.size(), "assemble_mass");
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double c = coeff[static_cast<std::size_t>(t)] * mesh.area(t);
    if (c == 0.0) continue;
    const Triangle& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i) {
      if (lumped) {
        triplets.emplace_back(tri[i], tri[i], c / 3.0);
        continue;
      }
      for (int j = 0; j < 3; ++j) triplets.emplace_back(tri[i], tri[j], c * (i == j ? 2.0 : 1.0) / 12.0);
    }
  }
  return finish(mesh, triplets);
}

SparseOperator assemble_quadrature_mass(const TriMesh& mesh, std::span<const QuadValues> coeff) {
  require_elementwise(mesh, coeff.size(), "assemble_quadrature_mass");
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double w = kQuadWeight * mesh.area(t);
    const Triangle& tri = mesh.triangle(t);
    double m[3][3] = {};
    for (int q = 0; q < 3; ++q) {
      const double c = w * coeff[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)];
      const auto& l = kQuadBary[static_cast<std::size_t>(q)];
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) m[i][j] += c * l[static_cast<std::size_t>(i)] * l[static_cast<std::size_t>(j)];
      }
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (m[i][j] != 0.0) triplets.emplace_back(tri[i], tri[j], m[i][j]);
      }
    }
  }
  return finish(mesh, triplets);
}

SparseOperator assemble_boundary_mass(const TriMesh& mesh) {
  if (mesh.boundary_edges().empty()) throw ValidationError("assemble_boundary_mass: mesh has no boundary edges");
  std::vector<Triplet> triplets;
  for (const Edge& e : mesh.boundary_edges()) {
    const double len = distance(mesh.vertex(e[0]), mesh.vertex(e[1]));
    triplets.emplace_back(e[0], e[0], len / 3.0);
    triplets.emplace_back(e[1], e[1], len / 3.0);
    triplets.emplace_back(e[0], e[1], len / 6.0);
    triplets.emplace_back(e[1], e[0], len / 6.0);
  }
  return finish(mesh, triplets);
}

Vector load_vector(const TriMesh& mesh, const NodalField& f) {
  require_bound(f, mesh, "load_vector");
  Vector b = Vector::Zero(mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const double a = mesh.area(t) / 12.0;
    const double f0 = f[static_cast<std::size_t>(tri[0])];
    const double f1 = f[static_cast<std::size_t>(tri[1])];
    const double f2 = f[static_cast<std::size_t>(tri[2])];
    b[tri[0]] += a * (2.0 * f0 + f1 + f2);
    b[tri[1]] += a * (f0 + 2.0 * f1 + f2);
    b[tri[2]] += a * (f0 + f1 + 2.0 * f2);
  }
  return b;
}

NodalField interpolate_nodal(const TriMesh& mesh, const std::function<double(const Point2&)>& f) {
  std::vector<double> values(static_cast<std::size_t>(mesh.num_vertices()));
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double s = f(mesh.vertex(v));
    if (!std::isfinite(s)) throw ValidationError("interpolate_nodal: non-finite sample at vertex " + std::to_string(v));
    values[static_cast<std::size_t>(v)] = s;
  }
  return NodalField(mesh, std::move(values));
}

NodalField transfer_field(const TriMesh& src_mesh, const NodalField& field, const TriMesh& dst_mesh) {
  require_bound(field, src_mesh, "transfer_field");
  if (src_mesh.id() == dst_mesh.id()) return field;
  const PointLocator locator(src_mesh);
  std::vector<double> values(static_cast<std::size_t>(dst_mesh.num_vertices()));
  for (int v = 0; v < dst_mesh.num_vertices(); ++v) {
    values[static_cast<std::size_t>(v)] = locator.evaluate(field.values(), dst_mesh.vertex(v));
  }
  return NodalField(dst_mesh, std::move(values));
}

Vector to_vector(const NodalField& field) {
  return Eigen::Map<const Vector>(field.values().data(), static_cast<Eigen::Index>(field.size()));
}

NodalField to_field(const TriMesh& mesh, const Vector& v) {
  return NodalField(mesh, std::vector<double>(v.data(), v.data() + v.size()));
}

Vector solve_spd(const SparseMatrix& a, const Vector& rhs, double tol) {
  if (a.rows() != a.cols() || a.rows() != rhs.size()) throw ValidationError("solve_spd: dimension mismatch");
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return Vector::Zero(rhs.size());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(a);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
    throw SolverError("sparse factorization failed: operator is not positive definite");
  }
  // Refinement stops at the requested relative residual or, for ill-conditioned
  // systems, once the normwise backward error is at round-off level.
  const double anorm = Eigen::VectorXd(a.cwiseAbs() * Vector::Ones(a.cols())).maxCoeff();
  auto good = [&](const Vector& x, const Vector& r) {
    const double rn = r.norm();
    return rn <= tol * bnorm || rn <= 1e3 * std::numeric_limits<double>::epsilon() * (anorm * x.norm() + bnorm);
  };
  Vector x = ldlt.solve(rhs);
  for (int pass = 0; pass < 4 && x.allFinite(); ++pass) {
    const Vector r = rhs - a * x;
    if (good(x, r)) return x;
    x += ldlt.solve(r);
  }
  if (x.allFinite() && good(x, rhs - a * x)) return x;
  throw SolverError("linear solve did not reach the requested residual tolerance");
}

Vector solve_spd(const SparseOperator& a, const Vector& rhs, double tol) { return solve_spd(a.matrix, rhs, tol); }

double h1_norm(const SparseOperator& stiffness, const SparseOperator& mass, const Vector& v) {
  return std::sqrt(std::max(0.0, v.dot(stiffness.matrix * v) + v.dot(mass.matrix * v)));
}

double l2_norm(const SparseOperator& mass, const Vector& v) { return std::sqrt(std::max(0.0, v.dot(mass.matrix * v))); }

}  // namespace pfinv
