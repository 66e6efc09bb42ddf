#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pfinv/data.hpp"

namespace pfinv {

/// Nodal P1 vector field on a mesh; used both as deformation field and as
/// descent direction.
struct VelocityField {
  std::uint64_t mesh_id = 0;
  std::vector<Point2> values;
};

VelocityField zero_velocity(const TriMesh& mesh);
/// Samples v at the vertices and zeroes it on the boundary collar of width d0.
VelocityField velocity_from_function(const TriMesh& mesh, const std::function<Point2(const Point2&)>& v,
                                     double d0 = 0.1);

/// Same connectivity, vertices moved to x + t V(x). Throws GeometryError when a
/// triangle inverts.
TriMesh displace_mesh(const TriMesh& mesh, const VelocityField& v, double t);

/// Discrete mean curvature theta_i / (|e_{i-1}| + |e_i|)/2 of a closed
/// counterclockwise polygon, theta_i the signed turning angle at vertex i.
std::vector<double> polygon_curvature(const std::vector<Point2>& loop);
double polygon_perimeter(const std::vector<Point2>& loop);
/// d/dt perimeter of the polygon whose vertex i moves with velocity v[i].
double perimeter_derivative(const std::vector<Point2>& loop, const std::vector<Point2>& v);

/// Boundary of an inclusion given by tagged triangles. Every loop is a chain of
/// mesh vertices with the inclusion on its left, so outer boundaries run
/// counterclockwise and holes clockwise.
struct PolygonInclusion {
  std::vector<std::vector<int>> loops;
  std::vector<std::vector<Point2>> points;
  std::vector<std::vector<Point2>> normals;    // outward unit normals
  std::vector<std::vector<double>> curvature;  // turning-angle curvature
  std::vector<std::vector<double>> weights;    // half the adjacent edge lengths

  double perimeter() const;
  std::size_t num_points() const;
};

/// Throws GeometryError when the tagged region touches the domain boundary or
/// two loops meet at a vertex.
PolygonInclusion extract_inclusion(const TriMesh& mesh, std::span<const double> tags);

/// Forward and adjoint states of the sharp problem (u = tags) per measurement.
struct SharpState {
  double j_pde = 0.0;
  std::vector<NodalField> y;
  std::vector<NodalField> p;
};
SharpState solve_sharp_states(const TriMesh& mesh, std::span<const double> tags,
                              const std::vector<Measurement>& measurements, double k, bool with_adjoint);

/// Right-hand side of the material-derivative problem, consistent with moving the
/// mesh vertices with V: -int a A grad S . grad phi - int b S^3 phi div V + d/dt int f phi.
Vector material_derivative_load(const SemilinearOperator& op, const NodalField& y, const VelocityField& v,
                                const SourceTerm& f);
NodalField solve_material_derivative(const SemilinearOperator& op, const NodalField& y, const VelocityField& v,
                                     const SourceTerm& f);

/// Misfit part mean_i int_{dOmega} (S_i - y_meas,i) Sdot_i[V].
double misfit_directional_derivative(const SemilinearOperator& op, const std::vector<NodalField>& y,
                                     const std::vector<Measurement>& measurements,
                                     const std::vector<SourceTerm>& sources, const VelocityField& v);

/// DJ_eps(u)[V]: misfit part plus the three Ginzburg-Landau deformation terms.
double relaxed_directional_derivative(const RelaxedObjective& objective, const NodalField& u_eps,
                                      const std::vector<SourceTerm>& sources, const VelocityField& v);

/// Ginzburg-Landau deformation terms alone.
double gl_directional_derivative(const TriMesh& mesh, const NodalField& u, const VelocityField& v, double alpha,
                                 double epsilon);

struct ShapeGradient {
  /// Bracketed integrand per loop point, curvature term included.
  std::vector<std::vector<double>> integrand;
  /// -g nu on loop points, zero elsewhere.
  VelocityField boundary;
  /// H1 Riesz extension of the boundary load, zero on the collar.
  VelocityField extended;
  /// Boundary formula int g V.nu evaluated for the extended field.
  double dj_extended = 0.0;
};

struct ShapeGradientOptions {
  double alpha = 1e-3;
  double k = 0.1;
  /// Multiplies the curvature term by alpha; false reproduces the bare "+ h".
  bool weight_curvature = true;
  double collar = 0.1;
  double smoothing_length = 0.1;
};

ShapeGradient shape_gradient(const TriMesh& mesh, std::span<const double> tags, const PolygonInclusion& inclusion,
                             const SharpState& state, const ShapeGradientOptions& options);

/// Boundary formula int_{d omega} g V.nu ds with lumped point weights.
double boundary_form(const PolygonInclusion& inclusion, const std::vector<std::vector<double>>& integrand,
                     const VelocityField& v);

struct ShapeOptions {
  ShapeGradientOptions gradient;
  double max_step = 10.0;  // trial step in units of the mesh size
  double tol = 1e-6;
  int max_iterations = 300;
  double min_step = 1e-4;
  double armijo = 1e-4;
  double shape_ratio_bound = 30.0;
  /// Re-snap onto the base mesh once the moving mesh exceeds this shape ratio.
  double remesh_ratio = 8.0;
  int max_remeshes = 50;
};

struct ShapeTraceRow {
  int iter = 0;
  double step = 0.0;
  int backtracks = 0;
  double j_pde = 0.0;
  double perimeter = 0.0;
  double total = 0.0;
  double slope = 0.0;
  bool remeshed = false;  // row follows a re-snap; cost may jump here
};

struct ShapeResult {
  std::shared_ptr<TriMesh> mesh;  // deformed work mesh
  std::vector<double> tags;
  PolygonInclusion inclusion;
  std::vector<ShapeTraceRow> trace;
  std::vector<std::vector<std::vector<Point2>>> history;  // loop points per accepted iterate
  bool converged = false;
  std::string stop_reason;
};

/// Tags of the triangles whose centroid lies inside the loops (even-odd rule).
std::vector<double> polygon_tags(const TriMesh& mesh, const std::vector<std::vector<Point2>>& loops);

/// Inclusion fitted to a polygon: the input mesh with the loop vertices moved
/// onto the polygon and no triangle having all three vertices on a loop. A
/// polygon that covers no centroid becomes the triangles around the vertex
/// nearest to its first point, projected onto the polygon.
struct FittedInclusion {
  std::shared_ptr<TriMesh> mesh;
  std::vector<double> tags;
  PolygonInclusion inclusion;
};
std::optional<FittedInclusion> fit_inclusion(const TriMesh& base, const std::vector<std::vector<Point2>>& loops,
                                             double shape_ratio_bound = 8.0);

/// Sharp cost mean_i J_PDE,i + alpha Per.
double sharp_cost(double j_pde, const PolygonInclusion& inclusion, double alpha);

/// Steepest descent on the inclusion boundary with Armijo backtracking. The
/// mesh moves with the extended velocity, so the boundary points stay mesh
/// vertices and the topology of the inclusion is fixed. When the moving mesh
/// degrades, the current polygon is re-snapped onto the input mesh.
ShapeResult run_shape_descent(const ShapeOptions& options, const TriMesh& mesh,
                              const std::vector<std::vector<Point2>>& initial,
                              const std::vector<MeasurementSource>& sources);

/// CSV rows "iter,loop,index,x,y" for every stored iterate.
void save_polylines(const std::string& path, const std::vector<std::vector<std::vector<Point2>>>& history);

}  // namespace pfinv
