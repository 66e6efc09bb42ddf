#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pfinv/field.hpp"
#include "pfinv/geometry.hpp"

namespace pfinv {

using Triangle = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Conforming 2D triangulation with its boundary topology.
///
/// Triangles are stored counterclockwise. Boundary edges are oriented as they
/// appear in their (unique) triangle, so the domain lies on their left and the
/// outward normal points to their right. The mesh is immutable once built.
class TriMesh {
 public:
  TriMesh(std::vector<Point2> vertices, std::vector<Triangle> triangles);

  const std::vector<Point2>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& boundary_edges() const { return boundary_edges_; }
  const Point2& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
  const Triangle& triangle(int t) const { return triangles_[static_cast<std::size_t>(t)]; }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }

  double h_max() const { return h_max_; }
  /// Identity shared by copies; used to bind fields and operators to a mesh.
  std::uint64_t id() const { return id_; }

  double area(int t) const;
  Point2 centroid(int t) const;
  double total_area() const;
  /// Circumradius over inradius; 2.414... for a right isosceles triangle.
  double shape_ratio(int t) const;
  double max_shape_ratio() const;

  bool is_boundary_vertex(int v) const { return boundary_vertex_[static_cast<std::size_t>(v)] != 0; }
  /// Indices of boundary vertices in ascending order.
  std::vector<int> boundary_vertices() const;

 private:
  std::vector<Point2> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> boundary_edges_;
  std::vector<char> boundary_vertex_;
  double h_max_ = 0.0;
  std::uint64_t id_ = 0;
};

enum class GridPattern {
  kCrissCross,  // four right isosceles triangles per cell around its center
  kDiagonal,    // two triangles per cell split along one diagonal
};

/// Structured mesh of the rectangle [x0,x1]x[y0,y1] with cell side <= h_target.
TriMesh build_rectangle_mesh(double x0, double x1, double y0, double y1, double h_target,
                             GridPattern pattern = GridPattern::kCrissCross);

/// Structured mesh of (-1,1)^2. The grid spacing is the largest value <= h_target
/// dividing 2; with the criss-cross pattern this equals h_max.
TriMesh build_square_mesh(double h_target, GridPattern pattern = GridPattern::kCrissCross);

/// Uniformly refines a coarse triangulation of a polygonal domain until h_max <= h_target.
TriMesh build_polygon_mesh(const TriMesh& coarse, double h_target);

struct AdaptationMarking {
  std::vector<int> refine_set;
  std::vector<int> coarsen_set;
};

struct RefinementResult {
  TriMesh mesh;
  /// parent[t] is the input triangle containing output triangle t.
  std::vector<int> parent;
};

/// Red-green-blue refinement with longest-edge closure. Marked triangles are
/// split into four similar children; neighbours receive green (one split edge)
/// or blue (two split edges) closures so that the output has no hanging nodes.
/// The coarsen set is ignored: coarsening is done by rebuilding from a base mesh.
RefinementResult refine_with_parents(const TriMesh& mesh, const AdaptationMarking& marking);
TriMesh refine(const TriMesh& mesh, const AdaptationMarking& marking);
TriMesh refine_uniform(const TriMesh& mesh, int levels = 1);

/// Elementwise |grad u| of a P1 field.
std::vector<double> element_gradient_norms(const TriMesh& mesh, const NodalField& u);

/// Refines the top refine_frac fraction of triangles by |grad u| and flags the
/// bottom coarsen_frac fraction for coarsening. Triangles sharing the minimum
/// gradient are never refined and those sharing the maximum are never coarsened,
/// so a field with uniform gradient produces empty sets.
AdaptationMarking mark_by_gradient(const TriMesh& mesh, const NodalField& u, double refine_frac,
                                   double coarsen_frac);

struct PointLocation {
  int triangle = -1;
  std::array<double, 3> barycentric{};
};

/// Bucket-grid accelerated point location. Holds a reference to the mesh.
class PointLocator {
 public:
  explicit PointLocator(const TriMesh& mesh);

  /// Throws GeometryError if p lies outside the mesh by more than the tolerance.
  PointLocation locate(const Point2& p) const;
  /// Evaluates the P1 interpolant of nodal values at p.
  double evaluate(std::span<const double> values, const Point2& p) const;

  const TriMesh& mesh() const { return mesh_; }

 private:
  const TriMesh& mesh_;
  Point2 lo_;
  double cell_w_ = 1.0;
  double cell_h_ = 1.0;
  int nx_ = 1;
  int ny_ = 1;
  double tol_ = 1e-10;
  std::vector<int> bucket_start_;
  std::vector<int> bucket_items_;
};

PointLocation locate_point(const TriMesh& mesh, const Point2& p);

std::array<double, 3> barycentric_coordinates(const TriMesh& mesh, int t, const Point2& p);

/// Interior edges shared by two triangles plus boundary edges; used by audits and
/// by the connectivity helpers of the reconstruction metrics.
struct EdgeAdjacency {
  std::vector<Edge> edges;                    // sorted vertex pairs
  std::vector<std::array<int, 2>> triangles;  // adjacent triangles, -1 if none
};
EdgeAdjacency build_edge_adjacency(const TriMesh& mesh);

/// Problems found by a full topology audit; empty when the mesh is conforming.
std::vector<std::string> audit_mesh(const TriMesh& mesh, double shape_ratio_bound = 10.0);

// Plain-text format: "vertices N", N lines "x y", "triangles M", M lines "i j k".
void write_mesh(std::ostream& out, const TriMesh& mesh);
TriMesh read_mesh(std::istream& in);
void save_mesh(const std::string& path, const TriMesh& mesh);
TriMesh load_mesh(const std::string& path);

struct VtkPointData {
  std::string name;
  std::span<const double> values;
};
void write_vtk(std::ostream& out, const TriMesh& mesh, std::span<const VtkPointData> point_data = {});
void save_vtk(const std::string& path, const TriMesh& mesh, std::span<const VtkPointData> point_data = {});

}  // namespace pfinv
