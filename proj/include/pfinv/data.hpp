#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pfinv/measurement.hpp"
#include "pfinv/objective.hpp"

namespace pfinv {

struct Disc {
  Point2 center;
  double radius = 0.0;
};
struct Ellipse {
  Point2 center;
  double semi_a = 0.0;
  double semi_b = 0.0;
  double angle = 0.0;  // radians, rotation of the a-axis
};
struct Rectangle {
  Point2 corner;  // lower-left
  double width = 0.0;
  double height = 0.0;
};
struct PolygonShape {
  std::vector<Point2> vertices;  // simple, counterclockwise
};

using Shape = std::variant<Disc, Ellipse, Rectangle, PolygonShape>;

bool shape_contains(const Shape& shape, const Point2& p);
double shape_area(const Shape& shape);
/// n points along the boundary, counterclockwise.
std::vector<Point2> shape_boundary(const Shape& shape, int n);
std::string describe_shape(const Shape& shape);

/// Ground-truth inclusion: a union of pairwise disjoint primitives kept at
/// distance >= collar from the boundary of the square.
class Phantom {
 public:
  Phantom() = default;
  explicit Phantom(std::vector<Shape> shapes, double collar = 0.1);

  const std::vector<Shape>& shapes() const { return shapes_; }
  bool empty() const { return shapes_.empty(); }
  bool contains(const Point2& p) const;
  double area() const;

 private:
  std::vector<Shape> shapes_;
};

struct Raster {
  std::vector<double> element;  // 1 iff the centroid is inside
  NodalField nodal;             // 1 iff the vertex is inside
};
Raster rasterize(const Phantom& phantom, const TriMesh& mesh);

/// Work mesh refined four times more finely plus one refinement ring of the
/// triangles cut by the phantom boundary.
TriMesh build_truth_mesh(const Phantom& phantom, const TriMesh& work_mesh);

struct MeasurementSet {
  std::vector<MeasurementSource> sources;  // resampled on any mesh of the square
  std::vector<Measurement> on_work_mesh;
  double noise_level = 0.0;
  std::vector<double> realized_noise;      // relative L2(dOmega) perturbation per source
  std::vector<std::string> warnings;
};

MeasurementSet generate_measurements(const Phantom& phantom, const TriMesh& truth_mesh, const TriMesh& work_mesh,
                                     const std::vector<SourceTerm>& sources, double k, double noise,
                                     std::uint64_t seed = 1);

struct ReconstructionMetrics {
  double sym_diff_ratio = 0.0;
  double reconstructed_area = 0.0;
  double true_area = 0.0;
  double boundary_misfit = -1.0;  // averaged J_PDE of the reconstruction, -1 when not computed
};

/// Element-area symmetric difference between {u >= 1/2} (centroid value) and
/// the centroid raster of the phantom, divided by the raster area (or by the
/// domain area for an empty phantom).
ReconstructionMetrics reconstruction_error(const NodalField& u_rec, const Phantom& phantom, const TriMesh& mesh);
ReconstructionMetrics reconstruction_error_elements(std::span<const double> element_indicator, const Phantom& phantom,
                                                    const TriMesh& mesh);
/// Adds the boundary misfit of the reconstruction for the given data.
ReconstructionMetrics reconstruction_error(const NodalField& u_rec, const Phantom& phantom, const TriMesh& mesh,
                                           const std::vector<Measurement>& measurements, double k);

/// Number of edge-connected components of the triangles with centroid value >= 1/2.
int count_components(const TriMesh& mesh, const NodalField& u);
/// Same for an elementwise indicator.
int count_components_elements(const TriMesh& mesh, std::span<const double> element_values);

struct InterfaceWidth {
  double width = 0.0;  // mean distance between the 0.9 and 0.1 level sets
  Point2 center;       // centroid of {u >= 1/2}
  int rays_used = 0;
};
/// Diffuse-interface thickness measured along rays cast from the centroid of
/// the reconstructed region.
InterfaceWidth interface_width(const TriMesh& mesh, const NodalField& u, int rays = 64);

}  // namespace pfinv
