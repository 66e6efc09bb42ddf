#pragma once

#include <string>
#include <vector>

#include "pfinv/field.hpp"
#include "pfinv/mesh.hpp"

namespace pfinv {

/// Affine source f(x, y) = a x + b y + c.
struct SourceTerm {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double operator()(const Point2& p) const { return a * p.x + b * p.y + c; }
  std::string describe() const;
  /// Parses "x", "y", "1", "-x", "2*x+y-0.5" and similar affine expressions.
  static SourceTerm parse(const std::string& text);
};

/// Piecewise-linear boundary datum along the boundary polyline of a mesh. Used to
/// sample measured traces on the boundary vertices of any other mesh of the domain.
class BoundaryDatum {
 public:
  BoundaryDatum() = default;
  /// Captures the boundary values of a nodal field.
  BoundaryDatum(const TriMesh& mesh, const NodalField& values);

  double evaluate(const Point2& p) const;
  /// Nodal field on the mesh holding the datum on boundary vertices and 0 inside.
  NodalField sample(const TriMesh& mesh) const;
  bool empty() const { return segments_.empty(); }

 private:
  struct Segment {
    Point2 a, b;
    double va = 0.0, vb = 0.0;
  };
  std::vector<Segment> segments_;
};

/// One experiment on a given mesh: source and boundary datum (interior values ignored).
struct Measurement {
  NodalField f;
  NodalField y_meas;
};

/// Mesh-independent description of an experiment, resampled after remeshing.
struct MeasurementSource {
  SourceTerm source;
  BoundaryDatum datum;
};

std::vector<Measurement> sample_measurements(const TriMesh& mesh, const std::vector<MeasurementSource>& sources);

}  // namespace pfinv
