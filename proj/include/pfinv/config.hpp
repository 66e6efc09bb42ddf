#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pfinv/data.hpp"
#include "pfinv/pop.hpp"
#include "pfinv/shape.hpp"

namespace pfinv {

/// Everything a run needs. Read from an INI file with the sections [problem],
/// [phantom], [pop], [shape], [sweep], [verify] and [output]; see README for
/// the keys and defaults.
struct ReconstructionConfig {
  double h_target = 0.04;
  double k = 0.1;
  std::vector<SourceTerm> sources{{1, 0, 0}, {0, 1, 0}};
  double noise = 0.0;
  std::uint64_t seed = 1;

  std::vector<Shape> phantom;
  bool has_phantom = false;
  double collar = 0.1;

  PopOptions pop;
  ShapeOptions shape;
  std::vector<Shape> shape_initial{Disc{{0.0, 0.0}, 0.2}};
  int shape_points = 64;

  std::vector<double> sweep_epsilon;

  bool corrupt_gradient = false;

  /// Throws ValidationError on violated parameter invariants.
  void validate() const;
};

/// Evaluates +, -, *, /, parentheses, decimal literals and the constant pi,
/// so that ε can be written as "1/(8*pi)".
double evaluate_expression(const std::string& text);

/// "disc(cx, cy, r)", "ellipse(cx, cy, a, b, angle)", "rectangle(x0, y0, w, h)"
/// or "polygon(x1, y1, x2, y2, ...)"; several shapes are separated by ';'.
std::vector<Shape> parse_shapes(const std::string& text);
std::string format_shape(const Shape& shape);

ReconstructionConfig parse_config(std::istream& in);
ReconstructionConfig load_config(const std::string& path);
/// Writes the effective configuration in the input format.
void write_config(std::ostream& out, const ReconstructionConfig& config);

}  // namespace pfinv
