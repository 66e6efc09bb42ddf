#include "pfinv/measurement.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <sstream>

#include "pfinv/errors.hpp"
#include "pfinv/fem.hpp"

namespace pfinv {

std::string SourceTerm::describe() const {
  std::ostringstream out;
  out << a << "*x + " << b << "*y + " << c;
  return out.str();
}

SourceTerm SourceTerm::parse(const std::string& text) {
  std::string s;
  for (char ch : text) {
    if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
  }
  if (s.empty()) throw ValidationError("empty source expression");
  SourceTerm term;
  std::size_t pos = 0;
  while (pos < s.size()) {
    double sign = 1.0;
    if (s[pos] == '+' || s[pos] == '-') {
      sign = s[pos] == '-' ? -1.0 : 1.0;
      ++pos;
    }
    double coef = 1.0;
    bool has_number = false;
    if (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) {
      std::size_t used = 0;
      try {
        coef = std::stod(s.substr(pos), &used);
      } catch (const std::exception&) {
        throw ValidationError("bad source expression '" + text + "'");
      }
      pos += used;
      has_number = true;
      if (pos < s.size() && s[pos] == '*') ++pos;
    }
    if (pos < s.size() && (s[pos] == 'x' || s[pos] == 'y')) {
      (s[pos] == 'x' ? term.a : term.b) += sign * coef;
      ++pos;
    } else if (has_number) {
      term.c += sign * coef;
    } else {
      throw ValidationError("bad source expression '" + text + "'");
    }
    if (pos < s.size() && s[pos] != '+' && s[pos] != '-') throw ValidationError("bad source expression '" + text + "'");
  }
  return term;
}

BoundaryDatum::BoundaryDatum(const TriMesh& mesh, const NodalField& values) {
  require_bound(values, mesh, "BoundaryDatum");
  for (const Edge& e : mesh.boundary_edges()) {
    segments_.push_back({mesh.vertex(e[0]), mesh.vertex(e[1]), values[static_cast<std::size_t>(e[0])],
                         values[static_cast<std::size_t>(e[1])]});
  }
}

double BoundaryDatum::evaluate(const Point2& p) const {
  if (segments_.empty()) throw ValidationError("boundary datum is empty");
  double best = std::numeric_limits<double>::infinity();
  double value = 0.0;
  for (const Segment& seg : segments_) {
    const Point2 ab = seg.b - seg.a;
    const double s = std::clamp(dot(p - seg.a, ab) / dot(ab, ab), 0.0, 1.0);
    const double d = distance(p, seg.a + ab * s);
    if (d < best) {
      best = d;
      value = (1.0 - s) * seg.va + s * seg.vb;
    }
  }
  return value;
}

NodalField BoundaryDatum::sample(const TriMesh& mesh) const {
  NodalField out(mesh);
  for (int v : mesh.boundary_vertices()) out[static_cast<std::size_t>(v)] = evaluate(mesh.vertex(v));
  return out;
}

std::vector<Measurement> sample_measurements(const TriMesh& mesh, const std::vector<MeasurementSource>& sources) {
  std::vector<Measurement> out;
  for (const MeasurementSource& src : sources) {
    out.push_back({interpolate_nodal(mesh, src.source), src.datum.sample(mesh)});
  }
  return out;
}

}  // namespace pfinv
