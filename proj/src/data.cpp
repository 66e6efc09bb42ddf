#include "pfinv/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pfinv/errors.hpp"

namespace pfinv {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool segments_cross(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

double polygon_signed_area(const std::vector<Point2>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * s;
}

void validate_shape(Shape& shape) {
  std::visit(Overloaded{
                 [](const Disc& d) {
                   if (!(d.radius > 0.0)) throw ValidationError("disc radius must be positive");
                 },
                 [](const Ellipse& e) {
                   if (!(e.semi_a > 0.0) || !(e.semi_b > 0.0)) throw ValidationError("ellipse semi-axes must be positive");
                 },
                 [](const Rectangle& r) {
                   if (!(r.width > 0.0) || !(r.height > 0.0)) throw ValidationError("rectangle extents must be positive");
                 },
                 [](PolygonShape& p) {
                   const std::size_t n = p.vertices.size();
                   if (n < 3) throw ValidationError("polygon needs at least three vertices");
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t j = i + 1; j < n; ++j) {
                       if (j == i + 1 || (i == 0 && j == n - 1)) continue;
                       if (segments_cross(p.vertices[i], p.vertices[(i + 1) % n], p.vertices[j], p.vertices[(j + 1) % n])) {
                         throw ValidationError("polygon is not simple");
                       }
                     }
                   }
                   const double a = polygon_signed_area(p.vertices);
                   if (a == 0.0) throw ValidationError("polygon has zero area");
                   if (a < 0.0) std::reverse(p.vertices.begin(), p.vertices.end());
                 },
             },
             shape);
}

}  // namespace

bool shape_contains(const Shape& shape, const Point2& p) {
  return std::visit(Overloaded{
                        [&](const Disc& d) { return distance(p, d.center) < d.radius; },
                        [&](const Ellipse& e) {
                          const Point2 q = p - e.center;
                          const double c = std::cos(e.angle), s = std::sin(e.angle);
                          const double x = c * q.x + s * q.y, y = -s * q.x + c * q.y;
                          return (x / e.semi_a) * (x / e.semi_a) + (y / e.semi_b) * (y / e.semi_b) < 1.0;
                        },
                        [&](const Rectangle& r) {
                          return p.x > r.corner.x && p.x < r.corner.x + r.width && p.y > r.corner.y &&
                                 p.y < r.corner.y + r.height;
                        },
                        [&](const PolygonShape& poly) {
                          bool in = false;
                          const auto& v = poly.vertices;
                          for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
                            if ((v[i].y > p.y) != (v[j].y > p.y) &&
                                p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x) {
                              in = !in;
                            }
                          }
                          return in;
                        },
                    },
                    shape);
}

double shape_area(const Shape& shape) {
  return std::visit(Overloaded{
                        [](const Disc& d) { return M_PI * d.radius * d.radius; },
                        [](const Ellipse& e) { return M_PI * e.semi_a * e.semi_b; },
                        [](const Rectangle& r) { return r.width * r.height; },
                        [](const PolygonShape& p) { return std::abs(polygon_signed_area(p.vertices)); },
                    },
                    shape);
}

std::vector<Point2> shape_boundary(const Shape& shape, int n) {
  std::vector<Point2> out;
  out.reserve(static_cast<std::size_t>(n));
  auto along = [&](const std::vector<Point2>& corners) {
    double perimeter = 0.0;
    for (std::size_t i = 0; i < corners.size(); ++i) perimeter += distance(corners[i], corners[(i + 1) % corners.size()]);
    std::size_t edge = 0;
    double start = 0.0;
    for (int i = 0; i < n; ++i) {
      const double s = perimeter * i / n;
      while (s > start + distance(corners[edge], corners[(edge + 1) % corners.size()])) {
        start += distance(corners[edge], corners[(edge + 1) % corners.size()]);
        ++edge;
      }
      const Point2 a = corners[edge], b = corners[(edge + 1) % corners.size()];
      out.push_back(a + (b - a) * ((s - start) / distance(a, b)));
    }
  };
  std::visit(Overloaded{
                 [&](const Disc& d) {
                   for (int i = 0; i < n; ++i) {
                     const double t = 2 * M_PI * i / n;
                     out.push_back(d.center + Point2{std::cos(t), std::sin(t)} * d.radius);
                   }
                 },
                 [&](const Ellipse& e) {
                   const double c = std::cos(e.angle), s = std::sin(e.angle);
                   for (int i = 0; i < n; ++i) {
                     const double t = 2 * M_PI * i / n;
                     const double x = e.semi_a * std::cos(t), y = e.semi_b * std::sin(t);
                     out.push_back(e.center + Point2{c * x - s * y, s * x + c * y});
                   }
                 },
                 [&](const Rectangle& r) {
                   along({r.corner, r.corner + Point2{r.width, 0}, r.corner + Point2{r.width, r.height},
                          r.corner + Point2{0, r.height}});
                 },
                 [&](const PolygonShape& p) { along(p.vertices); },
             },
             shape);
  return out;
}

std::string describe_shape(const Shape& shape) {
  std::ostringstream out;
  std::visit(Overloaded{
                 [&](const Disc& d) { out << "disc " << d.center.x << ' ' << d.center.y << ' ' << d.radius; },
                 [&](const Ellipse& e) {
                   out << "ellipse " << e.center.x << ' ' << e.center.y << ' ' << e.semi_a << ' ' << e.semi_b << ' '
                       << e.angle;
                 },
                 [&](const Rectangle& r) {
                   out << "rectangle " << r.corner.x << ' ' << r.corner.y << ' ' << r.width << ' ' << r.height;
                 },
                 [&](const PolygonShape& p) {
                   out << "polygon";
                   for (const Point2& v : p.vertices) out << ' ' << v.x << ' ' << v.y;
                 },
             },
             shape);
  return out.str();
}

Phantom::Phantom(std::vector<Shape> shapes, double collar) : shapes_(std::move(shapes)) {
  constexpr int kSamples = 720;
  std::vector<std::vector<Point2>> rims;
  for (Shape& s : shapes_) {
    validate_shape(s);
    rims.push_back(shape_boundary(s, kSamples));
    for (const Point2& p : rims.back()) {
      if (std::max(std::abs(p.x), std::abs(p.y)) > 1.0 - collar + 1e-12) {
        throw ValidationError("phantom shape '" + describe_shape(s) + "' violates the boundary collar");
      }
    }
  }
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    for (std::size_t j = 0; j < shapes_.size(); ++j) {
      if (i == j) continue;
      for (const Point2& p : rims[i]) {
        if (shape_contains(shapes_[j], p)) throw ValidationError("phantom shapes overlap");
      }
    }
  }
}

bool Phantom::contains(const Point2& p) const {
  return std::any_of(shapes_.begin(), shapes_.end(), [&](const Shape& s) { return shape_contains(s, p); });
}

double Phantom::area() const {
  double a = 0.0;
  for (const Shape& s : shapes_) a += shape_area(s);
  return a;
}

Raster rasterize(const Phantom& phantom, const TriMesh& mesh) {
  Raster r;
  r.element.resize(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    r.element[static_cast<std::size_t>(t)] = phantom.contains(mesh.centroid(t)) ? 1.0 : 0.0;
  }
  r.nodal = interpolate_nodal(mesh, [&](const Point2& p) { return phantom.contains(p) ? 1.0 : 0.0; });
  return r;
}

TriMesh build_truth_mesh(const Phantom& phantom, const TriMesh& work_mesh) {
  const TriMesh fine = refine_uniform(work_mesh, 2);
  AdaptationMarking ring;
  for (int t = 0; t < fine.num_triangles(); ++t) {
    const Triangle& tri = fine.triangle(t);
    const bool c = phantom.contains(fine.centroid(t));
    bool cut = false;
    for (int v : tri) cut = cut || phantom.contains(fine.vertex(v)) != c;
    if (cut) ring.refine_set.push_back(t);
  }
  return refine(fine, ring);
}

MeasurementSet generate_measurements(const Phantom& phantom, const TriMesh& truth_mesh, const TriMesh& work_mesh,
                                     const std::vector<SourceTerm>& sources, double k, double noise,
                                     std::uint64_t seed) {
  if (sources.empty()) throw ValidationError("at least one source term is required");
  if (!(noise >= 0.0)) throw ValidationError("noise level must be non-negative");
  const Raster raster = rasterize(phantom, truth_mesh);
  bool all_inside = true;
  for (double v : raster.element) all_inside = all_inside && v == 1.0;
  if (all_inside) throw ValidationError("phantom covers the whole domain");
  const SemilinearOperator op(truth_mesh, coefficients_from_indicator(truth_mesh, raster.element, k));
  const SparseOperator work_boundary = assemble_boundary_mass(work_mesh);

  MeasurementSet set;
  set.noise_level = noise;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const SourceTerm& src : sources) {
    const NodalField f_truth = interpolate_nodal(truth_mesh, src);
    const SourceDiagnostic diag = check_source_assumption(truth_mesh, f_truth, raster.nodal);
    if (diag.route == SourceRoute::kNone) set.warnings.push_back(src.describe() + ": " + diag.message);
    const ForwardSolution sol = solve_direct(op, f_truth);
    NodalField y_meas = BoundaryDatum(truth_mesh, sol.y).sample(work_mesh);
    double realized = 0.0;
    if (noise > 0.0) {
      NodalField xi(work_mesh);
      for (int v : work_mesh.boundary_vertices()) xi[static_cast<std::size_t>(v)] = normal(rng);
      const double yn = l2_norm(work_boundary, to_vector(y_meas));
      const double xn = l2_norm(work_boundary, to_vector(xi));
      const double scale = xn > 0.0 ? noise * yn / xn : 0.0;
      for (std::size_t i = 0; i < y_meas.size(); ++i) y_meas[i] += scale * xi[i];
      const double pert = scale * xn;
      realized = yn > 0.0 ? pert / yn : 0.0;
    }
    set.realized_noise.push_back(realized);
    set.sources.push_back({src, BoundaryDatum(work_mesh, y_meas)});
    set.on_work_mesh.push_back({interpolate_nodal(work_mesh, src), std::move(y_meas)});
  }
  return set;
}

ReconstructionMetrics reconstruction_error_elements(std::span<const double> element_indicator, const Phantom& phantom,
                                                    const TriMesh& mesh) {
  if (element_indicator.size() != static_cast<std::size_t>(mesh.num_triangles())) {
    throw ValidationError("reconstruction_error: indicator length does not match triangle count");
  }
  ReconstructionMetrics m;
  double sym = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const bool rec = element_indicator[static_cast<std::size_t>(t)] >= 0.5;
    const bool truth = phantom.contains(mesh.centroid(t));
    const double a = mesh.area(t);
    if (rec) m.reconstructed_area += a;
    if (truth) m.true_area += a;
    if (rec != truth) sym += a;
  }
  m.sym_diff_ratio = sym / (phantom.empty() ? mesh.total_area() : m.true_area);
  return m;
}

ReconstructionMetrics reconstruction_error(const NodalField& u_rec, const Phantom& phantom, const TriMesh& mesh) {
  require_bound(u_rec, mesh, "reconstruction_error");
  std::vector<double> centroid(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    centroid[static_cast<std::size_t>(t)] = (u_rec[static_cast<std::size_t>(tri[0])] +
                                             u_rec[static_cast<std::size_t>(tri[1])] +
                                             u_rec[static_cast<std::size_t>(tri[2])]) / 3.0;
  }
  return reconstruction_error_elements(centroid, phantom, mesh);
}

ReconstructionMetrics reconstruction_error(const NodalField& u_rec, const Phantom& phantom, const TriMesh& mesh,
                                           const std::vector<Measurement>& measurements, double k) {
  ReconstructionMetrics m = reconstruction_error(u_rec, phantom, mesh);
  ObjectiveParams params;
  params.k = k;
  m.boundary_misfit = RelaxedObjective(mesh, measurements, params).evaluate(u_rec, false).cost.j_pde;
  return m;
}

int count_components(const TriMesh& mesh, const NodalField& u) {
  require_bound(u, mesh, "count_components");
  std::vector<double> centroid(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    centroid[static_cast<std::size_t>(t)] =
        (u[static_cast<std::size_t>(tri[0])] + u[static_cast<std::size_t>(tri[1])] + u[static_cast<std::size_t>(tri[2])]) / 3.0;
  }
  return count_components_elements(mesh, centroid);
}

int count_components_elements(const TriMesh& mesh, std::span<const double> element_values) {
  const int nt = mesh.num_triangles();
  if (element_values.size() != static_cast<std::size_t>(nt)) throw ValidationError("count_components: size mismatch");
  std::vector<char> in(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) in[static_cast<std::size_t>(t)] = element_values[static_cast<std::size_t>(t)] >= 0.5;
  const EdgeAdjacency adj = build_edge_adjacency(mesh);
  std::vector<std::vector<int>> nbr(static_cast<std::size_t>(nt));
  for (const auto& pair : adj.triangles) {
    if (pair[1] < 0) continue;
    nbr[static_cast<std::size_t>(pair[0])].push_back(pair[1]);
    nbr[static_cast<std::size_t>(pair[1])].push_back(pair[0]);
  }
  std::vector<char> seen(static_cast<std::size_t>(nt), 0);
  int components = 0;
  for (int t = 0; t < nt; ++t) {
    if (!in[static_cast<std::size_t>(t)] || seen[static_cast<std::size_t>(t)]) continue;
    ++components;
    std::vector<int> stack{t};
    seen[static_cast<std::size_t>(t)] = 1;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      for (int nb : nbr[static_cast<std::size_t>(cur)]) {
        if (in[static_cast<std::size_t>(nb)] && !seen[static_cast<std::size_t>(nb)]) {
          seen[static_cast<std::size_t>(nb)] = 1;
          stack.push_back(nb);
        }
      }
    }
  }
  return components;
}

InterfaceWidth interface_width(const TriMesh& mesh, const NodalField& u, int rays) {
  require_bound(u, mesh, "interface_width");
  if (rays < 1) throw ValidationError("interface_width: need at least one ray");
  double area = 0.0;
  Point2 center;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const double mean =
        (u[static_cast<std::size_t>(tri[0])] + u[static_cast<std::size_t>(tri[1])] + u[static_cast<std::size_t>(tri[2])]) / 3.0;
    if (mean < 0.5) continue;
    area += mesh.area(t);
    center += mesh.centroid(t) * mesh.area(t);
  }
  if (!(area > 0.0)) throw ValidationError("interface_width: the field has no region above 1/2");
  center = center / area;

  const PointLocator locator(mesh);
  const double ds = 0.05 * mesh.h_max();
  InterfaceWidth out;
  out.center = center;
  double total = 0.0;
  for (int r = 0; r < rays; ++r) {
    const double phi = 2.0 * std::acos(-1.0) * (r + 0.5) / rays;
    const Point2 dir{std::cos(phi), std::sin(phi)};
    // March outwards; keep the last upward crossing of 0.9 and the first
    // crossing of 0.1 beyond it.
    double prev_s = 0.0, prev_v = locator.evaluate(u.values(), center);
    double s09 = -1.0, s01 = -1.0;
    for (double s = ds;; s += ds) {
      const Point2 p = center + dir * s;
      if (std::abs(p.x) > 1.0 || std::abs(p.y) > 1.0) break;
      double v;
      try {
        v = locator.evaluate(u.values(), p);
      } catch (const GeometryError&) {
        break;
      }
      if (prev_v >= 0.9 && v < 0.9) {
        s09 = prev_s + (prev_v - 0.9) / (prev_v - v) * ds;
        s01 = -1.0;
      }
      if (s09 >= 0.0 && s01 < 0.0 && prev_v >= 0.1 && v < 0.1) s01 = prev_s + (prev_v - 0.1) / (prev_v - v) * ds;
      prev_s = s;
      prev_v = v;
    }
    if (s09 < 0.0 || s01 < 0.0) continue;
    total += s01 - s09;
    ++out.rays_used;
  }
  if (out.rays_used == 0) throw ValidationError("interface_width: no ray crosses both level sets");
  out.width = total / out.rays_used;
  return out;
}

}  // namespace pfinv
