#include "pfinv/shape.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <unordered_map>

#include "pfinv/errors.hpp"

namespace pfinv {

namespace {

std::uint64_t edge_key(int a, int b, int n) {
  return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(b);
}

// Directed edge (a, b) -> triangle holding it in counterclockwise order.
std::unordered_map<std::uint64_t, int> directed_edges(const TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> map;
  map.reserve(static_cast<std::size_t>(3 * mesh.num_triangles()));
  const int n = mesh.num_vertices();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i) map[edge_key(tri[i], tri[(i + 1) % 3], n)] = t;
  }
  return map;
}

struct ElementKinematics {
  double dv[2][2];  // dv[a][b] = d V_a / d x_b
  double div;
};

ElementKinematics kinematics(const std::array<Point2, 3>& g, const Triangle& tri, const VelocityField& v) {
  ElementKinematics k{};
  for (int i = 0; i < 3; ++i) {
    const Point2& vi = v.values[static_cast<std::size_t>(tri[i])];
    const Point2& gi = g[static_cast<std::size_t>(i)];
    k.dv[0][0] += vi.x * gi.x;
    k.dv[0][1] += vi.x * gi.y;
    k.dv[1][0] += vi.y * gi.x;
    k.dv[1][1] += vi.y * gi.y;
  }
  k.div = k.dv[0][0] + k.dv[1][1];
  return k;
}

// (div V I - DV - DV^T) q
Point2 deformation_apply(const ElementKinematics& k, const Point2& q) {
  const double s01 = k.dv[0][1] + k.dv[1][0];
  return {(k.div - 2.0 * k.dv[0][0]) * q.x - s01 * q.y, -s01 * q.x + (k.div - 2.0 * k.dv[1][1]) * q.y};
}

void require_velocity(const VelocityField& v, const TriMesh& mesh) {
  if (v.mesh_id != mesh.id() || v.values.size() != static_cast<std::size_t>(mesh.num_vertices())) {
    throw ValidationError("velocity field does not belong to the mesh");
  }
}

Point2 gradient_on(const TriMesh& mesh, int t, const NodalField& f) {
  const auto g = hat_gradients(mesh, t);
  const Triangle& tri = mesh.triangle(t);
  Point2 out;
  for (int i = 0; i < 3; ++i) out += g[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(tri[i])];
  return out;
}

double min_boundary_distance(const TriMesh& mesh, const std::vector<Point2>& points) {
  double best = std::numeric_limits<double>::infinity();
  for (const Point2& p : points) {
    for (const Edge& e : mesh.boundary_edges()) {
      const Point2& a = mesh.vertex(e[0]);
      const Point2& b = mesh.vertex(e[1]);
      const Point2 ab = b - a;
      const double s = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
      best = std::min(best, distance(p, a + ab * s));
    }
  }
  return best;
}

// Tags every triangle around a vertex where two boundary loops of the tagged
// region would touch, so that the region boundary consists of simple loops.
void fill_pinches(const TriMesh& mesh, std::vector<double>& tags) {
  const int n = mesh.num_vertices();
  const auto edges = directed_edges(mesh);
  for (int pass = 0; pass < 100; ++pass) {
    std::vector<int> outgoing(static_cast<std::size_t>(n), 0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      if (tags[static_cast<std::size_t>(t)] < 0.5) continue;
      const Triangle& tri = mesh.triangle(t);
      for (int i = 0; i < 3; ++i) {
        const auto it = edges.find(edge_key(tri[(i + 1) % 3], tri[i], n));
        if (it != edges.end() && tags[static_cast<std::size_t>(it->second)] < 0.5) ++outgoing[static_cast<std::size_t>(tri[i])];
      }
    }
    bool changed = false;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const Triangle& tri = mesh.triangle(t);
      for (int v : tri) {
        if (outgoing[static_cast<std::size_t>(v)] > 1 && tags[static_cast<std::size_t>(t)] < 0.5) {
          tags[static_cast<std::size_t>(t)] = 1.0;
          changed = true;
        }
      }
    }
    if (!changed) return;
  }
}

// Laplacian smoothing of the vertices that are neither on the domain boundary
// nor on an inclusion loop; the tagged region is unchanged as long as no
// triangle inverts. Returns nullptr if no sweep improves the worst shape ratio.
std::shared_ptr<TriMesh> relax_mesh(const TriMesh& mesh, const PolygonInclusion& inc, int sweeps) {
  const int n = mesh.num_vertices();
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (int v = 0; v < n; ++v) fixed[static_cast<std::size_t>(v)] = mesh.is_boundary_vertex(v) ? 1 : 0;
  for (const auto& loop : inc.loops) {
    for (int v : loop) fixed[static_cast<std::size_t>(v)] = 1;
  }
  std::vector<std::vector<int>> nbr(static_cast<std::size_t>(n));
  for (const Triangle& tri : mesh.triangles()) {
    for (int i = 0; i < 3; ++i) {
      nbr[static_cast<std::size_t>(tri[i])].push_back(tri[(i + 1) % 3]);
      nbr[static_cast<std::size_t>(tri[i])].push_back(tri[(i + 2) % 3]);
    }
  }
  std::shared_ptr<TriMesh> best;
  double best_ratio = mesh.max_shape_ratio();
  std::vector<Point2> pos = mesh.vertices();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    std::vector<Point2> next = pos;
    for (int v = 0; v < n; ++v) {
      if (fixed[static_cast<std::size_t>(v)]) continue;
      Point2 avg;
      for (int w : nbr[static_cast<std::size_t>(v)]) avg += pos[static_cast<std::size_t>(w)];
      next[static_cast<std::size_t>(v)] = avg / static_cast<double>(nbr[static_cast<std::size_t>(v)].size());
    }
    try {
      auto m = std::make_shared<TriMesh>(next, mesh.triangles());
      pos = std::move(next);
      if (m->max_shape_ratio() < best_ratio) {
        best_ratio = m->max_shape_ratio();
        best = m;
      }
    } catch (const GeometryError&) {
      break;
    }
  }
  return best;
}

}  // namespace

VelocityField zero_velocity(const TriMesh& mesh) {
  return {mesh.id(), std::vector<Point2>(static_cast<std::size_t>(mesh.num_vertices()))};
}

VelocityField velocity_from_function(const TriMesh& mesh, const std::function<Point2(const Point2&)>& v, double d0) {
  VelocityField out = zero_velocity(mesh);
  const std::vector<double> dist = boundary_distance(mesh);
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    if (dist[static_cast<std::size_t>(i)] <= d0) continue;
    const Point2 w = v(mesh.vertex(i));
    if (!std::isfinite(w.x) || !std::isfinite(w.y)) throw ValidationError("velocity field is not finite");
    out.values[static_cast<std::size_t>(i)] = w;
  }
  return out;
}

TriMesh displace_mesh(const TriMesh& mesh, const VelocityField& v, double t) {
  require_velocity(v, mesh);
  std::vector<Point2> moved = mesh.vertices();
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += v.values[i] * t;
  return TriMesh(std::move(moved), mesh.triangles());
}

std::vector<double> polygon_curvature(const std::vector<Point2>& loop) {
  const std::size_t n = loop.size();
  if (n < 3) throw GeometryError("polygon needs at least three points");
  std::vector<double> kappa(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 e0 = loop[i] - loop[(i + n - 1) % n];
    const Point2 e1 = loop[(i + 1) % n] - loop[i];
    const double l0 = norm(e0), l1 = norm(e1);
    if (!(l0 > 0.0) || !(l1 > 0.0)) throw GeometryError("degenerate polygon edge");
    kappa[i] = std::atan2(cross(e0, e1), dot(e0, e1)) / (0.5 * (l0 + l1));
  }
  return kappa;
}

double polygon_perimeter(const std::vector<Point2>& loop) {
  double total = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) total += distance(loop[i], loop[(i + 1) % loop.size()]);
  return total;
}

double perimeter_derivative(const std::vector<Point2>& loop, const std::vector<Point2>& v) {
  if (v.size() != loop.size()) throw ValidationError("perimeter_derivative: size mismatch");
  double out = 0.0;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const Point2 e = loop[j] - loop[i];
    const double len = norm(e);
    if (!(len > 0.0)) throw GeometryError("degenerate polygon edge");
    out += dot(e, v[j] - v[i]) / len;
  }
  return out;
}

double PolygonInclusion::perimeter() const {
  double total = 0.0;
  for (const auto& loop : points) total += polygon_perimeter(loop);
  return total;
}

std::size_t PolygonInclusion::num_points() const {
  std::size_t n = 0;
  for (const auto& loop : loops) n += loop.size();
  return n;
}

PolygonInclusion extract_inclusion(const TriMesh& mesh, std::span<const double> tags) {
  if (tags.size() != static_cast<std::size_t>(mesh.num_triangles())) {
    throw ValidationError("inclusion tags do not match the triangle count");
  }
  const int n = mesh.num_vertices();
  const auto edges = directed_edges(mesh);
  std::vector<int> next(static_cast<std::size_t>(n), -1);
  std::vector<int> starts;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (tags[static_cast<std::size_t>(t)] < 0.5) continue;
    const Triangle& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i) {
      const int a = tri[i], b = tri[(i + 1) % 3];
      const auto it = edges.find(edge_key(b, a, n));
      if (it == edges.end()) throw GeometryError("inclusion touches the domain boundary");
      if (tags[static_cast<std::size_t>(it->second)] >= 0.5) continue;
      if (next[static_cast<std::size_t>(a)] != -1) {
        throw GeometryError("degenerate boundary geometry: inclusion loops meet at vertex " + std::to_string(a));
      }
      next[static_cast<std::size_t>(a)] = b;
      starts.push_back(a);
    }
  }
  std::sort(starts.begin(), starts.end());

  PolygonInclusion inc;
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  for (int s : starts) {
    if (used[static_cast<std::size_t>(s)]) continue;
    std::vector<int> loop;
    int v = s;
    while (!used[static_cast<std::size_t>(v)]) {
      used[static_cast<std::size_t>(v)] = 1;
      loop.push_back(v);
      v = next[static_cast<std::size_t>(v)];
      if (v < 0) throw GeometryError("inclusion boundary is not closed");
    }
    if (v != s) throw GeometryError("inclusion boundary is not a simple loop");
    if (loop.size() < 3) throw GeometryError("inclusion loop has fewer than three points");

    std::vector<Point2> pts;
    for (int w : loop) pts.push_back(mesh.vertex(w));
    const std::size_t m = pts.size();
    std::vector<Point2> normals(m);
    std::vector<double> weights(m);
    for (std::size_t i = 0; i < m; ++i) {
      const Point2 e0 = pts[i] - pts[(i + m - 1) % m];
      const Point2 e1 = pts[(i + 1) % m] - pts[i];
      const double l0 = norm(e0), l1 = norm(e1);
      // Inside lies to the left of each edge, so the outward normal of (dx, dy) is (dy, -dx).
      const Point2 nsum = Point2{e0.y / l0, -e0.x / l0} + Point2{e1.y / l1, -e1.x / l1};
      const double nn = norm(nsum);
      if (!(nn > 1e-12)) throw GeometryError("degenerate boundary geometry: cusp at vertex " + std::to_string(loop[i]));
      normals[i] = nsum / nn;
      weights[i] = 0.5 * (l0 + l1);
    }
    inc.curvature.push_back(polygon_curvature(pts));
    inc.loops.push_back(std::move(loop));
    inc.points.push_back(std::move(pts));
    inc.normals.push_back(std::move(normals));
    inc.weights.push_back(std::move(weights));
  }
  return inc;
}

SharpState solve_sharp_states(const TriMesh& mesh, std::span<const double> tags,
                              const std::vector<Measurement>& measurements, double k, bool with_adjoint) {
  if (measurements.empty()) throw ValidationError("at least one measurement is required");
  const SemilinearOperator op(mesh, coefficients_from_indicator(mesh, tags, k));
  const SparseOperator mb = assemble_boundary_mass(mesh);
  SharpState state;
  for (const Measurement& m : measurements) {
    ForwardSolution sol = solve_direct(op, m.f);
    state.j_pde += boundary_misfit(mb, sol.y, m.y_meas);
    if (with_adjoint) state.p.push_back(solve_adjoint(op, sol.y, m.y_meas, mb));
    state.y.push_back(std::move(sol.y));
  }
  state.j_pde /= static_cast<double>(measurements.size());
  return state;
}

Vector material_derivative_load(const SemilinearOperator& op, const NodalField& y, const VelocityField& v,
                                const SourceTerm& f) {
  const TriMesh& mesh = op.mesh();
  require_bound(y, mesh, "material_derivative_load");
  require_velocity(v, mesh);
  const CoefficientPair& c = op.coefficients();
  Vector out = Vector::Zero(mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const auto g = hat_gradients(mesh, t);
    const ElementKinematics kin = kinematics(g, tri, v);
    const double area = mesh.area(t);
    const auto ts = static_cast<std::size_t>(t);

    Point2 gy;
    for (int i = 0; i < 3; ++i) gy += g[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(tri[i])];
    const Point2 ag = deformation_apply(kin, gy);
    for (int i = 0; i < 3; ++i) out[tri[i]] -= c.a_of_u[ts] * area * dot(ag, g[static_cast<std::size_t>(i)]);

    const double w = kQuadWeight * area;
    for (int q = 0; q < 3; ++q) {
      const auto& l = kQuadBary[static_cast<std::size_t>(q)];
      double yq = 0.0;
      for (int i = 0; i < 3; ++i) yq += l[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(tri[i])];
      const double s = w * c.b_of_u[ts][static_cast<std::size_t>(q)] * yq * yq * yq * kin.div;
      for (int i = 0; i < 3; ++i) out[tri[i]] -= s * l[static_cast<std::size_t>(i)];
    }

    // d/dt of the consistent-mass load with f sampled at the moving vertices.
    double rate[3];
    for (int i = 0; i < 3; ++i) {
      const int vi = tri[i];
      const Point2& vel = v.values[static_cast<std::size_t>(vi)];
      rate[i] = f.a * vel.x + f.b * vel.y + kin.div * f(mesh.vertex(vi));
    }
    const double m = area / 12.0;
    out[tri[0]] += m * (2.0 * rate[0] + rate[1] + rate[2]);
    out[tri[1]] += m * (rate[0] + 2.0 * rate[1] + rate[2]);
    out[tri[2]] += m * (rate[0] + rate[1] + 2.0 * rate[2]);
  }
  return out;
}

NodalField solve_material_derivative(const SemilinearOperator& op, const NodalField& y, const VelocityField& v,
                                     const SourceTerm& f) {
  const Vector rhs = material_derivative_load(op, y, v, f);
  return to_field(op.mesh(), solve_spd(op.jacobian(to_vector(y)), rhs));
}

double misfit_directional_derivative(const SemilinearOperator& op, const std::vector<NodalField>& y,
                                     const std::vector<Measurement>& measurements,
                                     const std::vector<SourceTerm>& sources, const VelocityField& v) {
  if (y.size() != measurements.size() || sources.size() != measurements.size() || measurements.empty()) {
    throw ValidationError("misfit_directional_derivative: one state and source per measurement required");
  }
  const SparseOperator mb = assemble_boundary_mass(op.mesh());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const NodalField sdot = solve_material_derivative(op, y[i], v, sources[i]);
    total += boundary_misfit_load(mb, y[i], measurements[i].y_meas).dot(to_vector(sdot));
  }
  return total / static_cast<double>(y.size());
}

double gl_directional_derivative(const TriMesh& mesh, const NodalField& u, const VelocityField& v, double alpha,
                                 double epsilon) {
  require_bound(u, mesh, "gl_directional_derivative");
  require_velocity(v, mesh);
  double grad_part = 0.0, well_part = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const auto g = hat_gradients(mesh, t);
    const ElementKinematics kin = kinematics(g, tri, v);
    const double area = mesh.area(t);
    Point2 gu;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double ui = u[static_cast<std::size_t>(tri[i])];
      gu += g[static_cast<std::size_t>(i)] * ui;
      sum += ui;
      sum_sq += ui * ui;
    }
    grad_part += area * dot(gu, deformation_apply(kin, gu));
    // int u(1-u) on the element with the consistent mass matrix.
    well_part += kin.div * (area / 3.0 * sum - area / 12.0 * (sum * sum + sum_sq));
  }
  return alpha * epsilon * grad_part + alpha / epsilon * well_part;
}

double relaxed_directional_derivative(const RelaxedObjective& objective, const NodalField& u_eps,
                                      const std::vector<SourceTerm>& sources, const VelocityField& v) {
  const TriMesh& mesh = objective.mesh();
  const ObjectiveParams& prm = objective.params();
  const ObjectiveEvaluation ev = objective.evaluate(u_eps, false);
  const SemilinearOperator op(mesh, coefficients_from_field(mesh, u_eps, prm.k));
  return misfit_directional_derivative(op, ev.y, objective.measurements(), sources, v) +
         gl_directional_derivative(mesh, u_eps, v, prm.alpha, prm.epsilon);
}

double boundary_form(const PolygonInclusion& inclusion, const std::vector<std::vector<double>>& integrand,
                     const VelocityField& v) {
  double total = 0.0;
  for (std::size_t l = 0; l < inclusion.loops.size(); ++l) {
    for (std::size_t i = 0; i < inclusion.loops[l].size(); ++i) {
      const Point2& vel = v.values[static_cast<std::size_t>(inclusion.loops[l][i])];
      total += integrand[l][i] * dot(vel, inclusion.normals[l][i]) * inclusion.weights[l][i];
    }
  }
  return total;
}

ShapeGradient shape_gradient(const TriMesh& mesh, std::span<const double> tags, const PolygonInclusion& inclusion,
                             const SharpState& state, const ShapeGradientOptions& options) {
  if (state.p.size() != state.y.size() || state.y.empty()) throw ValidationError("shape_gradient needs adjoint states");
  const int n = mesh.num_vertices();
  const auto edges = directed_edges(mesh);
  const double k = options.k;
  const double curvature_weight = options.weight_curvature ? options.alpha : 1.0;
  const double nm = static_cast<double>(state.y.size());

  ShapeGradient out;
  out.boundary = zero_velocity(mesh);
  for (std::size_t l = 0; l < inclusion.loops.size(); ++l) {
    const auto& loop = inclusion.loops[l];
    const std::size_t m = loop.size();
    std::vector<double> edge_value(m), edge_len(m);
    for (std::size_t i = 0; i < m; ++i) {
      const int a = loop[i], b = loop[(i + 1) % m];
      const auto in_it = edges.find(edge_key(a, b, n));
      const auto out_it = edges.find(edge_key(b, a, n));
      if (in_it == edges.end() || out_it == edges.end()) throw GeometryError("inclusion edge is not interior");
      const int t_in = in_it->second, t_out = out_it->second;
      if (tags[static_cast<std::size_t>(t_in)] < 0.5 || tags[static_cast<std::size_t>(t_out)] >= 0.5) {
        throw ValidationError("inclusion loops do not match the tags");
      }
      const Point2 e = mesh.vertex(b) - mesh.vertex(a);
      const double len = norm(e);
      const Point2 tau = e / len;
      const Point2 nu{tau.y, -tau.x};
      double value = 0.0;
      for (std::size_t s = 0; s < state.y.size(); ++s) {
        const NodalField& y = state.y[s];
        const NodalField& p = state.p[s];
        const Point2 gy_in = gradient_on(mesh, t_in, y), gy_out = gradient_on(mesh, t_out, y);
        const Point2 gp_in = gradient_on(mesh, t_in, p), gp_out = gradient_on(mesh, t_out, p);
        const double tangential = dot(gy_in + gy_out, tau) * dot(gp_in + gp_out, tau) / 4.0;
        const double normal = dot(gy_out, nu) * dot(gp_out, nu) / k;
        const double ym = 0.5 * (y[static_cast<std::size_t>(a)] + y[static_cast<std::size_t>(b)]);
        const double pm = 0.5 * (p[static_cast<std::size_t>(a)] + p[static_cast<std::size_t>(b)]);
        value += (1.0 - k) * (tangential + normal) + ym * ym * ym * pm;
      }
      edge_value[i] = value / nm;
      edge_len[i] = len;
    }
    std::vector<double> g(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t ip = (i + m - 1) % m;
      g[i] = (edge_len[ip] * edge_value[ip] + edge_len[i] * edge_value[i]) / (edge_len[ip] + edge_len[i]) +
             curvature_weight * inclusion.curvature[l][i];
      out.boundary.values[static_cast<std::size_t>(loop[i])] = inclusion.normals[l][i] * (-g[i]);
    }
    out.integrand.push_back(std::move(g));
  }

  // H1 Riesz representative: (l^2 K + M) V = -int g nu phi, V = 0 on the collar.
  const std::vector<double> ones(static_cast<std::size_t>(mesh.num_triangles()), 1.0);
  SparseMatrix a = assemble_stiffness(mesh, ones).matrix * (options.smoothing_length * options.smoothing_length) +
                   assemble_mass(mesh, ones).matrix;
  const std::vector<double> dist = boundary_distance(mesh);
  std::vector<int> free_index(static_cast<std::size_t>(n), -1);
  int nfree = 0;
  for (int i = 0; i < n; ++i) {
    if (dist[static_cast<std::size_t>(i)] > options.collar) free_index[static_cast<std::size_t>(i)] = nfree++;
  }
  out.extended = zero_velocity(mesh);
  if (nfree > 0) {
    std::vector<Eigen::Triplet<double>> trip;
    for (int col = 0; col < a.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
        const int fr = free_index[static_cast<std::size_t>(it.row())];
        const int fc = free_index[static_cast<std::size_t>(it.col())];
        if (fr >= 0 && fc >= 0) trip.emplace_back(fr, fc, it.value());
      }
    }
    SparseMatrix reduced(nfree, nfree);
    reduced.setFromTriplets(trip.begin(), trip.end());
    Vector bx = Vector::Zero(nfree), by = Vector::Zero(nfree);
    for (std::size_t l = 0; l < inclusion.loops.size(); ++l) {
      for (std::size_t i = 0; i < inclusion.loops[l].size(); ++i) {
        const int fi = free_index[static_cast<std::size_t>(inclusion.loops[l][i])];
        if (fi < 0) throw GeometryError("inclusion reaches the boundary collar");
        const Point2 load = inclusion.normals[l][i] * (-out.integrand[l][i] * inclusion.weights[l][i]);
        bx[fi] += load.x;
        by[fi] += load.y;
      }
    }
    const Vector vx = solve_spd(reduced, bx);
    const Vector vy = solve_spd(reduced, by);
    for (int i = 0; i < n; ++i) {
      const int fi = free_index[static_cast<std::size_t>(i)];
      if (fi >= 0) out.extended.values[static_cast<std::size_t>(i)] = {vx[fi], vy[fi]};
    }
  }
  out.dj_extended = boundary_form(inclusion, out.integrand, out.extended);
  return out;
}

double sharp_cost(double j_pde, const PolygonInclusion& inclusion, double alpha) {
  return j_pde + alpha * inclusion.perimeter();
}

std::vector<double> polygon_tags(const TriMesh& mesh, const std::vector<std::vector<Point2>>& loops) {
  std::vector<double> tags(static_cast<std::size_t>(mesh.num_triangles()), 0.0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Point2 c = mesh.centroid(t);
    bool inside = false;
    for (const auto& loop : loops) {
      for (std::size_t i = 0, j = loop.size() - 1; i < loop.size(); j = i++) {
        const Point2& a = loop[i];
        const Point2& b = loop[j];
        if ((a.y > c.y) != (b.y > c.y) && c.x < (b.x - a.x) * (c.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
      }
    }
    tags[static_cast<std::size_t>(t)] = inside ? 1.0 : 0.0;
  }
  fill_pinches(mesh, tags);
  return tags;
}

namespace {

std::vector<Point2> all_points(const PolygonInclusion& inc) {
  std::vector<Point2> all;
  for (const auto& l : inc.points) all.insert(all.end(), l.begin(), l.end());
  return all;
}

}  // namespace

std::optional<FittedInclusion> fit_inclusion(const TriMesh& base, const std::vector<std::vector<Point2>>& loops,
                                             double shape_ratio_bound) {
  std::vector<double> tags = polygon_tags(base, loops);
  if (std::none_of(tags.begin(), tags.end(), [](double v) { return v >= 0.5; })) {
    // Polygon smaller than the mesh: start from the triangles around the
    // vertex nearest to its first point.
    if (loops.empty() || loops.front().empty()) return std::nullopt;
    const Point2 c = loops.front().front();
    int nearest = 0;
    for (int v = 1; v < base.num_vertices(); ++v) {
      if (distance(base.vertex(v), c) < distance(base.vertex(nearest), c)) nearest = v;
    }
    for (int t = 0; t < base.num_triangles(); ++t) {
      const Triangle& tri = base.triangle(t);
      if (tri[0] == nearest || tri[1] == nearest || tri[2] == nearest) tags[static_cast<std::size_t>(t)] = 1.0;
    }
  }
  PolygonInclusion inc;
  try {
    inc = extract_inclusion(base, tags);
  } catch (const GeometryError&) {
    return std::nullopt;
  }
  if (inc.loops.empty()) return std::nullopt;

  // Remove ears: a triangle with all three vertices on a loop would collapse
  // once the loop is straightened.
  for (int pass = 0; pass < 20; ++pass) {
    std::vector<char> on_loop(static_cast<std::size_t>(base.num_vertices()), 0);
    for (const auto& loop : inc.loops) {
      for (int v : loop) on_loop[static_cast<std::size_t>(v)] = 1;
    }
    bool changed = false;
    for (int t = 0; t < base.num_triangles(); ++t) {
      const Triangle& tri = base.triangle(t);
      if (!on_loop[static_cast<std::size_t>(tri[0])] || !on_loop[static_cast<std::size_t>(tri[1])] ||
          !on_loop[static_cast<std::size_t>(tri[2])]) {
        continue;
      }
      std::vector<double> trial = tags;
      trial[static_cast<std::size_t>(t)] = trial[static_cast<std::size_t>(t)] >= 0.5 ? 0.0 : 1.0;
      try {
        PolygonInclusion cand = extract_inclusion(base, trial);
        if (cand.loops.size() != inc.loops.size()) continue;
        tags = std::move(trial);
        inc = std::move(cand);
        changed = true;
        break;  // loop membership changed; rescan
      } catch (const GeometryError&) {
      }
    }
    if (!changed) break;
  }

  // Project the loop vertices onto the polygon, backing off if triangles degrade.
  VelocityField d = zero_velocity(base);
  for (const auto& loop : inc.loops) {
    for (int v : loop) {
      const Point2& x = base.vertex(v);
      Point2 best = x;
      double best_dist = std::numeric_limits<double>::infinity();
      for (const auto& poly : loops) {
        for (std::size_t i = 0; i < poly.size(); ++i) {
          const Point2& a = poly[i];
          const Point2 ab = poly[(i + 1) % poly.size()] - a;
          const double len2 = dot(ab, ab);
          const double s = len2 > 0.0 ? std::clamp(dot(x - a, ab) / len2, 0.0, 1.0) : 0.0;
          const Point2 q = a + ab * s;
          if (distance(q, x) < best_dist) {
            best_dist = distance(q, x);
            best = q;
          }
        }
      }
      d.values[static_cast<std::size_t>(v)] = best - x;
    }
  }
  std::shared_ptr<TriMesh> fitted;
  for (double t = 1.0; t >= 0.0625 && !fitted; t *= 0.5) {
    try {
      auto m = std::make_shared<TriMesh>(displace_mesh(base, d, t));
      if (auto r = relax_mesh(*m, inc, 10)) m = r;
      if (m->max_shape_ratio() <= shape_ratio_bound) fitted = m;
    } catch (const GeometryError&) {
    }
  }
  if (!fitted) fitted = std::make_shared<TriMesh>(base);
  FittedInclusion out{fitted, tags, extract_inclusion(*fitted, tags)};
  return out;
}

ShapeResult run_shape_descent(const ShapeOptions& options, const TriMesh& mesh,
                              const std::vector<std::vector<Point2>>& initial,
                              const std::vector<MeasurementSource>& sources) {
  const ShapeGradientOptions& go = options.gradient;
  if (!(go.alpha > 0.0) || !(go.k > 0.0 && go.k < 1.0)) throw ValidationError("shape descent: need alpha > 0 and 0 < k < 1");
  if (!(options.max_step > 0.0) || !(options.tol > 0.0)) throw ValidationError("shape descent: step and tol must be positive");
  std::vector<SourceTerm> terms;
  for (const auto& s : sources) terms.push_back(s.source);

  const TriMesh base = mesh;
  auto start = fit_inclusion(base, initial, options.remesh_ratio);
  if (!start) throw ValidationError("initial inclusion cannot be represented on the mesh");
  ShapeResult res;
  res.mesh = start->mesh;
  res.tags = std::move(start->tags);
  res.inclusion = std::move(start->inclusion);
  if (min_boundary_distance(*res.mesh, all_points(res.inclusion)) < go.collar) {
    throw ValidationError("initial inclusion violates the boundary collar");
  }
  const double h_ref = mesh.h_max();
  std::vector<Measurement> meas = sample_measurements(*res.mesh, sources);
  SharpState state = solve_sharp_states(*res.mesh, res.tags, meas, go.k, true);
  double cost = sharp_cost(state.j_pde, res.inclusion, go.alpha);
  res.trace.push_back({0, 0.0, 0, state.j_pde, res.inclusion.perimeter(), cost, 0.0, false});
  res.history.push_back(res.inclusion.points);

  int remeshes = 0;
  bool fresh = true;  // no accepted step since the last (re)start
  double last_snap_cost = std::numeric_limits<double>::infinity();
  // Fits the current polygon onto the input mesh again; false if that fails or stalls.
  auto resnap = [&](int iter) {
    if (fresh || remeshes >= options.max_remeshes) return false;
    auto fit = fit_inclusion(base, res.inclusion.points, options.remesh_ratio);
    if (!fit || fit->inclusion.loops.size() != res.inclusion.loops.size()) return false;
    std::vector<Measurement> new_meas = sample_measurements(*fit->mesh, sources);
    SharpState new_state = solve_sharp_states(*fit->mesh, fit->tags, new_meas, go.k, true);
    const double new_cost = sharp_cost(new_state.j_pde, fit->inclusion, go.alpha);
    if (new_cost >= last_snap_cost - options.tol) return false;  // no progress since the last re-snap
    last_snap_cost = new_cost;
    ++remeshes;
    fresh = true;
    res.mesh = fit->mesh;
    res.tags = std::move(fit->tags);
    res.inclusion = std::move(fit->inclusion);
    meas = std::move(new_meas);
    state = std::move(new_state);
    cost = new_cost;
    res.trace.push_back({iter, 0.0, 0, state.j_pde, res.inclusion.perimeter(), cost, 0.0, true});
    res.history.push_back(res.inclusion.points);
    return true;
  };

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    if (res.mesh->max_shape_ratio() > options.remesh_ratio) resnap(iter);
    const ShapeGradient grad = shape_gradient(*res.mesh, res.tags, res.inclusion, state, go);
    double vmax = 0.0;
    for (const Point2& p : grad.extended.values) vmax = std::max(vmax, norm(p));
    if (!(vmax > 0.0)) {
      res.converged = true;
      res.stop_reason = "zero shape gradient";
      return res;
    }
    VelocityField dir = grad.extended;
    for (Point2& p : dir.values) p = p * (h_ref / vmax);

    // Exact derivative of the discrete cost along the mesh motion.
    const SemilinearOperator op(*res.mesh, coefficients_from_indicator(*res.mesh, res.tags, go.k));
    double slope = misfit_directional_derivative(op, state.y, meas, terms, dir);
    for (std::size_t l = 0; l < res.inclusion.loops.size(); ++l) {
      std::vector<Point2> vl;
      for (int v : res.inclusion.loops[l]) vl.push_back(dir.values[static_cast<std::size_t>(v)]);
      slope += go.alpha * perimeter_derivative(res.inclusion.points[l], vl);
    }
    if (!(slope < 0.0)) {
      res.converged = true;
      res.stop_reason = "no descent direction";
      return res;
    }

    bool accepted = false;
    int backtracks = 0;
    double geometric_limit = 0.0;  // largest step rejected for mesh quality
    for (double step = options.max_step; step >= options.min_step; step *= 0.5, ++backtracks) {
      std::shared_ptr<TriMesh> trial;
      PolygonInclusion trial_inc;
      try {
        trial = std::make_shared<TriMesh>(displace_mesh(*res.mesh, dir, step));
        if (trial->max_shape_ratio() > options.shape_ratio_bound) {
          geometric_limit = std::max(geometric_limit, step);
          continue;
        }
        trial_inc = extract_inclusion(*trial, res.tags);
        if (min_boundary_distance(*trial, all_points(trial_inc)) < go.collar) continue;
      } catch (const GeometryError&) {
        geometric_limit = std::max(geometric_limit, step);
        continue;
      }
      std::vector<Measurement> trial_meas = sample_measurements(*trial, sources);
      const SharpState trial_state = solve_sharp_states(*trial, res.tags, trial_meas, go.k, false);
      const double trial_cost = sharp_cost(trial_state.j_pde, trial_inc, go.alpha);
      if (!(trial_cost <= cost + options.armijo * step * slope)) continue;

      const double decrease = cost - trial_cost;
      res.mesh = trial;
      res.inclusion = std::move(trial_inc);
      meas = std::move(trial_meas);
      state = solve_sharp_states(*res.mesh, res.tags, meas, go.k, true);
      cost = trial_cost;
      res.trace.push_back({iter, step, backtracks, state.j_pde, res.inclusion.perimeter(), cost, slope, false});
      res.history.push_back(res.inclusion.points);
      accepted = true;
      fresh = false;
      if (decrease < options.tol && geometric_limit == 0.0) {
        res.converged = true;
        res.stop_reason = "cost decrease below tolerance";
        return res;
      }
      break;
    }
    if (!accepted) {
      if (geometric_limit > 0.0 && resnap(iter)) continue;
      res.stop_reason = "step underflow";
      return res;
    }
  }
  res.stop_reason = "iteration cap reached";
  return res;
}

void save_polylines(const std::string& path, const std::vector<std::vector<std::vector<Point2>>>& history) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out.precision(17);
  out << "iter,loop,index,x,y\n";
  for (std::size_t it = 0; it < history.size(); ++it) {
    for (std::size_t l = 0; l < history[it].size(); ++l) {
      for (std::size_t i = 0; i < history[it][l].size(); ++i) {
        out << it << ',' << l << ',' << i << ',' << history[it][l][i].x << ',' << history[it][l][i].y << '\n';
      }
    }
  }
}

}  // namespace pfinv
