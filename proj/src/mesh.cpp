#include "pfinv/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "pfinv/errors.hpp"

namespace pfinv {
namespace {

std::atomic<std::uint64_t> next_mesh_id{1};

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

TriMesh::TriMesh(std::vector<Point2> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), id_(next_mesh_id++) {
  const int nv = num_vertices();
  if (triangles_.empty()) throw GeometryError("mesh has no triangles");
  for (const Point2& p : vertices_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw GeometryError("non-finite vertex coordinate");
  }

  // Boundary edges are the edges used by exactly one triangle.
  std::unordered_map<std::uint64_t, int> uses;
  uses.reserve(triangles_.size() * 3);
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const Triangle& tri = triangles_[t];
    for (int v : tri) {
      if (v < 0 || v >= nv) throw GeometryError("triangle " + std::to_string(t) + " has a vertex index out of range");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw GeometryError("triangle " + std::to_string(t) + " repeats a vertex");
    }
    if (!(orient(vertex(tri[0]), vertex(tri[1]), vertex(tri[2])) > 0.0)) {
      throw GeometryError("triangle " + std::to_string(t) + " is not counterclockwise with positive area");
    }
    for (int j = 0; j < 3; ++j) {
      const int a = tri[j], b = tri[(j + 1) % 3];
      const int n = ++uses[edge_key(a, b)];
      if (n > 2) throw GeometryError("edge shared by more than two triangles");
      h_max_ = std::max(h_max_, distance(vertex(a), vertex(b)));
    }
  }

  boundary_vertex_.assign(vertices_.size(), 0);
  std::vector<int> out_degree(vertices_.size(), 0), in_degree(vertices_.size(), 0);
  for (const Triangle& tri : triangles_) {
    for (int j = 0; j < 3; ++j) {
      const int a = tri[j], b = tri[(j + 1) % 3];
      if (uses[edge_key(a, b)] == 1) {
        boundary_edges_.push_back({a, b});
        boundary_vertex_[static_cast<std::size_t>(a)] = 1;
        boundary_vertex_[static_cast<std::size_t>(b)] = 1;
        ++out_degree[static_cast<std::size_t>(a)];
        ++in_degree[static_cast<std::size_t>(b)];
      }
    }
  }
  for (int v = 0; v < nv; ++v) {
    if (out_degree[static_cast<std::size_t>(v)] != in_degree[static_cast<std::size_t>(v)] ||
        out_degree[static_cast<std::size_t>(v)] > 1) {
      throw GeometryError("boundary edges do not form simple closed loops at vertex " + std::to_string(v));
    }
  }
}

double TriMesh::area(int t) const {
  const Triangle& tri = triangle(t);
  return 0.5 * orient(vertex(tri[0]), vertex(tri[1]), vertex(tri[2]));
}

Point2 TriMesh::centroid(int t) const {
  const Triangle& tri = triangle(t);
  return (vertex(tri[0]) + vertex(tri[1]) + vertex(tri[2])) * (1.0 / 3.0);
}

double TriMesh::total_area() const {
  double s = 0.0;
  for (int t = 0; t < num_triangles(); ++t) s += area(t);
  return s;
}

double TriMesh::shape_ratio(int t) const {
  const Triangle& tri = triangle(t);
  const double a = distance(vertex(tri[1]), vertex(tri[2]));
  const double b = distance(vertex(tri[2]), vertex(tri[0]));
  const double c = distance(vertex(tri[0]), vertex(tri[1]));
  const double A = area(t);
  const double s = 0.5 * (a + b + c);
  return a * b * c * s / (4.0 * A * A);
}

double TriMesh::max_shape_ratio() const {
  double r = 0.0;
  for (int t = 0; t < num_triangles(); ++t) r = std::max(r, shape_ratio(t));
  return r;
}

std::vector<int> TriMesh::boundary_vertices() const {
  std::vector<int> out;
  for (int v = 0; v < num_vertices(); ++v) {
    if (is_boundary_vertex(v)) out.push_back(v);
  }
  return out;
}

TriMesh build_rectangle_mesh(double x0, double x1, double y0, double y1, double h_target, GridPattern pattern) {
  if (!(x1 > x0) || !(y1 > y0)) throw ValidationError("rectangle mesh: empty rectangle");
  if (!(h_target > 0.0) || !std::isfinite(h_target)) throw ValidationError("rectangle mesh: h_target must be positive");
  const int nx = std::max(1, static_cast<int>(std::ceil((x1 - x0) / h_target - 1e-9)));
  const int ny = std::max(1, static_cast<int>(std::ceil((y1 - y0) / h_target - 1e-9)));
  const double dx = (x1 - x0) / nx, dy = (y1 - y0) / ny;

  std::vector<Point2> verts;
  std::vector<Triangle> tris;
  auto corner = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      // Snap the outermost rows exactly onto the rectangle edges.
      const double x = (i == nx) ? x1 : x0 + i * dx;
      const double y = (j == ny) ? y1 : y0 + j * dy;
      verts.push_back({x, y});
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int c0 = corner(i, j), c1 = corner(i + 1, j), c2 = corner(i + 1, j + 1), c3 = corner(i, j + 1);
      if (pattern == GridPattern::kCrissCross) {
        const int ctr = static_cast<int>(verts.size());
        verts.push_back({x0 + (i + 0.5) * dx, y0 + (j + 0.5) * dy});
        tris.push_back({c0, c1, ctr});
        tris.push_back({c1, c2, ctr});
        tris.push_back({c2, c3, ctr});
        tris.push_back({c3, c0, ctr});
      } else {
        tris.push_back({c0, c1, c2});
        tris.push_back({c0, c2, c3});
      }
    }
  }
  return TriMesh(std::move(verts), std::move(tris));
}

TriMesh build_square_mesh(double h_target, GridPattern pattern) {
  if (!(h_target > 0.0) || !(h_target <= 2.0)) {
    throw ValidationError("square mesh: h_target must lie in (0, 2]");
  }
  return build_rectangle_mesh(-1.0, 1.0, -1.0, 1.0, h_target, pattern);
}

TriMesh build_polygon_mesh(const TriMesh& coarse, double h_target) {
  if (!(h_target > 0.0)) throw ValidationError("polygon mesh: h_target must be positive");
  TriMesh mesh = coarse;
  while (mesh.h_max() > h_target) mesh = refine_uniform(mesh);
  return mesh;
}

RefinementResult refine_with_parents(const TriMesh& mesh, const AdaptationMarking& marking) {
  const int nt = mesh.num_triangles();
  for (int t : marking.refine_set) {
    if (t < 0 || t >= nt) throw ValidationError("refine: triangle index " + std::to_string(t) + " out of range");
  }

  // Edge numbering and the reference (longest) edge of every triangle.
  std::unordered_map<std::uint64_t, int> edge_id;
  std::vector<Edge> edges;
  std::vector<std::array<int, 3>> tri_edges(static_cast<std::size_t>(nt));
  std::vector<int> ref_local(static_cast<std::size_t>(nt), 0);
  std::vector<std::array<int, 2>> edge_tris;
  for (int t = 0; t < nt; ++t) {
    const Triangle& tri = mesh.triangle(t);
    double best = -1.0;
    std::uint64_t best_key = 0;
    for (int j = 0; j < 3; ++j) {
      const int a = tri[j], b = tri[(j + 1) % 3];
      const std::uint64_t key = edge_key(a, b);
      auto [it, inserted] = edge_id.try_emplace(key, static_cast<int>(edges.size()));
      if (inserted) {
        edges.push_back({std::min(a, b), std::max(a, b)});
        edge_tris.push_back({t, -1});
      } else {
        edge_tris[static_cast<std::size_t>(it->second)][1] = t;
      }
      tri_edges[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] = it->second;
      const double len = distance(mesh.vertex(a), mesh.vertex(b));
      // Ties are broken by the edge key so that neighbours agree.
      if (len > best * (1.0 + 1e-12) || (std::abs(len - best) <= 1e-12 * best && key < best_key)) {
        best = len;
        best_key = key;
        ref_local[static_cast<std::size_t>(t)] = j;
      }
    }
  }

  std::vector<char> split(edges.size(), 0);
  std::vector<int> queue;
  for (int t : marking.refine_set) {
    for (int e : tri_edges[static_cast<std::size_t>(t)]) split[static_cast<std::size_t>(e)] = 1;
    queue.push_back(t);
  }
  // Closure: a triangle with any split edge must split its reference edge.
  for (int t : marking.refine_set) {
    for (int e : tri_edges[static_cast<std::size_t>(t)]) {
      for (int nb : edge_tris[static_cast<std::size_t>(e)]) {
        if (nb >= 0) queue.push_back(nb);
      }
    }
  }
  while (!queue.empty()) {
    const int t = queue.back();
    queue.pop_back();
    const auto& te = tri_edges[static_cast<std::size_t>(t)];
    const int ref = te[static_cast<std::size_t>(ref_local[static_cast<std::size_t>(t)])];
    if (split[static_cast<std::size_t>(ref)]) continue;
    const bool any = split[static_cast<std::size_t>(te[0])] || split[static_cast<std::size_t>(te[1])] ||
                     split[static_cast<std::size_t>(te[2])];
    if (!any) continue;
    split[static_cast<std::size_t>(ref)] = 1;
    for (int nb : edge_tris[static_cast<std::size_t>(ref)]) {
      if (nb >= 0 && nb != t) queue.push_back(nb);
    }
  }

  std::vector<Point2> verts = mesh.vertices();
  std::vector<int> midpoint(edges.size(), -1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!split[e]) continue;
    midpoint[e] = static_cast<int>(verts.size());
    verts.push_back((mesh.vertex(edges[e][0]) + mesh.vertex(edges[e][1])) * 0.5);
  }

  std::vector<Triangle> tris;
  std::vector<int> parent;
  tris.reserve(static_cast<std::size_t>(nt) * 2);
  auto emit = [&](int t, Triangle tri) {
    tris.push_back(tri);
    parent.push_back(t);
  };
  for (int t = 0; t < nt; ++t) {
    const Triangle& tri = mesh.triangle(t);
    const int r = ref_local[static_cast<std::size_t>(t)];
    const int a = tri[static_cast<std::size_t>(r)];
    const int b = tri[static_cast<std::size_t>((r + 1) % 3)];
    const int c = tri[static_cast<std::size_t>((r + 2) % 3)];
    const auto& te = tri_edges[static_cast<std::size_t>(t)];
    const int mab = midpoint[static_cast<std::size_t>(te[static_cast<std::size_t>(r)])];
    const int mbc = midpoint[static_cast<std::size_t>(te[static_cast<std::size_t>((r + 1) % 3)])];
    const int mca = midpoint[static_cast<std::size_t>(te[static_cast<std::size_t>((r + 2) % 3)])];
    if (mab < 0) {
      emit(t, tri);  // closure guarantees the other edges are unsplit
    } else if (mbc >= 0 && mca >= 0) {
      emit(t, {a, mab, mca});
      emit(t, {mab, b, mbc});
      emit(t, {mca, mbc, c});
      emit(t, {mab, mbc, mca});
    } else if (mbc >= 0) {
      emit(t, {a, mab, c});
      emit(t, {mab, b, mbc});
      emit(t, {mab, mbc, c});
    } else if (mca >= 0) {
      emit(t, {mab, b, c});
      emit(t, {a, mab, mca});
      emit(t, {mca, mab, c});
    } else {
      emit(t, {a, mab, c});
      emit(t, {mab, b, c});
    }
  }
  return RefinementResult{TriMesh(std::move(verts), std::move(tris)), std::move(parent)};
}

TriMesh refine(const TriMesh& mesh, const AdaptationMarking& marking) {
  if (marking.refine_set.empty()) return mesh;
  return refine_with_parents(mesh, marking).mesh;
}

TriMesh refine_uniform(const TriMesh& mesh, int levels) {
  TriMesh out = mesh;
  for (int l = 0; l < levels; ++l) {
    AdaptationMarking all;
    all.refine_set.resize(static_cast<std::size_t>(out.num_triangles()));
    for (int t = 0; t < out.num_triangles(); ++t) all.refine_set[static_cast<std::size_t>(t)] = t;
    out = refine(out, all);
  }
  return out;
}

std::vector<double> element_gradient_norms(const TriMesh& mesh, const NodalField& u) {
  require_bound(u, mesh, "element_gradient_norms");
  std::vector<double> g(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    const Point2& p0 = mesh.vertex(tri[0]);
    const Point2 e1 = mesh.vertex(tri[1]) - p0;
    const Point2 e2 = mesh.vertex(tri[2]) - p0;
    const double det = cross(e1, e2);
    const double d1 = u[static_cast<std::size_t>(tri[1])] - u[static_cast<std::size_t>(tri[0])];
    const double d2 = u[static_cast<std::size_t>(tri[2])] - u[static_cast<std::size_t>(tri[0])];
    // Solve [e1; e2] grad = [d1; d2].
    const double gx = (d1 * e2.y - d2 * e1.y) / det;
    const double gy = (e1.x * d2 - e2.x * d1) / det;
    g[static_cast<std::size_t>(t)] = std::hypot(gx, gy);
  }
  return g;
}

AdaptationMarking mark_by_gradient(const TriMesh& mesh, const NodalField& u, double refine_frac, double coarsen_frac) {
  if (!(refine_frac >= 0.0 && refine_frac <= 1.0) || !(coarsen_frac >= 0.0 && coarsen_frac <= 1.0)) {
    throw ValidationError("mark_by_gradient: fractions must lie in [0, 1]");
  }
  if (u.size() != static_cast<std::size_t>(mesh.num_vertices())) {
    throw ValidationError("mark_by_gradient: field length does not match vertex count");
  }
  const std::vector<double> g = element_gradient_norms(mesh, u);
  const std::size_t m = g.size();
  const double gmin = *std::min_element(g.begin(), g.end());
  const double gmax = *std::max_element(g.begin(), g.end());
  const double tie = 1e-12 * std::max(gmax, std::numeric_limits<double>::min());

  std::vector<double> sorted = g;
  std::sort(sorted.begin(), sorted.end());
  const auto n_refine = static_cast<std::size_t>(std::ceil(refine_frac * static_cast<double>(m) - 1e-9));
  const auto n_coarsen = static_cast<std::size_t>(std::ceil(coarsen_frac * static_cast<double>(m) - 1e-9));

  AdaptationMarking marking;
  for (std::size_t t = 0; t < m; ++t) {
    // Rank = number of triangles with a strictly larger (smaller) gradient.
    const auto greater = static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), g[t] + tie));
    const auto smaller = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), g[t] - tie) - sorted.begin());
    if (greater < n_refine && g[t] > gmin + tie) {
      marking.refine_set.push_back(static_cast<int>(t));
    } else if (smaller < n_coarsen && g[t] < gmax - tie) {
      marking.coarsen_set.push_back(static_cast<int>(t));
    }
  }
  return marking;
}

std::array<double, 3> barycentric_coordinates(const TriMesh& mesh, int t, const Point2& p) {
  const Triangle& tri = mesh.triangle(t);
  const Point2& a = mesh.vertex(tri[0]);
  const Point2& b = mesh.vertex(tri[1]);
  const Point2& c = mesh.vertex(tri[2]);
  const double det = orient(a, b, c);
  const double l1 = orient(p, b, c) / det;
  const double l2 = orient(a, p, c) / det;
  return {l1, l2, 1.0 - l1 - l2};
}

PointLocator::PointLocator(const TriMesh& mesh) : mesh_(mesh) {
  Point2 hi = mesh.vertex(0);
  lo_ = hi;
  for (const Point2& p : mesh.vertices()) {
    lo_.x = std::min(lo_.x, p.x);
    lo_.y = std::min(lo_.y, p.y);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  }
  const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_triangles()))));
  nx_ = ny_ = side;
  cell_w_ = std::max(hi.x - lo_.x, 1e-300) / nx_;
  cell_h_ = std::max(hi.y - lo_.y, 1e-300) / ny_;
  tol_ = 1e-9;

  auto cell_range = [&](double v, double origin, double w, int n) {
    return std::clamp(static_cast<int>(std::floor((v - origin) / w)), 0, n - 1);
  };
  std::vector<int> counts(static_cast<std::size_t>(nx_ * ny_) + 1, 0);
  std::vector<std::array<int, 4>> boxes(static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    double x0 = mesh.vertex(tri[0]).x, x1 = x0, y0 = mesh.vertex(tri[0]).y, y1 = y0;
    for (int v : tri) {
      x0 = std::min(x0, mesh.vertex(v).x);
      x1 = std::max(x1, mesh.vertex(v).x);
      y0 = std::min(y0, mesh.vertex(v).y);
      y1 = std::max(y1, mesh.vertex(v).y);
    }
    const double pad_x = 1e-9 * cell_w_, pad_y = 1e-9 * cell_h_;
    auto& box = boxes[static_cast<std::size_t>(t)];
    box = {cell_range(x0 - pad_x, lo_.x, cell_w_, nx_), cell_range(x1 + pad_x, lo_.x, cell_w_, nx_),
           cell_range(y0 - pad_y, lo_.y, cell_h_, ny_), cell_range(y1 + pad_y, lo_.y, cell_h_, ny_)};
    for (int j = box[2]; j <= box[3]; ++j) {
      for (int i = box[0]; i <= box[1]; ++i) ++counts[static_cast<std::size_t>(j * nx_ + i) + 1];
    }
  }
  for (std::size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
  bucket_start_ = counts;
  bucket_items_.assign(static_cast<std::size_t>(counts.back()), -1);
  std::vector<int> fill(counts.begin(), counts.end() - 1);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& box = boxes[static_cast<std::size_t>(t)];
    for (int j = box[2]; j <= box[3]; ++j) {
      for (int i = box[0]; i <= box[1]; ++i) {
        bucket_items_[static_cast<std::size_t>(fill[static_cast<std::size_t>(j * nx_ + i)]++)] = t;
      }
    }
  }
}

PointLocation PointLocator::locate(const Point2& p) const {
  auto best_of = [&](auto&& candidates) {
    PointLocation best;
    double best_min = -std::numeric_limits<double>::infinity();
    candidates([&](int t) {
      const auto bary = barycentric_coordinates(mesh_, t, p);
      const double m = std::min({bary[0], bary[1], bary[2]});
      if (m > best_min) {
        best_min = m;
        best.triangle = t;
        best.barycentric = bary;
      }
    });
    return std::pair{best, best_min};
  };

  const int i = std::clamp(static_cast<int>(std::floor((p.x - lo_.x) / cell_w_)), 0, nx_ - 1);
  const int j = std::clamp(static_cast<int>(std::floor((p.y - lo_.y) / cell_h_)), 0, ny_ - 1);
  const auto cell = static_cast<std::size_t>(j * nx_ + i);
  auto [loc, quality] = best_of([&](auto&& visit) {
    for (int k = bucket_start_[cell]; k < bucket_start_[cell + 1]; ++k) visit(bucket_items_[static_cast<std::size_t>(k)]);
  });
  if (quality < -tol_) {
    std::tie(loc, quality) = best_of([&](auto&& visit) {
      for (int t = 0; t < mesh_.num_triangles(); ++t) visit(t);
    });
  }
  if (loc.triangle < 0 || quality < -tol_) {
    std::ostringstream msg;
    msg << "point (" << p.x << ", " << p.y << ") lies outside the mesh";
    throw GeometryError(msg.str());
  }
  double sum = 0.0;
  for (double& l : loc.barycentric) {
    l = std::clamp(l, 0.0, 1.0);
    sum += l;
  }
  for (double& l : loc.barycentric) l /= sum;
  return loc;
}

double PointLocator::evaluate(std::span<const double> values, const Point2& p) const {
  const PointLocation loc = locate(p);
  const Triangle& tri = mesh_.triangle(loc.triangle);
  return loc.barycentric[0] * values[static_cast<std::size_t>(tri[0])] +
         loc.barycentric[1] * values[static_cast<std::size_t>(tri[1])] +
         loc.barycentric[2] * values[static_cast<std::size_t>(tri[2])];
}

PointLocation locate_point(const TriMesh& mesh, const Point2& p) { return PointLocator(mesh).locate(p); }

EdgeAdjacency build_edge_adjacency(const TriMesh& mesh) {
  std::map<std::uint64_t, std::array<int, 2>> table;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangle(t);
    for (int j = 0; j < 3; ++j) {
      auto [it, inserted] = table.try_emplace(edge_key(tri[j], tri[(j + 1) % 3]), std::array<int, 2>{t, -1});
      if (!inserted) it->second[1] = t;
    }
  }
  EdgeAdjacency adj;
  adj.edges.reserve(table.size());
  adj.triangles.reserve(table.size());
  for (const auto& [key, tris] : table) {
    adj.edges.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)});
    adj.triangles.push_back(tris);
  }
  return adj;
}

std::vector<std::string> audit_mesh(const TriMesh& mesh, double shape_ratio_bound) {
  std::vector<std::string> issues;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (!(mesh.area(t) > 0.0)) issues.push_back("non-positive area in triangle " + std::to_string(t));
    if (mesh.shape_ratio(t) > shape_ratio_bound) {
      issues.push_back("shape ratio bound exceeded in triangle " + std::to_string(t));
    }
  }
  // A hanging node sits strictly inside an edge that only one triangle uses; it
  // is then connected by an edge to one of that edge's endpoints.
  const EdgeAdjacency adj = build_edge_adjacency(mesh);
  std::vector<std::vector<int>> neighbours(static_cast<std::size_t>(mesh.num_vertices()));
  for (const Edge& e : adj.edges) {
    neighbours[static_cast<std::size_t>(e[0])].push_back(e[1]);
    neighbours[static_cast<std::size_t>(e[1])].push_back(e[0]);
  }
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    if (adj.triangles[e][1] >= 0) continue;
    const Point2& a = mesh.vertex(adj.edges[e][0]);
    const Point2& b = mesh.vertex(adj.edges[e][1]);
    const double len = distance(a, b);
    for (int end : adj.edges[e]) {
      for (int v : neighbours[static_cast<std::size_t>(end)]) {
        if (v == adj.edges[e][0] || v == adj.edges[e][1]) continue;
        const Point2& p = mesh.vertex(v);
        const double off_line = std::abs(orient(a, b, p)) / len;
        const double along = dot(p - a, b - a) / (len * len);
        if (off_line < 1e-12 * len && along > 1e-12 && along < 1.0 - 1e-12) {
          issues.push_back("hanging vertex " + std::to_string(v) + " on edge (" + std::to_string(adj.edges[e][0]) +
                           ", " + std::to_string(adj.edges[e][1]) + ")");
        }
      }
    }
  }
  return issues;
}

void write_mesh(std::ostream& out, const TriMesh& mesh) {
  out << std::setprecision(17);
  out << "vertices " << mesh.num_vertices() << '\n';
  for (const Point2& p : mesh.vertices()) out << p.x << ' ' << p.y << '\n';
  out << "triangles " << mesh.num_triangles() << '\n';
  for (const Triangle& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

TriMesh read_mesh(std::istream& in) {
  std::string tag;
  long long n = 0;
  if (!(in >> tag >> n) || tag != "vertices" || n < 0) throw ValidationError("mesh file: expected 'vertices N'");
  std::vector<Point2> verts(static_cast<std::size_t>(n));
  for (auto& p : verts) {
    if (!(in >> p.x >> p.y)) throw ValidationError("mesh file: truncated vertex list");
  }
  long long m = 0;
  if (!(in >> tag >> m) || tag != "triangles" || m < 0) throw ValidationError("mesh file: expected 'triangles M'");
  std::vector<Triangle> tris(static_cast<std::size_t>(m));
  for (auto& t : tris) {
    if (!(in >> t[0] >> t[1] >> t[2])) throw ValidationError("mesh file: truncated triangle list");
  }
  return TriMesh(std::move(verts), std::move(tris));
}

void save_mesh(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_mesh(out, mesh);
}

TriMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  return read_mesh(in);
}

void write_vtk(std::ostream& out, const TriMesh& mesh, std::span<const VtkPointData> point_data) {
  out << std::setprecision(17);
  out << "# vtk DataFile Version 3.0\npfinv\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_vertices() << " double\n";
  for (const Point2& p : mesh.vertices()) out << p.x << ' ' << p.y << " 0\n";
  out << "CELLS " << mesh.num_triangles() << ' ' << 4 * mesh.num_triangles() << '\n';
  for (const Triangle& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << mesh.num_triangles() << '\n';
  for (int t = 0; t < mesh.num_triangles(); ++t) out << "5\n";
  if (point_data.empty()) return;
  out << "POINT_DATA " << mesh.num_vertices() << '\n';
  for (const VtkPointData& d : point_data) {
    if (d.values.size() != static_cast<std::size_t>(mesh.num_vertices())) {
      throw ValidationError("vtk: point data '" + d.name + "' has wrong length");
    }
    out << "SCALARS " << d.name << " double 1\nLOOKUP_TABLE default\n";
    for (double v : d.values) out << v << '\n';
  }
}

void save_vtk(const std::string& path, const TriMesh& mesh, std::span<const VtkPointData> point_data) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_vtk(out, mesh, point_data);
}

}  // namespace pfinv
