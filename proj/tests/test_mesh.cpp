#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pfinv/errors.hpp"
#include "pfinv/fem.hpp"
#include "pfinv/mesh.hpp"

using namespace pfinv;

TEST_CASE("square mesh sizes and area") {
  const TriMesh m = build_square_mesh(0.04);
  CHECK(m.h_max() <= 0.04 + 1e-12);
  CHECK(m.num_triangles() == 4 * 50 * 50);
  // Within a factor two of the reported element count.
  CHECK(m.num_triangles() > 3000);
  CHECK(m.num_triangles() < 12000);
  CHECK(std::abs(m.total_area() - 4.0) < 1e-10 * 4.0);
  CHECK(audit_mesh(m).empty());
  CHECK(m.max_shape_ratio() < 2.5);
}

TEST_CASE("coarsest two-triangle mesh") {
  const TriMesh m = build_square_mesh(2.0, GridPattern::kDiagonal);
  CHECK(m.num_triangles() == 2);
  CHECK(m.num_vertices() == 4);
  CHECK(m.boundary_edges().size() == 4);
}

TEST_CASE("uniform criss-cross elements have equal area") {
  const TriMesh m = build_square_mesh(0.5);
  const int n = 4;  // cells per side
  CHECK(m.num_triangles() == 4 * n * n);
  for (int t = 0; t < m.num_triangles(); ++t) CHECK(m.area(t) == doctest::Approx(4.0 / m.num_triangles()).epsilon(1e-13));
}

TEST_CASE("invalid mesh sizes are rejected") {
  CHECK_THROWS_AS(build_square_mesh(0.0), ValidationError);
  CHECK_THROWS_AS(build_square_mesh(-1.0), ValidationError);
  CHECK_THROWS_AS(build_square_mesh(2.5), ValidationError);
}

TEST_CASE("mesh constructor rejects clockwise triangles and open boundaries") {
  CHECK_THROWS_AS(TriMesh({{0, 0}, {1, 0}, {0, 1}}, {{0, 2, 1}}), GeometryError);
  CHECK_THROWS_AS(TriMesh({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 5}}), GeometryError);
  // Two triangles touching at a single vertex pinch the boundary.
  CHECK_THROWS_AS(TriMesh({{0, 0}, {1, 0}, {0, 1}, {-1, 0}, {0, -1}}, {{0, 1, 2}, {0, 3, 4}}), GeometryError);
}

TEST_CASE("boundary edges are oriented with the domain on the left") {
  const TriMesh m = build_square_mesh(0.5);
  for (const Edge& e : m.boundary_edges()) {
    const Point2 a = m.vertex(e[0]), b = m.vertex(e[1]);
    const Point2 mid = (a + b) * 0.5;
    const Point2 outward{(b - a).y, -(b - a).x};
    const Point2 probe = mid + outward * 0.01;
    CHECK(std::max(std::abs(probe.x), std::abs(probe.y)) > 1.0);
  }
}

TEST_CASE("refinement") {
  const TriMesh m = build_square_mesh(0.5);
  SUBCASE("empty marking is a no-op") {
    const TriMesh r = refine(m, {});
    CHECK(r.num_vertices() == m.num_vertices());
    CHECK(r.num_triangles() == m.num_triangles());
  }
  SUBCASE("marking everything quadruples the count") {
    const TriMesh r = refine_uniform(m);
    CHECK(r.num_triangles() == 4 * m.num_triangles());
    CHECK(audit_mesh(r).empty());
    CHECK(r.h_max() <= m.h_max() + 1e-14);
  }
  SUBCASE("one interior triangle gives a conforming mesh") {
    int interior = -1;
    for (int t = 0; t < m.num_triangles(); ++t) {
      const Point2 c = m.centroid(t);
      if (std::abs(c.x) < 0.4 && std::abs(c.y) < 0.4) interior = t;
    }
    REQUIRE(interior >= 0);
    const RefinementResult r = refine_with_parents(m, {{interior}, {}});
    CHECK(audit_mesh(r.mesh).empty());
    CHECK(r.mesh.num_triangles() > m.num_triangles() + 3);
    CHECK(std::abs(r.mesh.total_area() - 4.0) < 1e-12);
    // Each child lies inside its parent and children tile the parent.
    std::vector<double> child_area(static_cast<std::size_t>(m.num_triangles()), 0.0);
    for (int t = 0; t < r.mesh.num_triangles(); ++t) {
      const int p = r.parent[static_cast<std::size_t>(t)];
      child_area[static_cast<std::size_t>(p)] += r.mesh.area(t);
      const auto bary = barycentric_coordinates(m, p, r.mesh.centroid(t));
      CHECK(std::min({bary[0], bary[1], bary[2]}) > 0.0);
    }
    for (int t = 0; t < m.num_triangles(); ++t) CHECK(child_area[static_cast<std::size_t>(t)] == doctest::Approx(m.area(t)));
  }
  SUBCASE("repeated local refinement stays shape regular") {
    TriMesh cur = m;
    for (int level = 0; level < 6; ++level) {
      std::vector<int> marked;
      for (int t = 0; t < cur.num_triangles(); ++t) {
        if (distance(cur.centroid(t), {0.3, 0.1}) < 0.3) marked.push_back(t);
      }
      cur = refine(cur, {marked, {}});
      CHECK(audit_mesh(cur).empty());
    }
    CHECK(cur.max_shape_ratio() < 5.0);
  }
  SUBCASE("invalid triangle index") { CHECK_THROWS_AS(refine(m, {{m.num_triangles()}, {}}), ValidationError); }
}

TEST_CASE("gradient marking") {
  const TriMesh m = build_square_mesh(0.1);
  SUBCASE("zero field marks nothing") {
    const auto mk = mark_by_gradient(m, NodalField(m), 0.2, 0.2);
    CHECK(mk.refine_set.empty());
    CHECK(mk.coarsen_set.empty());
  }
  SUBCASE("linear ramp marks nothing") {
    const auto mk = mark_by_gradient(m, interpolate_nodal(m, [](const Point2& p) { return 0.3 * p.x; }), 0.2, 0.2);
    CHECK(mk.refine_set.empty());
    CHECK(mk.coarsen_set.empty());
  }
  SUBCASE("smoothed disc matches a brute-force quantile scan") {
    const NodalField u = interpolate_nodal(m, [](const Point2& p) {
      return 0.5 * (1.0 - std::tanh((norm(p) - 0.5) / 0.05));
    });
    const double rf = 0.15, cf = 0.3;
    const auto mk = mark_by_gradient(m, u, rf, cf);
    const auto g = element_gradient_norms(m, u);
    const std::size_t M = g.size();
    const double gmin = *std::min_element(g.begin(), g.end());
    const double gmax = *std::max_element(g.begin(), g.end());
    const double tie = 1e-12 * gmax;
    std::set<int> expect_refine, expect_coarsen;
    for (std::size_t k = 0; k < M; ++k) {
      std::size_t greater = 0, smaller = 0;
      for (std::size_t j = 0; j < M; ++j) {
        greater += g[j] > g[k] + tie;
        smaller += g[j] < g[k] - tie;
      }
      if (greater < std::ceil(rf * M - 1e-9) && g[k] > gmin + tie) expect_refine.insert(static_cast<int>(k));
      else if (smaller < std::ceil(cf * M - 1e-9) && g[k] < gmax - tie) expect_coarsen.insert(static_cast<int>(k));
    }
    CHECK(std::set<int>(mk.refine_set.begin(), mk.refine_set.end()) == expect_refine);
    CHECK(std::set<int>(mk.coarsen_set.begin(), mk.coarsen_set.end()) == expect_coarsen);
    for (int t : mk.refine_set) {
      const double r = norm(m.centroid(t));
      CHECK(r > 0.3);
      CHECK(r < 0.7);
    }
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(mark_by_gradient(m, NodalField(m), 1.5, 0.1), ValidationError);
    const TriMesh other = build_square_mesh(0.5);
    CHECK_THROWS_AS(mark_by_gradient(m, NodalField(other), 0.1, 0.1), ValidationError);
  }
}

TEST_CASE("point location") {
  const TriMesh m = refine(build_square_mesh(0.25), {{3, 17, 40}, {}});
  const PointLocator loc(m);
  SUBCASE("centroids") {
    for (int t = 0; t < m.num_triangles(); ++t) {
      const auto l = loc.locate(m.centroid(t));
      CHECK(l.triangle == t);
      for (double b : l.barycentric) CHECK(b == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }
  SUBCASE("vertices") {
    for (int v = 0; v < m.num_vertices(); ++v) {
      const auto l = loc.locate(m.vertex(v));
      const auto& tri = m.triangle(l.triangle);
      const int k = static_cast<int>(std::find(tri.begin(), tri.end(), v) - tri.begin());
      REQUIRE(k < 3);
      CHECK(l.barycentric[static_cast<std::size_t>(k)] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("barycentric reconstruction identity") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 500; ++i) {
      const Point2 p{d(rng), d(rng)};
      const auto l = loc.locate(p);
      Point2 q;
      for (int j = 0; j < 3; ++j) q += m.vertex(m.triangle(l.triangle)[static_cast<std::size_t>(j)]) * l.barycentric[static_cast<std::size_t>(j)];
      CHECK(distance(p, q) < 1e-12);
      CHECK(l.barycentric[0] + l.barycentric[1] + l.barycentric[2] == doctest::Approx(1.0));
    }
  }
  SUBCASE("outside") { CHECK_THROWS_AS(loc.locate({1.5, 0.0}), GeometryError); }
}

TEST_CASE("mesh and vtk round trip") {
  const TriMesh m = build_square_mesh(0.5);
  std::stringstream ss;
  write_mesh(ss, m);
  const TriMesh r = read_mesh(ss);
  CHECK(r.vertices() == m.vertices());
  CHECK(r.triangles() == m.triangles());
  std::vector<double> vals(static_cast<std::size_t>(m.num_vertices()), 1.0);
  std::vector<VtkPointData> data{{"u", vals}};
  std::stringstream vtk;
  write_vtk(vtk, m, data);
  CHECK(vtk.str().find("SCALARS u double 1") != std::string::npos);
  std::stringstream bad("vertices 3\n0 0\n1 0\n");
  CHECK_THROWS_AS(read_mesh(bad), ValidationError);
}

TEST_CASE("polygon mesh from a coarse triangulation") {
  const TriMesh coarse({{0, 0}, {2, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}});
  const TriMesh m = build_polygon_mesh(coarse, 0.1);
  CHECK(m.h_max() <= 0.1);
  CHECK(m.total_area() == doctest::Approx(coarse.total_area()).epsilon(1e-12));
  CHECK(audit_mesh(m).empty());
}
