#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pfinv/errors.hpp"
#include "pfinv/shape.hpp"

using namespace pfinv;

namespace {

// Smooth field supported in the disc of radius 0.8.
Point2 bump_field(const Point2& p) {
  const double r2 = (p.x * p.x + p.y * p.y) / 0.64;
  const double b = r2 < 1 ? (1 - r2) * (1 - r2) : 0.0;
  return {b * std::sin(p.x + 0.3), b * std::cos(2 * p.y) * p.x};
}

NodalField smooth_inclusion(const TriMesh& m) {
  return interpolate_nodal(m, [](const Point2& p) {
    return 0.5 * (1 + std::tanh((0.4 - std::hypot(p.x - 0.1, p.y)) / 0.1));
  });
}

double perimeter_rate(const PolygonInclusion& inc, const VelocityField& v) {
  double out = 0.0;
  for (std::size_t l = 0; l < inc.loops.size(); ++l) {
    std::vector<Point2> vl;
    for (int i : inc.loops[l]) vl.push_back(v.values[static_cast<std::size_t>(i)]);
    out += perimeter_derivative(inc.points[l], vl);
  }
  return out;
}

const std::vector<SourceTerm> kSources{{1, 0, 0}, {0, 1, 0}};

}  // namespace

TEST_CASE("polygon curvature converges to 1/r at second order") {
  const double r = 0.35;
  std::vector<double> n_list, err;
  for (int n : {16, 32, 64, 128}) {
    const auto loop = shape_boundary(Disc{{0.1, -0.2}, r}, n);
    const auto kappa = polygon_curvature(loop);
    double worst = 0.0;
    for (double k : kappa) worst = std::max(worst, std::abs(k - 1.0 / r));
    n_list.push_back(1.0 / n);
    err.push_back(worst);
    CHECK(polygon_perimeter(loop) == doctest::Approx(2 * n * r * std::sin(M_PI / n)));
  }
  CHECK(oracle::loglog_slope(n_list, err) > 1.9);
  // A clockwise loop has negative curvature.
  auto cw = shape_boundary(Disc{{0, 0}, r}, 32);
  std::reverse(cw.begin(), cw.end());
  CHECK(polygon_curvature(cw)[0] < 0.0);
}

TEST_CASE("perimeter derivative matches a difference quotient") {
  const auto loop = shape_boundary(Ellipse{{0, 0}, 0.5, 0.3, 0.2}, 40);
  std::vector<Point2> v;
  for (const Point2& p : loop) v.push_back(bump_field(p));
  const double t = 1e-6;
  std::vector<Point2> plus = loop, minus = loop;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    plus[i] += v[i] * t;
    minus[i] -= v[i] * t;
  }
  const double fd = (polygon_perimeter(plus) - polygon_perimeter(minus)) / (2 * t);
  CHECK(perimeter_derivative(loop, v) == doctest::Approx(fd).epsilon(1e-8));
}

TEST_CASE("zero velocity gives zero derivatives") {
  const TriMesh m = build_square_mesh(0.2);
  const NodalField u = smooth_inclusion(m);
  SemilinearOperator op(m, coefficients_from_field(m, u, 0.1));
  const SourceTerm f{1, 0.5, 0.2};
  const NodalField y = solve_direct(op, interpolate_nodal(m, f)).y;
  const NodalField sd = solve_material_derivative(op, y, zero_velocity(m), f);
  CHECK(to_vector(sd).lpNorm<Eigen::Infinity>() == 0.0);

  std::vector<Measurement> meas;
  for (const auto& s : kSources) meas.push_back({interpolate_nodal(m, s), NodalField(m, 0.3)});
  RelaxedObjective obj(m, meas, {1e-3, 0.1, 0.1});
  CHECK(relaxed_directional_derivative(obj, u, kSources, zero_velocity(m)) == 0.0);
}

TEST_CASE("homogeneous problem has no material derivative") {
  // u = 0 and f = 1 give y = 1 on every deformed mesh.
  const TriMesh m = build_square_mesh(0.2);
  SemilinearOperator op(m, coefficients_from_field(m, NodalField(m), 0.1));
  const SourceTerm f{0, 0, 1};
  const NodalField y = solve_direct(op, interpolate_nodal(m, f)).y;
  const NodalField sd = solve_material_derivative(op, y, velocity_from_function(m, bump_field), f);
  CHECK(to_vector(sd).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("material derivative is the derivative of the moving-mesh state") {
  const TriMesh m = build_square_mesh(0.1);
  const NodalField u = smooth_inclusion(m);
  const VelocityField v = velocity_from_function(m, bump_field);
  const SourceTerm f{1, 0.5, 0.2};
  const CoefficientPair coeff = coefficients_from_field(m, u, 0.1);
  SemilinearOperator op(m, coeff);
  const NodalField y0 = solve_direct(op, interpolate_nodal(m, f)).y;
  const Vector sd = to_vector(solve_material_derivative(op, y0, v, f));
  const auto k = assemble_stiffness(m, std::vector<double>(static_cast<std::size_t>(m.num_triangles()), 1.0));
  const auto mm = assemble_mass(m, std::vector<double>(static_cast<std::size_t>(m.num_triangles()), 1.0));
  std::vector<double> ts, err;
  for (double t : {1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3}) {
    const TriMesh mt = displace_mesh(m, v, t);
    SemilinearOperator opt(mt, coeff);
    const NodalField yt = solve_direct(opt, interpolate_nodal(mt, f)).y;
    ts.push_back(t);
    err.push_back(h1_norm(k, mm, to_vector(yt) - to_vector(y0) - t * sd));
  }
  CHECK(oracle::loglog_slope(ts, err) > 1.9);
}

TEST_CASE("relaxed shape derivative matches a moving-mesh difference quotient") {
  const TriMesh m = build_square_mesh(0.1);
  const NodalField u = smooth_inclusion(m);
  const VelocityField v = velocity_from_function(m, bump_field);
  const Phantom ph({Disc{{0.2, 0.1}, 0.4}});
  const MeasurementSet ms = generate_measurements(ph, build_truth_mesh(ph, m), m, kSources, 0.1, 0.0);
  const ObjectiveParams prm{1e-3, 0.1, 0.1};
  RelaxedObjective obj(m, sample_measurements(m, ms.sources), prm);
  const double dj = relaxed_directional_derivative(obj, u, kSources, v);
  const double t = 1e-5;
  auto value_at = [&](double s) {
    const TriMesh mt = displace_mesh(m, v, s);
    RelaxedObjective ot(mt, sample_measurements(mt, ms.sources), prm);
    return ot.value(NodalField(mt, u.values()));
  };
  const double fd = (value_at(t) - value_at(-t)) / (2 * t);
  CHECK(dj == doctest::Approx(fd).epsilon(1e-6));
  // The Ginzburg-Landau part alone.
  auto gl = [](const CostBreakdown& c) { return c.j_gl_gradient + c.j_gl_well; };
  const TriMesh mt = displace_mesh(m, v, t), mb = displace_mesh(m, v, -t);
  RelaxedObjective ot(mt, sample_measurements(mt, ms.sources), prm), ob(mb, sample_measurements(mb, ms.sources), prm);
  const double glp = gl(ot.gl_energy(NodalField(mt, u.values())));
  const double glm = gl(ob.gl_energy(NodalField(mb, u.values())));
  CHECK(gl_directional_derivative(m, u, v, 1e-3, 0.1) == doctest::Approx((glp - glm) / (2 * t)).epsilon(1e-6));
}

TEST_CASE("displacement rejects inverted triangles") {
  const TriMesh m = build_square_mesh(0.2);
  const VelocityField v = velocity_from_function(m, [](const Point2& p) { return Point2{std::sin(8 * p.y), 0.0}; });
  CHECK_THROWS_AS(displace_mesh(m, v, 1.0), GeometryError);
  CHECK_THROWS_AS(displace_mesh(build_square_mesh(0.5), v, 0.1), ValidationError);
}

TEST_CASE("extracted loops of a fitted disc") {
  const TriMesh base = build_square_mesh(0.1);
  const auto fit = fit_inclusion(base, {shape_boundary(Disc{{0.05, 0.0}, 0.35}, 96)});
  REQUIRE(fit);
  REQUIRE(fit->inclusion.loops.size() == 1);
  // Fitted loop points lie on the polygon, so the perimeter is close to 2 pi r.
  CHECK(fit->inclusion.perimeter() == doctest::Approx(2 * M_PI * 0.35).epsilon(0.02));
  for (std::size_t i = 0; i < fit->inclusion.num_points(); ++i) {
    const Point2 p = fit->inclusion.points[0][i];
    CHECK(norm(p - Point2{0.05, 0.0}) == doctest::Approx(0.35).epsilon(0.01));
    // Outward normal points away from the center.
    CHECK(dot(fit->inclusion.normals[0][i], p - Point2{0.05, 0.0}) > 0.0);
  }
  CHECK(fit->mesh->max_shape_ratio() <= 8.0);
  std::vector<double> outside(static_cast<std::size_t>(base.num_triangles()), 0.0);
  for (int t = 0; t < base.num_triangles(); ++t)
    if (base.centroid(t).x > 0.9) outside[static_cast<std::size_t>(t)] = 1.0;
  CHECK_THROWS_AS(extract_inclusion(base, outside), GeometryError);
}

TEST_CASE("boundary formula approaches the discrete shape derivative") {
  std::vector<double> rel;
  for (double h : {0.1, 0.05}) {
    const TriMesh base = build_square_mesh(h);
    const Phantom ph({Disc{{0.2, 0.1}, 0.4}});
    const MeasurementSet ms = generate_measurements(ph, build_truth_mesh(ph, base), base, kSources, 0.1, 0.0);
    const auto fit = fit_inclusion(base, {shape_boundary(Disc{{0.0, 0.0}, 0.3}, 128)});
    REQUIRE(fit);
    const TriMesh& m = *fit->mesh;
    const auto meas = sample_measurements(m, ms.sources);
    const SharpState st = solve_sharp_states(m, fit->tags, meas, 0.1, true);
    const ShapeGradient g = shape_gradient(m, fit->tags, fit->inclusion, st, ShapeGradientOptions{});
    const VelocityField v = velocity_from_function(m, bump_field);
    SemilinearOperator op(m, coefficients_from_indicator(m, fit->tags, 0.1));
    const double discrete =
        misfit_directional_derivative(op, st.y, meas, kSources, v) + 1e-3 * perimeter_rate(fit->inclusion, v);
    rel.push_back(std::abs(boundary_form(fit->inclusion, g.integrand, v) - discrete) / std::abs(discrete));
    // The extension is a descent direction for the boundary formula.
    CHECK(g.dj_extended < 0.0);
  }
  CHECK(rel[1] < rel[0]);
  CHECK(rel[1] < 0.2);
}

TEST_CASE("exact data leave only the curvature term") {
  const TriMesh base = build_square_mesh(0.1);
  const auto fit = fit_inclusion(base, {shape_boundary(Disc{{0.0, 0.1}, 0.3}, 96)});
  REQUIRE(fit);
  const TriMesh& m = *fit->mesh;
  std::vector<Measurement> meas;
  SemilinearOperator op(m, coefficients_from_indicator(m, fit->tags, 0.1));
  for (const auto& s : kSources) {
    const NodalField f = interpolate_nodal(m, s);
    meas.push_back({f, solve_direct(op, f).y});
  }
  const SharpState st = solve_sharp_states(m, fit->tags, meas, 0.1, true);
  CHECK(st.j_pde < 1e-20);
  ShapeGradientOptions go;
  go.alpha = 2e-3;
  const ShapeGradient g = shape_gradient(m, fit->tags, fit->inclusion, st, go);
  for (std::size_t i = 0; i < g.integrand[0].size(); ++i)
    CHECK(g.integrand[0][i] == doctest::Approx(go.alpha * fit->inclusion.curvature[0][i]).epsilon(1e-6));
  go.weight_curvature = false;
  const ShapeGradient bare = shape_gradient(m, fit->tags, fit->inclusion, st, go);
  CHECK(bare.integrand[0][0] == doctest::Approx(fit->inclusion.curvature[0][0]).epsilon(1e-6));
}

TEST_CASE("shape descent decreases the cost with fixed topology") {
  const TriMesh base = build_square_mesh(0.1);
  const Phantom ph({Disc{{0.2, 0.1}, 0.4}});
  const MeasurementSet ms = generate_measurements(ph, build_truth_mesh(ph, base), base, kSources, 0.1, 0.0);
  ShapeOptions o;
  o.max_iterations = 25;
  const ShapeResult r = run_shape_descent(o, base, {shape_boundary(Disc{{0.0, 0.0}, 0.2}, 64)}, ms.sources);
  REQUIRE(r.trace.size() >= 2);
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    if (!r.trace[i].remeshed) CHECK(r.trace[i].total <= r.trace[i - 1].total);
    if (!r.trace[i].remeshed) CHECK(r.trace[i].slope < 0.0);
  }
  CHECK(r.trace.back().total < 0.5 * r.trace.front().total);
  CHECK(r.inclusion.loops.size() == 1);
  for (const auto& it : r.history) CHECK(it.size() == 1);
  CHECK(r.history.size() == r.trace.size());
  const double before = reconstruction_error_elements(polygon_tags(base, r.history.front()), ph, base).sym_diff_ratio;
  const double after = reconstruction_error_elements(r.tags, ph, *r.mesh).sym_diff_ratio;
  CHECK(after < before);

  const auto path = std::filesystem::temp_directory_path() / "pfinv_polylines_test.csv";
  save_polylines(path.string(), r.history);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,loop,index,x,y");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  std::size_t expected = 0;
  for (const auto& it : r.history)
    for (const auto& loop : it) expected += loop.size();
  CHECK(rows == expected);
  std::filesystem::remove(path);
}

TEST_CASE("shape descent input validation") {
  const TriMesh base = build_square_mesh(0.2);
  const MeasurementSet ms = generate_measurements(Phantom(), base, base, kSources, 0.1, 0.0);
  ShapeOptions o;
  CHECK_THROWS_AS(run_shape_descent(o, base, {shape_boundary(Disc{{0.8, 0.0}, 0.15}, 32)}, ms.sources),
                  ValidationError);
  o.gradient.alpha = 0.0;
  CHECK_THROWS_AS(run_shape_descent(o, base, {shape_boundary(Disc{{0.0, 0.0}, 0.3}, 32)}, ms.sources),
                  ValidationError);
}
