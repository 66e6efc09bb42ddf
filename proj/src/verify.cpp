#include "pfinv/verify.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "pfinv/data.hpp"
#include "pfinv/errors.hpp"
#include "pfinv/shape.hpp"

namespace pfinv {

namespace {

const std::vector<double> kSteps{1e-1, 1e-2, 1e-3, 1e-4};

double loglog_slope(const std::vector<double>& s, const std::vector<double>& err) {
  const double n = static_cast<double>(s.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    mx += std::log(s[i]) / n;
    my += std::log(std::max(err[i], 1e-300)) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double dx = std::log(s[i]) - mx;
    sxy += dx * (std::log(std::max(err[i], 1e-300)) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

NodalField random_field(const TriMesh& m, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  NodalField f(m);
  for (double& v : f.values()) v = d(rng);
  return f;
}

NodalField shifted(const NodalField& u, const NodalField& theta, double s, const TriMesh& m) {
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u[i] + s * theta[i];
  return NodalField(m, std::move(v));
}

// Data of a disc inclusion generated on the verification mesh itself; the
// checks only need a nonzero misfit.
std::vector<Measurement> disc_measurements(const TriMesh& m) {
  const NodalField truth = interpolate_nodal(m, [](const Point2& p) { return norm(p - Point2{0.2, 0.1}) < 0.45 ? 1.0 : 0.0; });
  SemilinearOperator op(m, coefficients_from_field(m, truth, 0.1));
  std::vector<Measurement> out;
  for (const SourceTerm& s : {SourceTerm{1, 0, 0}, SourceTerm{0, 1, 0}}) {
    const NodalField f = interpolate_nodal(m, s);
    out.push_back({f, solve_direct(op, f).y});
  }
  return out;
}

double h1_unit(const TriMesh& m, const Vector& v) {
  const std::vector<double> one(static_cast<std::size_t>(m.num_triangles()), 1.0);
  return h1_norm(assemble_stiffness(m, one), assemble_mass(m, one), v);
}

VerifyCheck make(std::string name, double measured, double threshold, bool passed, std::string detail = {}) {
  return {std::move(name), passed, measured, threshold, std::move(detail)};
}

std::vector<PdasProblem> random_box_problems(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<PdasProblem> out;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10 + trial * 2;  // dimensions 10..48
    Eigen::MatrixXd b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(i, j) = d(rng);
    const Eigen::MatrixXd a = b.transpose() * b / n + 0.5 * Eigen::MatrixXd::Identity(n, n);
    PdasProblem p;
    p.a = a.sparseView();
    p.b = Vector(n);
    for (int i = 0; i < n; ++i) p.b[i] = 0.5 + d(rng);
    out.push_back(std::move(p));
  }
  return out;
}

double manufactured(const Point2& p) { return std::cos(M_PI * p.x) * std::cos(M_PI * p.y); }

double manufactured_l2_error(const TriMesh& m, const NodalField& y) {
  // Degree-5 seven-point rule.
  static const double a1 = 0.059715871789770, b1 = 0.470142064105115;
  static const double a2 = 0.797426985353087, b2 = 0.101286507323456;
  static const double pts[7][3] = {{1. / 3, 1. / 3, 1. / 3}, {a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1},
                                   {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2}};
  static const double w[7] = {0.225, 0.132394152788506, 0.132394152788506, 0.132394152788506,
                              0.125939180544827, 0.125939180544827, 0.125939180544827};
  double s = 0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Triangle& tri = m.triangle(t);
    for (int q = 0; q < 7; ++q) {
      Point2 p;
      double v = 0;
      for (int i = 0; i < 3; ++i) {
        p += m.vertex(tri[i]) * pts[q][i];
        v += y[static_cast<std::size_t>(tri[i])] * pts[q][i];
      }
      s += w[q] * m.area(t) * std::pow(v - manufactured(p), 2);
    }
  }
  return std::sqrt(s);
}

// Optimal one-dimensional transition, 0 for s <= -pi eps / 2 and 1 beyond pi eps / 2.
double optimal_profile(double s, double eps) {
  const double w = M_PI * eps;
  if (s <= -w / 2) return 0.0;
  if (s >= w / 2) return 1.0;
  return std::pow(std::sin((s + w / 2) / (2 * eps)), 2);
}

}  // namespace

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed; });
}

VerifyCheck check_gradient_taylor(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed);
  const TriMesh m = build_square_mesh(o.h);
  ObjectiveParams params{1e-3, 1.0 / (8 * M_PI), 0.1};
  params.newton_tol = 1e-14;
  const RelaxedObjective obj(m, disc_measurements(m), params);
  double worst = 1e300;
  for (int trial = 0; trial < 5; ++trial) {
    const NodalField u = random_field(m, rng, 0.15, 0.85);
    const NodalField theta = random_field(m, rng, -0.5, 0.5);
    Vector g = obj.evaluate(u, true).gradient;
    if (o.corrupt_gradient) g *= 1.1;
    const double dj = g.dot(to_vector(theta));
    std::vector<double> errs;
    for (double s : kSteps) {
      const double jp = obj.value(shifted(u, theta, s, m));
      const double jm = obj.value(shifted(u, theta, -s, m));
      errs.push_back(std::abs(jp - jm - 2 * s * dj));
    }
    worst = std::min(worst, loglog_slope(kSteps, errs));
  }
  return make("gradient Taylor slope", worst, 1.9, worst >= 1.9, "central remainder, 5 pairs, s = 1e-1..1e-4");
}

VerifyCheck check_adjoint_identity(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed + 1);
  const TriMesh m = build_square_mesh(o.h);
  const auto meas = disc_measurements(m);
  ObjectiveParams params{1e-3, 1.0 / (8 * M_PI), 0.1};
  params.newton_tol = 1e-14;
  const RelaxedObjective obj(m, meas, params);
  const SparseOperator mb = assemble_boundary_mass(m);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const NodalField u = random_field(m, rng, 0.0, 1.0);
    const NodalField theta = random_field(m, rng, -1.0, 1.0);
    const ObjectiveEvaluation ev = obj.evaluate(u, true);
    const SemilinearOperator op(m, coefficients_from_field(m, u, params.k));
    double direct = 0.0;
    for (std::size_t i = 0; i < meas.size(); ++i) {
      const NodalField s = solve_linearized(op, ev.y[i], theta);
      const Vector r = to_vector(ev.y[i]) - to_vector(meas[i].y_meas);
      direct += r.dot(mb.matrix * to_vector(s)) / static_cast<double>(meas.size());
    }
    const double adjoint = ev.misfit_gradient.dot(to_vector(theta));
    worst = std::max(worst, std::abs(direct - adjoint) / std::abs(direct));
  }
  return make("adjoint identity relative gap", worst, 1e-9, worst <= 1e-9, "linearized route vs adjoint route");
}

VerifyCheck check_linearized_forward(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed + 2);
  const TriMesh m = build_square_mesh(o.h);
  const NodalField u = random_field(m, rng, 0.2, 0.8);
  const NodalField theta = random_field(m, rng, -1.0, 1.0);
  const NodalField f = interpolate_nodal(m, [](const Point2& p) { return 1.0 + p.x; });
  const auto y0 = solve_direct(m, u, f, 0.1, 1e-13);
  const NodalField sd = solve_linearized(m, u, y0, theta, 0.1);
  std::vector<double> errs;
  for (double s : kSteps) {
    const auto ys = solve_direct(m, shifted(u, theta, s, m), f, 0.1, 1e-13);
    errs.push_back(h1_unit(m, to_vector(ys.y) - to_vector(y0.y) - s * to_vector(sd)));
  }
  const double slope = loglog_slope(kSteps, errs);
  return make("linearized forward slope", slope, 1.9, slope >= 1.9, "H1 remainder");
}

VerifyCheck check_material_derivative(const VerifyOptions& o) {
  const TriMesh m = build_square_mesh(o.h);
  const NodalField u = interpolate_nodal(m, [](const Point2& p) {
    return 0.5 * (1 + std::tanh((0.4 - std::hypot(p.x - 0.1, p.y)) / 0.1));
  });
  const VelocityField v = velocity_from_function(m, [](const Point2& p) {
    const double r2 = (p.x * p.x + p.y * p.y) / 0.64;
    const double b = r2 < 1 ? (1 - r2) * (1 - r2) : 0.0;
    return Point2{b * std::sin(p.x + 0.3), b * std::cos(2 * p.y) * p.x};
  });
  const SourceTerm f{1, 0.5, 0.2};
  const CoefficientPair coeff = coefficients_from_field(m, u, 0.1);
  const SemilinearOperator op(m, coeff);
  NewtonOptions newton;
  newton.tol = 1e-13;
  const NodalField y0 = solve_direct(op, interpolate_nodal(m, f), newton).y;
  const Vector sd = to_vector(solve_material_derivative(op, y0, v, f));
  std::vector<double> ts, errs;
  for (double t = 0.1; t > 5e-3; t /= 2) {
    const TriMesh mt = displace_mesh(m, v, t);
    const SemilinearOperator opt(mt, coeff);
    const NodalField yt = solve_direct(opt, interpolate_nodal(mt, f), newton).y;
    ts.push_back(t);
    errs.push_back(h1_unit(m, to_vector(yt) - to_vector(y0) - t * sd));
  }
  const double slope = loglog_slope(ts, errs);
  return make("material derivative slope", slope, 1.9, slope >= 1.9, "moving-mesh H1 remainder, t = 0.1..0.00625");
}

Vector projected_gradient_box(const PdasProblem& p, int max_iterations) {
  const Eigen::MatrixXd a(p.a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const double step = 1.0 / es.eigenvalues().maxCoeff();
  Vector u = Vector::Zero(p.b.size());
  for (int it = 0; it < max_iterations; ++it) {
    const Vector next = (u - step * (a * u - p.b)).cwiseMax(p.lower).cwiseMin(p.upper);
    const double change = (next - u).lpNorm<Eigen::Infinity>();
    u = next;
    if (change < 1e-15) break;
  }
  return u;
}

VerifyCheck check_pdas_oracle(const VerifyOptions& o) {
  double worst = 0.0;
  for (const PdasProblem& p : random_box_problems(o.seed)) {
    worst = std::max(worst, (solve_pdas(p).u - projected_gradient_box(p)).lpNorm<Eigen::Infinity>());
  }
  return make("PDAS vs projected gradient", worst, 1e-8, worst <= 1e-8, "20 problems, dimension 10..48");
}

VerifyCheck check_pdas_complementarity(const VerifyOptions& o) {
  double worst = 0.0;
  for (const PdasProblem& p : random_box_problems(o.seed)) {
    const ComplementarityResidual c = complementarity(p, solve_pdas(p).u);
    worst = std::max({worst, c.inactive / p.b.norm(), c.lower / p.b.norm(), c.upper / p.b.norm(), c.box});
  }
  return make("PDAS complementarity / |b|", worst, 1e-10, worst <= 1e-10);
}

VerifyCheck check_manufactured_order(const VerifyOptions&) {
  std::vector<double> errs;
  for (int level = 0; level < 4; ++level) {
    const TriMesh m = build_square_mesh(0.25 / (1 << level));
    const NodalField f = interpolate_nodal(m, [](const Point2& p) {
      const double y = manufactured(p);
      return 2 * M_PI * M_PI * y + y * y * y;
    });
    errs.push_back(manufactured_l2_error(m, solve_direct(m, NodalField(m), f, 0.1).y));
  }
  double worst = 1e300;
  for (std::size_t i = 1; i < errs.size(); ++i) worst = std::min(worst, std::log2(errs[i - 1] / errs[i]));
  return make("manufactured L2 order", worst, 1.9, worst >= 1.9, "grid spacing 0.25 halved three times");
}

VerifyCheck check_constant_solutions(const VerifyOptions& o) {
  const TriMesh m = build_square_mesh(o.h);
  const NodalField u(m);
  double worst = 0.0;
  for (const auto& [f, y] : {std::pair{1.0, 1.0}, std::pair{8.0, 2.0}}) {
    const ForwardSolution s = solve_direct(m, u, NodalField(m, f), 0.1);
    for (double v : s.y.values()) worst = std::max(worst, std::abs(v - y));
  }
  return make("constant solutions max error", worst, 1e-10, worst <= 1e-10, "f = 1 -> 1, f = 8 -> 2");
}

VerifyCheck check_energy_decrease(const VerifyOptions& o) {
  const auto mesh = std::make_shared<const TriMesh>(build_square_mesh(o.h));
  const NodalField truth =
      interpolate_nodal(*mesh, [](const Point2& p) { return norm(p - Point2{0.2, 0.1}) < 0.45 ? 1.0 : 0.0; });
  std::vector<MeasurementSource> sources;
  for (const SourceTerm& s : {SourceTerm{1, 0, 0}, SourceTerm{0, 1, 0}}) {
    sources.push_back({s, BoundaryDatum(*mesh, solve_direct(*mesh, truth, interpolate_nodal(*mesh, s), 0.1).y)});
  }
  PopOptions po;
  po.alpha = 1e-3;
  po.epsilon = 0.1;
  po.max_iterations = 60;
  const PopResult r = run_pop(po, mesh, NodalField(*mesh), sources);
  int increases = 0;
  for (std::size_t i = 1; i < r.state.history.size(); ++i) {
    if (r.state.history[i].total > r.state.history[i - 1].total) ++increases;
  }
  return make("energy increases in POP run", increases, 0, increases == 0,
              std::to_string(r.state.iter) + " accepted steps");
}

VerifyCheck check_gl_scaling(const VerifyOptions& o) {
  std::mt19937_64 rng(o.seed + 3);
  const TriMesh m = build_square_mesh(o.h);
  const std::vector<Measurement> none{{NodalField(m), NodalField(m)}};
  const NodalField u = random_field(m, rng, 0.0, 1.0);
  const double eps = 0.05, alpha = 1e-3;
  const CostBreakdown c1 = RelaxedObjective(m, none, {alpha, eps, 0.1}).gl_energy(u);
  const CostBreakdown c2 = RelaxedObjective(m, none, {alpha, 2 * eps, 0.1}).gl_energy(u);
  const CostBreakdown half = RelaxedObjective(m, none, {alpha, eps, 0.1}).gl_energy(NodalField(m, 0.5));
  const double gap = std::max({std::abs(c2.j_gl_well / c1.j_gl_well - 0.5), std::abs(c2.j_gl_gradient / c1.j_gl_gradient - 2.0),
                               std::abs(half.j_gl_well / (alpha / eps) - 1.0), std::abs(half.j_gl_gradient)});
  return make("GL scaling gap", gap, 1e-12, gap <= 1e-12, "well ~ 1/eps, gradient ~ eps, u = 1/2 well = alpha/eps |Omega|/4");
}

double modica_mortola_quadrature() {
  // s = sin^2(th): 2 int_0^1 sqrt(s(1-s)) ds = 4 int_0^{pi/2} sin^2 cos^2 dth.
  static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
  static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                              0.2369268850561891};
  const int panels = 64;
  const double hw = 0.5 * (M_PI / 2) / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (2 * p + 1) * hw;
    for (int q = 0; q < 5; ++q) {
      const double th = mid + hw * x[q];
      s += w[q] * hw * std::pow(std::sin(th) * std::cos(th), 2);
    }
  }
  return 4.0 * s;
}

VerifyCheck check_modica_mortola(const VerifyOptions&) {
  const double eps = 1.0 / (16 * M_PI), alpha = 1e-3, x0 = 0.1;
  auto profile = [&](const Point2& p) { return optimal_profile(p.x - x0, eps); };
  TriMesh m = build_square_mesh(0.04);
  for (int level = 0; level < 4; ++level) {
    m = refine(m, mark_by_gradient(m, interpolate_nodal(m, profile), 0.25, 0.0));
  }
  const NodalField u = interpolate_nodal(m, profile);
  const std::vector<Measurement> none{{NodalField(m), NodalField(m)}};
  const CostBreakdown gl = RelaxedObjective(m, none, {alpha, eps, 0.1}).gl_energy(u);
  const double expected = alpha * modica_mortola_quadrature() * 2.0;  // interface length 2
  const double gap = std::abs(gl.j_gl_gradient + gl.j_gl_well - expected) / expected;
  return make("Modica-Mortola relative gap", gap, 0.05, gap <= 0.05,
              "eps = 1/(16 pi), adapted mesh with " + std::to_string(m.num_triangles()) + " triangles");
}

VerifyReport run_verification(const VerifyOptions& o) {
  VerifyReport r;
  using Check = VerifyCheck (*)(const VerifyOptions&);
  for (Check c : {check_gradient_taylor, check_adjoint_identity, check_linearized_forward, check_material_derivative,
                  check_pdas_oracle, check_pdas_complementarity, check_manufactured_order, check_constant_solutions,
                  check_energy_decrease, check_gl_scaling, check_modica_mortola}) {
    try {
      r.checks.push_back(c(o));
    } catch (const Error& e) {
      VerifyCheck failed;
      failed.name = "check raised an error";
      failed.detail = e.what();
      r.checks.push_back(failed);
    }
  }
  return r;
}

void write_report(std::ostream& out, const VerifyReport& report) {
  out << std::setprecision(6);
  for (const VerifyCheck& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ": measured " << c.measured << ", threshold " << c.threshold;
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << '\n';
  }
}

}  // namespace pfinv
