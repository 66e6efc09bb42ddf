#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pfinv/pop.hpp"

namespace pfinv {

struct VerifyCheck {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  /// Scales the assembled gradient by 1.1 before the Taylor test; the check
  /// must then fail with a first-order remainder.
  bool corrupt_gradient = false;
  double h = 0.1;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_passed() const;
};

/// Remainder |J(u+s t) - J(u-s t) - 2 s J'(u) t| over s = 1e-1..1e-4 on five
/// random pairs; the reported slope is the smallest of the five.
VerifyCheck check_gradient_taylor(const VerifyOptions& options);
/// Largest relative gap between (y - y_meas, S'[t])_{dOmega} and (J'_misfit, t).
VerifyCheck check_adjoint_identity(const VerifyOptions& options);
/// |S(u+s t) - S(u) - s S'[t]|_{H1} slope.
VerifyCheck check_linearized_forward(const VerifyOptions& options);
/// Moving-mesh state against the material derivative, H1 slope.
VerifyCheck check_material_derivative(const VerifyOptions& options);
/// PDAS against projected gradient on 20 random problems (max deviation).
VerifyCheck check_pdas_oracle(const VerifyOptions& options);
/// Largest complementarity residual of the same problems relative to |b|.
VerifyCheck check_pdas_complementarity(const VerifyOptions& options);
/// L2 order of the manufactured solution cos(pi x) cos(pi y), worst of three halvings.
VerifyCheck check_manufactured_order(const VerifyOptions& options);
/// max |y - 1| for f = 1 and |y - 2| for f = 8.
VerifyCheck check_constant_solutions(const VerifyOptions& options);
/// Count of increases of the accepted cost in a short POP run.
VerifyCheck check_energy_decrease(const VerifyOptions& options);
/// Ginzburg-Landau terms against the eps scaling laws.
VerifyCheck check_gl_scaling(const VerifyOptions& options);
/// Relative gap between the GL energy of the optimal profile across a straight
/// interface on an adapted mesh and alpha (pi/4) length, eps = 1/(16 pi).
VerifyCheck check_modica_mortola(const VerifyOptions& options);

/// Projected gradient iteration with step 1/lambda_max run to a fixed point.
Vector projected_gradient_box(const PdasProblem& problem, int max_iterations = 200000);

/// Numerical value of 2 int_0^1 sqrt(s(1-s)) ds by composite Gauss-Legendre
/// quadrature after the substitution s = sin^2(theta).
double modica_mortola_quadrature();

/// Runs every check.
VerifyReport run_verification(const VerifyOptions& options);
void write_report(std::ostream& out, const VerifyReport& report);

}  // namespace pfinv
