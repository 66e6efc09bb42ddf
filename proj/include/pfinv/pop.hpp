#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pfinv/objective.hpp"

namespace pfinv {

/// min 1/2 v^T A v - b^T v subject to lower <= v <= upper.
struct PdasProblem {
  SparseMatrix a;
  Vector b;
  double lower = 0.0;
  double upper = 1.0;
};

struct PdasResult {
  Vector u;
  Vector multiplier;  // b - A u; zero on the inactive set
  std::vector<int> active_low;
  std::vector<int> active_high;
  int iterations = 0;
};

/// Primal-dual active set method. Starts from the sets predicted by the
/// initial guess (or from u = 0). Throws SolverError on a cycle or after
/// max_iterations set updates.
PdasResult solve_pdas(const PdasProblem& problem, const Vector* initial_guess = nullptr, int max_iterations = 100);

struct ComplementarityResidual {
  double inactive = 0.0;  // max |(A u - b)_i| over free nodes
  double lower = 0.0;     // max violation of (A u - b)_i >= 0 at the lower bound
  double upper = 0.0;     // max violation of (A u - b)_i <= 0 at the upper bound
  double box = 0.0;       // max bound violation
};
ComplementarityResidual complementarity(const PdasProblem& problem, const Vector& u);

struct MonitorDecision {
  bool accept = false;
  double next_tau = 0.0;
};

/// Accepts when next.total + du_norm^2 <= prev.total + slack. Rejection halves
/// tau; an acceptance streak of five grows tau by 1.2 up to tau_max.
MonitorDecision energy_monitor(const CostBreakdown& prev, const CostBreakdown& next, double du_norm, double tau,
                               int accept_streak, double tau_max, double slack = 0.0);

struct PopOptions {
  double alpha = 1e-4;
  double epsilon = 0.0397887357729738;  // 1/(8 pi)
  double tau = 0.0;                     // 0 selects tau_factor / epsilon
  double tau_factor = 0.01;
  double tau_max = 0.0;                 // 0 selects the initial tau
  double k = 0.1;
  double tol = 1e-4;
  int max_iterations = 5000;
  int max_rejections = 200;
  double newton_tol = 1e-10;
  bool adapt = false;
  int adapt_every = 50;
  int adapt_levels = 2;
  double refine_frac = 0.25;
  double coarsen_frac = 0.25;
  int snapshot_every = 0;

  double initial_tau() const { return tau > 0.0 ? tau : tau_factor / epsilon; }
};

struct PopState {
  NodalField u;
  int iter = 0;
  double t = 0.0;
  std::vector<CostBreakdown> history;
  std::vector<int> active_low;
  std::vector<int> active_high;
};

struct TraceRow {
  int iter = 0;
  double time = 0.0;
  CostBreakdown cost;
  double step = 0.0;
  int active_low = 0;
  int active_high = 0;
};

struct PopStepResult {
  NodalField u;
  PdasResult pdas;
  PdasProblem problem;
};

/// One semi-implicit step from u with the explicit load taken from `current`
/// (the evaluation of the objective at u with gradient).
PopStepResult pop_step(const RelaxedObjective& objective, const NodalField& u, const ObjectiveEvaluation& current,
                       double tau, const Vector* pdas_guess = nullptr);

struct PopResult {
  std::shared_ptr<const TriMesh> mesh;  // final mesh (changes when adapting)
  PopState state;
  std::vector<TraceRow> trace;
  bool converged = false;
  int rejected_steps = 0;
  std::vector<int> adapt_iterations;
  std::string stop_reason;
};

using PopSnapshotHook = std::function<void(const TriMesh&, const PopState&)>;

/// Algorithm driver: iterates pop_step with the energy monitor until
/// |u^n - u^{n-1}|_inf <= tol, adapting the mesh every adapt_every iterations.
PopResult run_pop(const PopOptions& options, std::shared_ptr<const TriMesh> mesh, const NodalField& u0,
                  const std::vector<MeasurementSource>& sources, const PopSnapshotHook& on_snapshot = nullptr);

/// Rebuilds an adapted mesh from `base`: each level transfers u, marks by the
/// gradient quantile and refines.
TriMesh adapt_mesh(const TriMesh& base, const TriMesh& current, const NodalField& u, int levels, double refine_frac,
                   double coarsen_frac);

}  // namespace pfinv
