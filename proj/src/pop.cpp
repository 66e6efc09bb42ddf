#include <algorithm>
#include <cmath>

#include "pfinv/errors.hpp"
#include "pfinv/pop.hpp"

namespace pfinv {

PopStepResult pop_step(const RelaxedObjective& objective, const NodalField& u, const ObjectiveEvaluation& current,
                       double tau, const Vector* pdas_guess) {
  if (!(tau > 0.0)) throw ValidationError("time step must be positive");
  if (current.misfit_gradient.size() != static_cast<Eigen::Index>(u.size())) {
    throw ValidationError("pop_step needs the objective gradient at u");
  }
  const ObjectiveParams& prm = objective.params();
  const Vector uv = to_vector(u);
  // Explicit load: misfit derivative and the concave part of the double well.
  const Vector g = current.misfit_gradient +
                   prm.alpha / prm.epsilon * (objective.mass().matrix * (Vector::Ones(uv.size()) - 2.0 * uv));
  PopStepResult step;
  step.problem.a = objective.lumped_mass().matrix + (2.0 * prm.alpha * prm.epsilon * tau) * objective.stiffness().matrix;
  step.problem.b = objective.lumped_mass().matrix * uv - tau * g;
  step.pdas = solve_pdas(step.problem, pdas_guess != nullptr ? pdas_guess : &uv);
  step.u = to_field(objective.mesh(), step.pdas.u);
  return step;
}

TriMesh adapt_mesh(const TriMesh& base, const TriMesh& current, const NodalField& u, int levels, double refine_frac,
                   double coarsen_frac) {
  require_bound(u, current, "adapt_mesh");
  TriMesh mesh = base;
  for (int level = 0; level < levels; ++level) {
    const NodalField ul = transfer_field(current, u, mesh);
    const AdaptationMarking marking = mark_by_gradient(mesh, ul, refine_frac, coarsen_frac);
    if (marking.refine_set.empty()) break;
    mesh = refine(mesh, marking);
  }
  return mesh;
}

namespace {

TraceRow make_row(const PopState& state, double step) {
  TraceRow row;
  row.iter = state.iter;
  row.time = state.t;
  row.cost = state.history.back();
  row.step = step;
  row.active_low = static_cast<int>(state.active_low.size());
  row.active_high = static_cast<int>(state.active_high.size());
  return row;
}

void fill_active_sets(PopState& state) {
  state.active_low.clear();
  state.active_high.clear();
  for (std::size_t i = 0; i < state.u.size(); ++i) {
    if (state.u[i] == 0.0) state.active_low.push_back(static_cast<int>(i));
    if (state.u[i] == 1.0) state.active_high.push_back(static_cast<int>(i));
  }
}

}  // namespace

PopResult run_pop(const PopOptions& options, std::shared_ptr<const TriMesh> mesh, const NodalField& u0,
                  const std::vector<MeasurementSource>& sources, const PopSnapshotHook& on_snapshot) {
  if (!mesh) throw ValidationError("run_pop: no mesh");
  if (sources.empty()) throw ValidationError("run_pop: no measurements");
  if (!(options.tol > 0.0) || options.max_iterations < 1) throw ValidationError("run_pop: invalid stopping parameters");
  require_bound(u0, *mesh, "run_pop initial guess");
  validate_phase_field(u0);

  ObjectiveParams params{options.alpha, options.epsilon, options.k, options.newton_tol};
  const std::shared_ptr<const TriMesh> base = mesh;
  auto objective = std::make_unique<RelaxedObjective>(*mesh, sample_measurements(*mesh, sources), params);

  const double tau0 = options.initial_tau();
  if (!(tau0 > 0.0)) throw ValidationError("run_pop: time step must be positive");
  const double tau_max = options.tau_max > 0.0 ? options.tau_max : tau0;
  double tau = tau0;

  PopResult result;
  PopState& state = result.state;
  state.u = u0;
  fill_active_sets(state);
  ObjectiveEvaluation eval = objective->evaluate(state.u, true);
  state.history.push_back(eval.cost);
  result.trace.push_back(make_row(state, 0.0));
  if (on_snapshot) on_snapshot(*mesh, state);

  int streak = 0;
  while (state.iter < options.max_iterations) {
    PopStepResult step = pop_step(*objective, state.u, eval, tau);
    const Vector du = step.pdas.u - to_vector(state.u);
    const double du_inf = du.size() > 0 ? du.lpNorm<Eigen::Infinity>() : 0.0;
    const double du_l2 = std::sqrt(std::max(0.0, du.dot(objective->mass().matrix * du)));
    ObjectiveEvaluation next = objective->evaluate(step.u, true, &eval.y);
    const MonitorDecision decision = energy_monitor(eval.cost, next.cost, du_l2, tau, streak, tau_max);
    if (!decision.accept) {
      ++result.rejected_steps;
      streak = 0;
      tau = decision.next_tau;
      if (tau < 1e-8 * tau0) {
        result.stop_reason = "time step underflow";
        break;
      }
      if (result.rejected_steps > options.max_rejections) {
        result.stop_reason = "too many rejected steps";
        break;
      }
      continue;
    }
    state.u = std::move(step.u);
    state.active_low = std::move(step.pdas.active_low);
    state.active_high = std::move(step.pdas.active_high);
    state.iter += 1;
    state.t += tau;
    state.history.push_back(next.cost);
    eval = std::move(next);
    result.trace.push_back(make_row(state, tau));
    ++streak;
    if (decision.next_tau > tau) streak = 0;
    tau = decision.next_tau;
    if (on_snapshot && options.snapshot_every > 0 && state.iter % options.snapshot_every == 0) on_snapshot(*mesh, state);

    if (du_inf <= options.tol) {
      result.converged = true;
      result.stop_reason = "converged";
      break;
    }
    if (options.adapt && options.adapt_every > 0 && state.iter % options.adapt_every == 0) {
      auto adapted = std::make_shared<const TriMesh>(adapt_mesh(*base, *mesh, state.u, options.adapt_levels,
                                                                options.refine_frac, options.coarsen_frac));
      state.u = transfer_field(*mesh, state.u, *adapted);
      for (double& v : state.u.values()) v = std::clamp(v, 0.0, 1.0);
      mesh = adapted;
      objective = std::make_unique<RelaxedObjective>(*mesh, sample_measurements(*mesh, sources), params);
      eval = objective->evaluate(state.u, true);
      fill_active_sets(state);
      result.adapt_iterations.push_back(state.iter);
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "iteration cap reached";
  result.mesh = mesh;
  return result;
}

}  // namespace pfinv
