#include <algorithm>
#include <cmath>
#include <set>

#include "pfinv/errors.hpp"
#include "pfinv/pop.hpp"

namespace pfinv {
namespace {

enum : char { kFree = 0, kLow = 1, kHigh = 2 };

}  // namespace

PdasResult solve_pdas(const PdasProblem& problem, const Vector* initial_guess, int max_iterations) {
  const SparseMatrix& a = problem.a;
  const Eigen::Index n = a.rows();
  if (a.cols() != n || problem.b.size() != n) throw ValidationError("PDAS: dimension mismatch");
  if (!(problem.lower < problem.upper)) throw ValidationError("PDAS: empty box");
  const double c = a.diagonal().mean();
  if (!(c > 0.0)) throw ValidationError("PDAS: operator must have a positive diagonal");

  Vector u = Vector::Constant(n, std::clamp(0.0, problem.lower, problem.upper));
  if (initial_guess != nullptr) {
    if (initial_guess->size() != n) throw ValidationError("PDAS: initial guess has wrong length");
    u = initial_guess->cwiseMax(problem.lower).cwiseMin(problem.upper);
  }
  Vector mu = problem.b - a * u;
  std::vector<char> state(static_cast<std::size_t>(n), kFree);
  auto predict = [&](const Vector& uu, const Vector& mm) {
    std::vector<char> s(static_cast<std::size_t>(n), kFree);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double trial = uu[i] + mm[i] / c;
      if (trial < problem.lower) s[static_cast<std::size_t>(i)] = kLow;
      else if (trial > problem.upper) s[static_cast<std::size_t>(i)] = kHigh;
    }
    return s;
  };
  state = predict(u, mu);

  std::set<std::vector<char>> seen;
  PdasResult result;
  std::vector<Eigen::Index> index(static_cast<std::size_t>(n));
  for (int it = 1; it <= max_iterations; ++it) {
    if (!seen.insert(state).second) throw SolverError("PDAS cycled between active sets");
    // Reduced system on the free nodes.
    std::vector<Eigen::Index> free_nodes;
    for (Eigen::Index i = 0; i < n; ++i) {
      const char s = state[static_cast<std::size_t>(i)];
      u[i] = s == kLow ? problem.lower : s == kHigh ? problem.upper : 0.0;
      if (s == kFree) {
        index[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(free_nodes.size());
        free_nodes.push_back(i);
      } else {
        index[static_cast<std::size_t>(i)] = -1;
      }
    }
    if (!free_nodes.empty()) {
      const Vector fixed_load = a * u;
      const auto m = static_cast<Eigen::Index>(free_nodes.size());
      Vector rhs(m);
      std::vector<Eigen::Triplet<double>> trip;
      for (Eigen::Index r = 0; r < m; ++r) rhs[r] = problem.b[free_nodes[static_cast<std::size_t>(r)]] -
                                                     fixed_load[free_nodes[static_cast<std::size_t>(r)]];
      for (Eigen::Index col = 0; col < n; ++col) {
        const Eigen::Index jc = index[static_cast<std::size_t>(col)];
        if (jc < 0) continue;
        for (SparseMatrix::InnerIterator itr(a, col); itr; ++itr) {
          const Eigen::Index ir = index[static_cast<std::size_t>(itr.row())];
          if (ir >= 0) trip.emplace_back(ir, jc, itr.value());
        }
      }
      SparseMatrix reduced(m, m);
      reduced.setFromTriplets(trip.begin(), trip.end());
      const Vector x = solve_spd(reduced, rhs);
      for (Eigen::Index r = 0; r < m; ++r) u[free_nodes[static_cast<std::size_t>(r)]] = x[r];
    }
    mu = problem.b - a * u;
    for (const Eigen::Index i : free_nodes) mu[i] = 0.0;
    const std::vector<char> next = predict(u, mu);
    result.iterations = it;
    if (next == state) {
      result.u = u;
      result.multiplier = mu;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (state[static_cast<std::size_t>(i)] == kLow) result.active_low.push_back(static_cast<int>(i));
        if (state[static_cast<std::size_t>(i)] == kHigh) result.active_high.push_back(static_cast<int>(i));
      }
      return result;
    }
    state = next;
  }
  throw SolverError("PDAS did not converge within " + std::to_string(max_iterations) + " iterations");
}

ComplementarityResidual complementarity(const PdasProblem& problem, const Vector& u) {
  const Vector r = problem.a * u - problem.b;
  ComplementarityResidual res;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    res.box = std::max({res.box, problem.lower - u[i], u[i] - problem.upper});
    if (u[i] == problem.lower) res.lower = std::max(res.lower, -r[i]);
    else if (u[i] == problem.upper) res.upper = std::max(res.upper, r[i]);
    else res.inactive = std::max(res.inactive, std::abs(r[i]));
  }
  return res;
}

MonitorDecision energy_monitor(const CostBreakdown& prev, const CostBreakdown& next, double du_norm, double tau,
                               int accept_streak, double tau_max, double slack) {
  MonitorDecision d;
  d.accept = next.total + du_norm * du_norm <= prev.total + slack;
  if (!d.accept) {
    d.next_tau = 0.5 * tau;
  } else if (accept_streak + 1 >= 5) {
    d.next_tau = std::min(1.2 * tau, std::max(tau_max, tau));
  } else {
    d.next_tau = tau;
  }
  return d;
}

}  // namespace pfinv
