#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tsd/master.hpp"

namespace tsd {

/// w = (x, s0, lambda0, v_1..v_N).
struct FullPrimalDual {
  Vec x;
  Vec s0;
  Vec lambda0;
  std::vector<SubproblemState> v;

  bool positive() const;
};

struct CombinedResidual {
  /// grad f0 + J0' lambda0 - sum P_i' eta_i
  Vec stationarity;
  Vec primal0;
  /// max(min(s0, lambda0), -s0, -lambda0)
  Vec complementarity0;
  std::vector<KktResidual> sub;

  Vec stacked() const;
  double norm() const;
};

CombinedResidual combined_residual(const TwoStageProblem& p, const FullPrimalDual& w, double mu);
double theta(const TwoStageProblem& p, const FullPrimalDual& w, double mu);

/// Largest alpha in (0,1] with s + alpha ds >= (1-tau) s and lambda + alpha dlambda >= (1-tau) lambda.
double fraction_to_boundary(const Vec& s, const Vec& lambda, const Vec& ds, const Vec& dlambda,
                            double tau);

struct MuSchedule {
  double c0 = 0.1;
  double cmu1 = 0.2;
  double cmu2 = 1.5;
  double mu_tol = 1e-6;
  double tau_max = 0.995;

  /// min(cmu1 mu, mu^cmu2), floored at mu_tol.
  double next(double mu) const;
  /// Fraction-to-the-boundary parameter for a step to mu_next.
  double tau(double mu_next) const;
  void validate(double mu0) const;
};

struct ExtrapolationOptions {
  double penalty = 10.0;
  double radius = 1e3;
  double hessian_cap = 1e8;
  QpOptions qp;
  SubsolverOptions sub;
};

struct ExtrapolationStep {
  bool ok = false;
  std::string message;
  Vec dx;
  /// lambda0+ - lambda0
  Vec dlambda0;
  std::vector<Vec> dv;
  double alpha = 0.0;
  double penalty = 0.0;
  QpSolution qp;
  FullPrimalDual w;
};

/// Newton step on F^C(w; mu_next) by Schur complement: per-subproblem solves
/// with the factorizations of grad_v F_i, a master QP with the aggregated
/// gradient and Hessian, then the back-solves. `facts` may be empty or hold
/// factorizations at w.v to reuse.
ExtrapolationStep extrapolation_step(
    const TwoStageProblem& p, const FullPrimalDual& w, double mu_next, double tau,
    const ExtrapolationOptions& opts, WorkerPool& pool,
    std::vector<std::shared_ptr<const NewtonFactorization>> facts = {});

struct ExtrapolationRecord {
  int l = 0;
  double mu = 0.0;
  double mu_next = 0.0;
  double theta_before = 0.0;
  double theta_after = 0.0;
  double alpha = 0.0;
  bool accepted = false;
  /// Master point after the step.
  Vec x;
  /// Back-solves with grad_v F_i per subproblem (steps (a) and (c)).
  std::vector<int> backsolves;
  std::string note;
};

struct ExtrapolationLoopResult {
  FullPrimalDual w;
  double mu = 0.0;
  double penalty = 0.0;
  std::vector<ExtrapolationRecord> log;
  int accepted = 0;
  /// Set when a step could not be computed; w and mu are then unchanged
  /// from the last step taken.
  bool unavailable = false;
  std::string message;
};

/// Extrapolates while theta(w; mu) <= c0 mu and mu > mu_tol.
ExtrapolationLoopResult extrapolation_loop(
    const TwoStageProblem& p, FullPrimalDual w, double mu, const MuSchedule& sched,
    const ExtrapolationOptions& opts, WorkerPool& pool,
    std::vector<std::shared_ptr<const NewtonFactorization>> facts = {}, int first_l = 0);

/// Builds w from a converged master stage.
FullPrimalDual primal_dual_from(const TwoStageProblem& p, const MasterResult& r);

}  // namespace tsd
