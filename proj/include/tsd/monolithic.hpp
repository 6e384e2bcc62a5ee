#pragma once

#include <string>
#include <vector>

#include "tsd/model.hpp"

namespace tsd {

struct MonolithicOptions {
  double mu0 = 0.1;
  /// Barrier weight of the subproblem rows at the end: the smoothing mu.
  double mu_target = 1e-6;
  /// Master rows are driven further, to this barrier weight.
  double master_mu_floor = 1e-10;
  double cmu1 = 0.2;
  double cmu2 = 1.5;
  double kappa_eps = 10.0;
  /// Scaled KKT error at the final barrier weight.
  double tolerance = 1e-9;
  int max_iterations = 3000;
  double tau_min = 0.99;
};

struct MonolithicResult {
  bool converged = false;
  std::string message;
  Vec x;
  Vec lambda0;
  std::vector<Vec> y;
  std::vector<Vec> s;
  std::vector<Vec> lambda;
  /// f0(x) + sum f_i(y_i; P_i x)
  double objective = 0.0;
  double residual = 0.0;
  int iterations = 0;
  int inertia_corrections = 0;
};

/// Primal-dual interior-point solve of the undecomposed problem over
/// (x, y_1..y_N) with xt_i = P_i x eliminated. Subproblem rows carry the
/// barrier weight mu_target at the end, master rows master_mu_floor. The
/// Newton matrix has arrow structure and is factored by block elimination.
MonolithicResult solve_monolithic(const TwoStageProblem& problem, const Vec& x0,
                                  const std::vector<Vec>& y0, const MonolithicOptions& opts = {});
/// Subproblem starts from the subsolver's cold-start recipe at x0.
MonolithicResult solve_monolithic(const TwoStageProblem& problem, const Vec& x0,
                                  const MonolithicOptions& opts = {});

/// y_i from solving each subproblem at x0 and mu (cold start); the cold-start
/// point where a solve fails.
std::vector<Vec> subproblem_starts(const TwoStageProblem& problem, const Vec& x0, double mu);

}  // namespace tsd
