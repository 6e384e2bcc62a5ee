#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tsd/extrapolation.hpp"

namespace tsd {

struct DenseNewtonStep {
  bool ok = false;
  Vec dx;
  Vec dlambda0;
  std::vector<Vec> dv;
};

/// Newton step on the full primal-dual system for mu_next with the master
/// constraints in `active` held as equalities and the rest released
/// (lambda0_j -> 0), assembled and solved as one dense system.
DenseNewtonStep dense_extrapolation_step(const TwoStageProblem& p, const FullPrimalDual& w,
                                         double mu_next, const std::vector<int>& active);

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  bool quick = false;
  int threads = 4;
};

std::vector<int> criterion_ids();
CriterionResult run_criterion(int id, const AcceptanceOptions& opts = {});
/// "PASS C01 name: detail"
std::string format_result(const CriterionResult& r);

}  // namespace tsd
