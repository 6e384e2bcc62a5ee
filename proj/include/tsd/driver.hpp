#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsd/extrapolation.hpp"
#include "tsd/master.hpp"

namespace tsd {

class DriverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DriverConfig {
  double mu0 = 0.1;
  MuSchedule schedule;
  int threads = 1;
  SmoothingKind smoothing = SmoothingKind::Objective;
  bool extrapolation = true;
  MasterOptions master;
  SubsolverOptions sub;
  QpOptions qp;
  bool presolve = true;
  int max_stages = 200;

  void validate() const;
};

struct StageRecord {
  int stage = 0;
  double mu = 0.0;
  MasterStatus status = MasterStatus::Converged;
  int sqp_iterations = 0;
  double theta0 = 0.0;
  long newton_iterations = 0;
  /// Extrapolation steps after this stage, and how many passed the guard.
  int extrapolation_steps = 0;
  int extrapolation_accepted = 0;
  double mu_after = 0.0;
};

struct RunReport {
  bool ok = false;
  std::string message;
  /// Stage that failed, -1 if none.
  int failed_stage = -1;
  int failed_subproblem = -1;
  std::optional<NondegeneracyReport> degeneracy;

  Vec x;
  Vec lambda0;
  std::vector<SubproblemState> states;
  /// f0(x) + sum f_i(y_i; xt_i), no barrier terms.
  double objective = 0.0;
  double theta0 = 0.0;
  double mu = 0.0;

  std::vector<StageRecord> stages;
  std::vector<SqpRecord> sqp_log;
  std::vector<ExtrapolationRecord> extrapolation_log;

  int sqp_iterations = 0;
  long newton_iterations = 0;
  std::vector<long> newton_per_subproblem;
  int solve_count = 0;
  int extrapolation_accepted = 0;
  double wall_seconds = 0.0;
};

/// Solves the master problem alone (subproblem terms dropped) from x0.
/// Falls back to x0 with zero multipliers if that fails.
MasterState presolve(const TwoStageProblem& problem, const Vec& x0,
                     const MasterOptions& opts = {}, std::string* warning = nullptr);

/// Smoothing stages from mu0 down to mu_tol.
RunReport run(const TwoStageProblem& problem, const DriverConfig& config, const Vec& x0);

/// Unbarriered objective at x and the subproblem primal points.
double two_stage_objective(const TwoStageProblem& problem, const Vec& x,
                           const std::vector<SubproblemState>& states);

std::string report_to_json(const RunReport& r, const DriverConfig& config);
void write_sqp_log_csv(std::ostream& os, const std::vector<SqpRecord>& log);
void write_extrapolation_log_csv(std::ostream& os, const std::vector<ExtrapolationRecord>& log);

}  // namespace tsd
