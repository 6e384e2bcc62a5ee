#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tsd/model.hpp"
#include "tsd/qp.hpp"
#include "tsd/subsolver.hpp"
#include "tsd/worker_pool.hpp"

namespace tsd {

class MasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrustConstants {
  double eta1 = 0.1;
  double eta2 = 0.75;
  double gamma1 = 0.5;
  double gamma2 = 0.75;
  double gamma3 = 2.0;
  double radius_max = 1e3;

  /// 0 < eta1 <= eta2 < 1 and 0 < 1/gamma3 <= gamma1 <= gamma2 < 1 < gamma3.
  void validate() const;
};

struct MasterOptions {
  TrustConstants trust;
  double radius0 = 1.0;
  double penalty0 = 10.0;
  double c0 = 0.1;
  int max_iterations = 500;
  double radius_min = 1e-12;
  /// Spectrum of H clipped to [-cap, cap] when ||H||_F exceeds it.
  double hessian_cap = 1e8;
  SmoothingKind smoothing = SmoothingKind::Objective;
  QpOptions qp;
};

/// u = (x, s0, lambda0) plus penalty and trust radius.
struct MasterState {
  Vec x;
  Vec s0;
  Vec lambda0;
  double penalty = 10.0;
  double radius = 1.0;

  static MasterState initial(const TwoStageProblem& p, const Vec& x, const MasterOptions& opts);
};

/// Sum over subproblems of the smoothed values at one master point, reduced
/// in subproblem order.
struct StageEval {
  bool ok = false;
  /// First failing subproblem, -1 if none.
  int failed = -1;
  SolveStatus status = SolveStatus::Converged;
  std::string message;
  Vec x;
  double mu = 0.0;
  double value = 0.0;
  Vec gradient;
  Mat hessian;
  std::vector<SubproblemOutcome> outcomes;
  long newton_iterations = 0;
};

/// One warm-started subsolver per subproblem; evaluations fan out over the
/// pool.
class SubproblemSet {
 public:
  SubproblemSet(const TwoStageProblem& problem, const SubsolverOptions& opts, WorkerPool& pool);

  int size() const { return static_cast<int>(solvers_.size()); }
  Subsolver& solver(int i) { return *solvers_[i]; }
  const Subsolver& solver(int i) const { return *solvers_[i]; }
  const TwoStageProblem& problem() const { return *problem_; }
  WorkerPool& pool() { return *pool_; }
  void set_tolerance(double tol);

  /// Trial solves from the current warm states; warm states do not move.
  StageEval evaluate(const Vec& x, double mu, SmoothingKind kind);
  /// Advances every warm state to the solutions held by e.
  void accept(const StageEval& e);

  int solve_count() const;
  long newton_iterations() const;
  std::vector<long> newton_per_subproblem() const;

 private:
  const TwoStageProblem* problem_;
  WorkerPool* pool_;
  std::vector<std::unique_ptr<Subsolver>> solvers_;
};

struct MeritEval {
  double value = 0.0;
  double f0 = 0.0;
  double fhat = 0.0;
  double penalty_term = 0.0;
};

/// phi = f0 + sum fhat + pi * ||[c0]^+||_1
MeritEval merit(const TwoStageProblem& p, const Vec& x, double fhat, double penalty);

/// Stacked F0 = (grad f0 + sum grad fhat + J0' lambda0, c0 + s0, s0 o lambda0).
Vec master_kkt_residual(const TwoStageProblem& p, const Vec& x, const Vec& s0, const Vec& lambda0,
                        const Vec& fhat_gradient);
double theta0(const TwoStageProblem& p, const Vec& x, const Vec& s0, const Vec& lambda0,
              const Vec& fhat_gradient);
/// s0 = max(-c0(x), 0)
Vec master_slacks(const TwoStageProblem& p, const Vec& x);

/// pi <- max(2 pi, 1.1 |lambda|_inf) when pi < 1.1 |lambda|_inf.
double update_penalty(double penalty, const Vec& lambda);
/// New radius for a ratio rho (rho = -inf for failed trials).
double update_radius(double radius, double rho, const TrustConstants& t);
/// Clips the spectrum of H to [-cap, cap] if ||H||_F > cap.
void bound_hessian(Mat& H, double cap);

/// Master QP at x: g = grad f0 + G, H = hess f0 + sum lambda0_j hess c0_j + Hs.
L1Qp master_qp(const TwoStageProblem& p, const Vec& x, const Vec& lambda0, const Vec& G,
               const Mat& Hs, double penalty, std::optional<double> radius, double cap);

struct SqpRecord {
  int k = 0;
  double mu = 0.0;
  double phi = 0.0;
  double theta0 = 0.0;
  double radius = 0.0;
  double rho = 0.0;
  bool accepted = false;
  double penalty = 0.0;
  long newton_iterations = 0;
  double step_norm = 0.0;
  /// QP step; the trial point is x + p.
  Vec p;
  std::string note;
};

enum class MasterStatus { Converged, Stationary, IterationLimit, Degenerate, EvaluationFailed };
const char* to_string(MasterStatus s);

struct MasterResult {
  MasterStatus status = MasterStatus::EvaluationFailed;
  MasterState state;
  /// Evaluation at state.x; warm states match it.
  StageEval eval;
  int iterations = 0;
  double theta0 = 0.0;
  std::vector<SqpRecord> log;
  std::string message;
  /// Subproblem whose failures collapsed the radius, -1 if none.
  int failed_subproblem = -1;
  bool ok() const { return status == MasterStatus::Converged || status == MasterStatus::Stationary; }
};

/// Trust-region Sl1QP on the smoothed master problem at fixed mu.
class MasterSolver {
 public:
  MasterSolver(const TwoStageProblem& problem, SubproblemSet& subs, MasterOptions opts = {});

  const MasterOptions& options() const { return opts_; }

  /// Runs until theta0 <= c0 mu. If `current` holds an evaluation at
  /// state.x for this mu it is reused, otherwise the subproblems are solved
  /// first. `first_k` numbers the log records.
  MasterResult solve(MasterState state, double mu, std::optional<StageEval> current = std::nullopt,
                     int first_k = 0);

 private:
  const TwoStageProblem* problem_;
  SubproblemSet* subs_;
  MasterOptions opts_;
};

}  // namespace tsd
