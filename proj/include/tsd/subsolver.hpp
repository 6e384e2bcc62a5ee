#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsd/model.hpp"

namespace tsd {

enum class SolveStatus { Converged, NonConvergence, Degenerate };
enum class SmoothingKind { Objective, Solution };

const char* to_string(SolveStatus s);
const char* to_string(SmoothingKind k);

struct SubsolverOptions {
  double tolerance = 1e-9;
  int max_iterations = 500;
  double tau = 0.995;
  double beta_min = 1e-4;
  double armijo = 1e-4;
  /// Inertia-corrected steps with a barrier merit. When false the solver is a
  /// plain Newton method on F and follows whichever KKT point is nearby
  /// (used for tracing solution maps).
  bool seek_minimizer = true;
  double reg_start = 1e-8;
  double reg_factor = 10.0;
  double reg_max = 1e-2;
  double inertia_start = 1e-4;
  double inertia_factor = 4.0;
  double inertia_max = 1e10;
  int stagnation_window = 50;
  double stagnation_decrease = 1e-3;
  /// Solution smoothing: Hessian by central differences of the gradient.
  double fd_step_scale = 1e-5;
  double fd_tolerance = 1e-14;

  static double tolerance_for(double mu, double c0);
};

struct KktResidual {
  Vec stationarity_y;
  Vec stationarity_x;
  Vec complementarity;
  Vec primal;
  Vec copy;

  Vec stacked() const;
  double norm() const;
};

KktResidual kkt_residual(const SubproblemDef& def, const SubproblemState& st, const Vec& x,
                         double mu);

/// Block elimination of the primal-dual Jacobian of F at a fixed iterate.
/// Only the n x n reduced Hessian is factored; solves with any right-hand
/// side stacked like F are then cheap.
class NewtonFactorization {
 public:
  NewtonFactorization(const SubproblemDef& def, const SubproblemState& st, double delta);

  bool singular() const { return singular_; }
  double delta() const { return delta_; }
  int n() const { return n_; }
  int nc() const { return nc_; }
  int m() const { return m_; }
  int dim() const { return n_ + 2 * nc_ + 2 * m_; }

  /// Solves dF * d = rhs.
  Vec solve(const Vec& rhs) const;
  /// Solves dF * d = (0, 0, 0, 0, b5): the response to moving the copy target.
  Vec solve_copy(const Vec& b5) const;
  /// dv/dxt, one column per coupled variable.
  Mat copy_sensitivity() const;
  /// M_xx - M_xy M_yy^{-1} M_yx, i.e. -d eta / d xt.
  Mat schur_hessian() const;
  const Mat& reduced() const { return M_; }
  Mat reduced_hessian() const { return M_.topLeftCorner(n_, n_); }

 private:
  int n_, nc_, m_;
  double delta_;
  bool singular_ = false;
  Mat M_;
  Mat J_;
  Vec s_, lambda_;
  Eigen::PartialPivLU<Mat> lu_;
};

struct NewtonStep {
  Vec dv;
  std::shared_ptr<const NewtonFactorization> factorization;
};

/// Newton step on F with the singularity regularization policy. Returns
/// nullopt when the matrix stays singular at the regularization cap.
std::optional<NewtonStep> newton_step(const SubproblemDef& def, const SubproblemState& st,
                                      const Vec& x, double mu, const SubsolverOptions& opts = {});

enum class LineSearchMerit { Residual, Barrier };

struct LineSearchResult {
  double beta = 1.0;
  /// Step for (lambda, eta). Differs from beta only with the barrier merit,
  /// where the dual step is capped by fraction-to-boundary alone.
  double beta_dual = 1.0;
  bool separate = false;
  bool armijo = true;
  int trials = 0;
};

/// Backtracking by halving from min(1, fraction-to-boundary cap).
LineSearchResult line_search(const SubproblemDef& def, const SubproblemState& st, const Vec& dv,
                             const Vec& x, double mu, const SubsolverOptions& opts = {},
                             LineSearchMerit merit = LineSearchMerit::Residual, double nu = 0.0);

SubproblemState cold_start(const SubproblemDef& def, const Vec& x, double mu);

struct SolveResult {
  SolveStatus status = SolveStatus::NonConvergence;
  SubproblemState state;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
  std::vector<double> step_history;
  std::string message;
};

SolveResult solve_subproblem(const SubproblemDef& def, const Vec& x, double mu,
                             const std::optional<SubproblemState>& warm,
                             const SubsolverOptions& opts = {});

struct SmoothedEval {
  SmoothingKind kind = SmoothingKind::Objective;
  double value = 0.0;
  /// Local (length nc) gradient and Hessian; scatter with SubproblemDef.
  Vec gradient;
  Mat hessian;
  std::shared_ptr<const NewtonFactorization> factorization;
};

struct SubproblemOutcome {
  SolveStatus status = SolveStatus::NonConvergence;
  SolveResult solve;
  std::optional<SmoothedEval> eval;
  /// Newton iterations spent, including re-solves for finite differences.
  int newton_iterations = 0;
  std::string message;
  bool ok() const { return status == SolveStatus::Converged && eval.has_value(); }
};

/// Factorization of dF at a converged state, regularized only if singular.
std::shared_ptr<const NewtonFactorization> factor_at(const SubproblemDef& def,
                                                     const SubproblemState& st,
                                                     const SubsolverOptions& opts = {});

SubproblemOutcome evaluate_smoothed(const SubproblemDef& def, const Vec& x, double mu,
                                    const std::optional<SubproblemState>& warm, SmoothingKind kind,
                                    const SubsolverOptions& opts = {});

/// Dense grad_v F at st, rows (stationarity, complementarity, primal, copy)
/// and columns (y, xt, s, lambda, eta).
Mat dense_subproblem_jacobian(const SubproblemDef& def, const SubproblemState& st);

struct NondegeneracyReport {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  /// Smallest eigenvalue of the (symmetric) reduced Hessian, signed.
  double lambda_min = 0.0;
  bool nondegenerate = false;
};

NondegeneracyReport check_nondegeneracy(const SubproblemDef& def, const SubproblemState& st,
                                        const Vec& x);

/// One instance per subproblem: owns the warm-start state and counters.
/// Not reentrant.
class Subsolver {
 public:
  explicit Subsolver(const SubproblemDef& def, SubsolverOptions opts = {});

  const SubproblemDef& def() const { return *def_; }
  SubsolverOptions& options() { return opts_; }
  const SubsolverOptions& options() const { return opts_; }

  bool has_warm_state() const { return warm_.has_value(); }
  const SubproblemState& warm_state() const { return *warm_; }
  void set_warm_state(SubproblemState st) { warm_ = std::move(st); }
  void clear_warm_state() { warm_.reset(); }

  /// Solves from the warm state (cold start if none); does not move it.
  SubproblemOutcome trial(const Vec& x, double mu, SmoothingKind kind);
  void accept(const SubproblemOutcome& outcome);

  int solve_count() const { return solves_; }
  long newton_iterations() const { return newton_; }
  void reset_counters() {
    solves_ = 0;
    newton_ = 0;
  }

 private:
  const SubproblemDef* def_;
  SubsolverOptions opts_;
  std::optional<SubproblemState> warm_;
  int solves_ = 0;
  long newton_ = 0;
};

}  // namespace tsd
