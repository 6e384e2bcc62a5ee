#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsd/linalg.hpp"

namespace tsd {

class QpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// min_z 0.5 z'Gz + h'z  s.t.  Az <= b, with G positive semidefinite.
struct DenseQp {
  Mat G;
  Vec h;
  Mat A;
  Vec b;
};

struct DenseQpOptions {
  int max_iterations = 200;
  double tolerance = 1e-12;
  double tau = 0.995;
};

struct DenseQpResult {
  bool converged = false;
  Vec z;
  /// Row multipliers (>= 0) and slacks b - Az (>= 0).
  Vec u;
  Vec w;
  int iterations = 0;
  double residual = 0.0;
};

/// Mehrotra predictor-corrector primal-dual interior-point method.
DenseQpResult solve_dense_qp(const DenseQp& qp, const DenseQpOptions& opts = {});

/// min_p g'p + 0.5 p'Hp + pi * (sum_ineq [Jp+c]^+ + sum_eq |Jp+c|)  s.t. ||p||_inf <= radius.
struct L1Qp {
  Vec g;
  Mat H;
  Mat J;
  Vec c;
  double penalty = 10.0;
  std::optional<double> radius;
  /// Per constraint row; empty means all inequalities.
  std::vector<bool> equality;

  int n() const { return static_cast<int>(g.size()); }
  int m() const { return static_cast<int>(c.size()); }
  bool is_equality(int j) const { return !equality.empty() && equality[j]; }
  void validate() const;
  double violation(const Vec& p) const;
  double model(const Vec& p) const;
  double decrease(const Vec& p) const { return model(Vec::Zero(n())) - model(p); }
};

struct QpSolution {
  Vec p;
  /// Elastic variables: [Jp+c]^+ for inequalities, |Jp+c| for equalities.
  Vec t;
  /// In [0, pi] for inequalities, [-pi, pi] for equalities.
  Vec lambda;
  std::vector<int> active;
  double decrease = 0.0;
  /// Cauchy step returned because the QP iteration failed.
  bool fallback = false;
  bool convexified = false;
  double kkt_residual = 0.0;
  int iterations = 0;
  std::string message;
};

struct QpOptions {
  double tolerance = 1e-8;
  int prox_max_iterations = 100;
  double prox_step_tolerance = 1e-10;
  double delta_start = 1e-8;
  double delta_factor = 10.0;
  bool polish = true;
};

QpSolution solve_l1qp(const L1Qp& qp, const QpOptions& opts = {});
QpSolution cauchy_step(const L1Qp& qp);

/// Stationarity, complementarity and feasibility residual of a candidate
/// (p, lambda) for the l1 QP, box multipliers recovered from the sign pattern.
double l1qp_kkt_residual(const L1Qp& qp, const Vec& p, const Vec& lambda);

}  // namespace tsd
