#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsd/linalg.hpp"

namespace tsd {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// First-stage oracles: f0(x), c0(x) <= 0.
class MasterFunctions {
 public:
  virtual ~MasterFunctions() = default;
  virtual double objective(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
  virtual Mat hessian(const Vec& x) const = 0;
  virtual Vec constraints(const Vec& x) const = 0;
  /// m0 x n0
  virtual Mat jacobian(const Vec& x) const = 0;
  /// sum_j w_j * hess c0_j(x)
  virtual Mat constraint_hessian(const Vec& x, const Vec& w) const = 0;
};

/// Second-stage oracles in the joint variable z = (y, xt), where xt is the
/// local copy of the coupled master variables. Gradients have length n + nc,
/// Jacobians are m x (n + nc), Hessians are (n + nc) square and include the
/// cross blocks.
class SubproblemFunctions {
 public:
  virtual ~SubproblemFunctions() = default;
  virtual double objective(const Vec& y, const Vec& xt) const = 0;
  virtual Vec gradient(const Vec& y, const Vec& xt) const = 0;
  virtual Mat hessian(const Vec& y, const Vec& xt) const = 0;
  virtual Vec constraints(const Vec& y, const Vec& xt) const = 0;
  virtual Mat jacobian(const Vec& y, const Vec& xt) const = 0;
  virtual Mat constraint_hessian(const Vec& y, const Vec& xt, const Vec& w) const = 0;
};

/// Master oracles from plain callables. Constraint callables may be left empty
/// when m == 0.
struct CallableMaster final : MasterFunctions {
  int n = 0;
  int m = 0;
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;
  std::function<Vec(const Vec&)> c;
  std::function<Mat(const Vec&)> jac;
  std::function<Mat(const Vec&, const Vec&)> chess;

  double objective(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  Mat hessian(const Vec& x) const override;
  Vec constraints(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  Mat constraint_hessian(const Vec& x, const Vec& w) const override;
};

struct CallableSubproblem final : SubproblemFunctions {
  std::function<double(const Vec&, const Vec&)> f;
  std::function<Vec(const Vec&, const Vec&)> grad;
  std::function<Mat(const Vec&, const Vec&)> hess;
  std::function<Vec(const Vec&, const Vec&)> c;
  std::function<Mat(const Vec&, const Vec&)> jac;
  std::function<Mat(const Vec&, const Vec&, const Vec&)> chess;

  double objective(const Vec& y, const Vec& xt) const override { return f(y, xt); }
  Vec gradient(const Vec& y, const Vec& xt) const override { return grad(y, xt); }
  Mat hessian(const Vec& y, const Vec& xt) const override { return hess(y, xt); }
  Vec constraints(const Vec& y, const Vec& xt) const override { return c(y, xt); }
  Mat jacobian(const Vec& y, const Vec& xt) const override { return jac(y, xt); }
  Mat constraint_hessian(const Vec& y, const Vec& xt, const Vec& w) const override {
    return chess(y, xt, w);
  }
};

struct SubproblemDef {
  int n = 0;
  int m = 0;
  /// Master indices of the coupled variables; xt = x[projection].
  std::vector<int> projection;
  /// Declared box (may hold +-inf). Used for the cold start only; bounds that
  /// should be enforced must also appear in the constraint oracle.
  Vec lower;
  Vec upper;
  std::optional<Vec> y_start;
  std::shared_ptr<const SubproblemFunctions> fn;

  int nc() const { return static_cast<int>(projection.size()); }
  Vec project(const Vec& x) const;
  /// Adds a local nc-vector into the master-indexed vector g.
  void scatter_add(const Vec& local, Vec& g) const;
  void scatter_add(const Mat& local, Mat& H) const;
  void validate(int n0) const;
};

struct TwoStageProblem {
  int n0 = 0;
  int m0 = 0;
  std::shared_ptr<const MasterFunctions> master;
  std::vector<SubproblemDef> subproblems;

  int num_subproblems() const { return static_cast<int>(subproblems.size()); }
  void validate() const;
};

/// Primal-dual subproblem iterate v = (y, xt, s, lambda, eta).
struct SubproblemState {
  Vec y;
  Vec x_copy;
  Vec s;
  Vec lambda;
  Vec eta;

  int size() const {
    return static_cast<int>(y.size() + x_copy.size() + s.size() + lambda.size() + eta.size());
  }
  Vec pack() const;
  static SubproblemState unpack(const Vec& v, int n, int nc, int m);
  bool positive() const;
};

/// f_i(y; xt) - mu * sum ln s
double barrier_value(const SubproblemDef& def, const SubproblemState& st, double mu);

/// Undecomposed smoothed problem over z = (x, y_1..y_N, xt_1..xt_N, s_1..s_N).
class MonolithicProblem {
 public:
  MonolithicProblem(const TwoStageProblem& problem, double mu);

  int dim() const { return dim_; }
  int equality_count() const { return neq_; }
  int inequality_count() const { return problem_->m0; }
  double mu() const { return mu_; }
  const TwoStageProblem& problem() const { return *problem_; }

  double objective(const Vec& z) const;
  /// Stacked (c_i + s_i, xt_i - P_i x) for i = 1..N.
  Vec equality_residual(const Vec& z) const;
  Vec inequality(const Vec& z) const;

  Vec pack(const Vec& x, std::span<const SubproblemState> states) const;
  Vec master_part(const Vec& z) const { return z.head(problem_->n0); }
  Vec y_part(const Vec& z, int i) const;
  Vec copy_part(const Vec& z, int i) const;
  Vec slack_part(const Vec& z, int i) const;

 private:
  const TwoStageProblem* problem_;
  double mu_;
  int dim_ = 0;
  int neq_ = 0;
  std::vector<int> y_off_, xt_off_, s_off_;
};

MonolithicProblem assemble_monolithic(const TwoStageProblem& problem, double mu);

void symmetrize(Mat& H);

}  // namespace tsd
