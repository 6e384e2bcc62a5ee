#include "tsd/model.hpp"

#include <cmath>
#include <set>
#include <string>

namespace tsd {

double CallableMaster::objective(const Vec& x) const { return f ? f(x) : 0.0; }
Vec CallableMaster::gradient(const Vec& x) const { return grad ? grad(x) : Vec::Zero(n); }
Mat CallableMaster::hessian(const Vec& x) const { return hess ? hess(x) : Mat::Zero(n, n); }
Vec CallableMaster::constraints(const Vec& x) const { return m ? c(x) : Vec(0); }
Mat CallableMaster::jacobian(const Vec& x) const { return m ? jac(x) : Mat(0, n); }
Mat CallableMaster::constraint_hessian(const Vec& x, const Vec& w) const {
  return (m && chess) ? chess(x, w) : Mat::Zero(n, n);
}

Vec SubproblemDef::project(const Vec& x) const {
  Vec xt(nc());
  for (int k = 0; k < nc(); ++k) xt[k] = x[projection[k]];
  return xt;
}

void SubproblemDef::scatter_add(const Vec& local, Vec& g) const {
  for (int k = 0; k < nc(); ++k) g[projection[k]] += local[k];
}

void SubproblemDef::scatter_add(const Mat& local, Mat& H) const {
  for (int a = 0; a < nc(); ++a)
    for (int b = 0; b < nc(); ++b) H(projection[a], projection[b]) += local(a, b);
}

void SubproblemDef::validate(int n0) const {
  if (n < 1) throw ModelError("subproblem must have at least one variable");
  if (m < 0) throw ModelError("negative constraint count");
  if (!fn) throw ModelError("subproblem has no oracle");
  if (nc() > n0) throw ModelError("more coupled variables than master variables");
  std::set<int> seen;
  for (int p : projection) {
    if (p < 0 || p >= n0) throw ModelError("projection index out of range: " + std::to_string(p));
    if (!seen.insert(p).second)
      throw ModelError("projection selects index " + std::to_string(p) + " twice");
  }
  if (lower.size() != n || upper.size() != n) throw ModelError("box bounds must have length n");
  if (y_start && y_start->size() != n) throw ModelError("y_start must have length n");
}

void TwoStageProblem::validate() const {
  if (n0 < 1) throw ModelError("master dimension must be positive");
  if (!master) throw ModelError("master oracle missing");
  for (const auto& d : subproblems) d.validate(n0);
}

Vec SubproblemState::pack() const {
  Vec v(size());
  v << y, x_copy, s, lambda, eta;
  return v;
}

SubproblemState SubproblemState::unpack(const Vec& v, int n, int nc, int m) {
  SubproblemState st;
  int o = 0;
  st.y = v.segment(o, n);
  o += n;
  st.x_copy = v.segment(o, nc);
  o += nc;
  st.s = v.segment(o, m);
  o += m;
  st.lambda = v.segment(o, m);
  o += m;
  st.eta = v.segment(o, nc);
  return st;
}

bool SubproblemState::positive() const {
  return (s.array() > 0.0).all() && (lambda.array() > 0.0).all();
}

double barrier_value(const SubproblemDef& def, const SubproblemState& st, double mu) {
  double logsum = 0.0;
  for (Eigen::Index j = 0; j < st.s.size(); ++j) logsum += std::log(st.s[j]);
  return def.fn->objective(st.y, st.x_copy) - mu * logsum;
}

MonolithicProblem::MonolithicProblem(const TwoStageProblem& problem, double mu)
    : problem_(&problem), mu_(mu) {
  const int N = problem.num_subproblems();
  int o = problem.n0;
  y_off_.resize(N);
  xt_off_.resize(N);
  s_off_.resize(N);
  for (int i = 0; i < N; ++i) {
    y_off_[i] = o;
    o += problem.subproblems[i].n;
  }
  for (int i = 0; i < N; ++i) {
    xt_off_[i] = o;
    o += problem.subproblems[i].nc();
  }
  for (int i = 0; i < N; ++i) {
    s_off_[i] = o;
    o += problem.subproblems[i].m;
    neq_ += problem.subproblems[i].m + problem.subproblems[i].nc();
  }
  dim_ = o;
}

Vec MonolithicProblem::y_part(const Vec& z, int i) const {
  return z.segment(y_off_[i], problem_->subproblems[i].n);
}
Vec MonolithicProblem::copy_part(const Vec& z, int i) const {
  return z.segment(xt_off_[i], problem_->subproblems[i].nc());
}
Vec MonolithicProblem::slack_part(const Vec& z, int i) const {
  return z.segment(s_off_[i], problem_->subproblems[i].m);
}

double MonolithicProblem::objective(const Vec& z) const {
  double total = problem_->master->objective(master_part(z));
  for (int i = 0; i < problem_->num_subproblems(); ++i) {
    SubproblemState st;
    st.y = y_part(z, i);
    st.x_copy = copy_part(z, i);
    st.s = slack_part(z, i);
    total += barrier_value(problem_->subproblems[i], st, mu_);
  }
  return total;
}

Vec MonolithicProblem::equality_residual(const Vec& z) const {
  Vec r(neq_);
  const Vec x = master_part(z);
  int o = 0;
  for (int i = 0; i < problem_->num_subproblems(); ++i) {
    const auto& d = problem_->subproblems[i];
    const Vec y = y_part(z, i), xt = copy_part(z, i);
    r.segment(o, d.m) = d.fn->constraints(y, xt) + slack_part(z, i);
    o += d.m;
    r.segment(o, d.nc()) = xt - d.project(x);
    o += d.nc();
  }
  return r;
}

Vec MonolithicProblem::inequality(const Vec& z) const {
  return problem_->master->constraints(master_part(z));
}

Vec MonolithicProblem::pack(const Vec& x, std::span<const SubproblemState> states) const {
  Vec z(dim_);
  z.head(problem_->n0) = x;
  for (int i = 0; i < problem_->num_subproblems(); ++i) {
    const auto& d = problem_->subproblems[i];
    z.segment(y_off_[i], d.n) = states[i].y;
    z.segment(xt_off_[i], d.nc()) = states[i].x_copy;
    z.segment(s_off_[i], d.m) = states[i].s;
  }
  return z;
}

MonolithicProblem assemble_monolithic(const TwoStageProblem& problem, double mu) {
  if (!(mu > 0.0)) throw ModelError("barrier parameter must be positive");
  return MonolithicProblem(problem, mu);
}

void symmetrize(Mat& H) { H = 0.5 * (H + H.transpose()).eval(); }

}  // namespace tsd
