#include "tsd/master.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tsd {

void TrustConstants::validate() const {
  if (!(0.0 < eta1 && eta1 <= eta2 && eta2 < 1.0))
    throw MasterError("trust constants must satisfy 0 < eta1 <= eta2 < 1");
  if (!(gamma3 > 1.0 && 1.0 / gamma3 <= gamma1 && gamma1 <= gamma2 && gamma2 < 1.0))
    throw MasterError("trust constants must satisfy 0 < 1/gamma3 <= gamma1 <= gamma2 < 1 < gamma3");
  if (!(radius_max > 0.0)) throw MasterError("maximum trust radius must be positive");
}

const char* to_string(MasterStatus s) {
  switch (s) {
    case MasterStatus::Converged: return "converged";
    case MasterStatus::Stationary: return "stationary";
    case MasterStatus::IterationLimit: return "iteration limit";
    case MasterStatus::Degenerate: return "degenerate";
    case MasterStatus::EvaluationFailed: return "evaluation failed";
  }
  return "?";
}

Vec master_slacks(const TwoStageProblem& p, const Vec& x) {
  if (p.m0 == 0) return Vec(0);
  return (-p.master->constraints(x)).cwiseMax(0.0);
}

MasterState MasterState::initial(const TwoStageProblem& p, const Vec& x,
                                 const MasterOptions& opts) {
  MasterState st;
  st.x = x;
  st.s0 = master_slacks(p, x);
  st.lambda0 = Vec::Zero(p.m0);
  st.penalty = opts.penalty0;
  st.radius = std::min(opts.radius0, opts.trust.radius_max);
  return st;
}

// ---------------------------------------------------------------- subproblems

SubproblemSet::SubproblemSet(const TwoStageProblem& problem, const SubsolverOptions& opts,
                             WorkerPool& pool)
    : problem_(&problem), pool_(&pool) {
  for (const auto& d : problem.subproblems) solvers_.push_back(std::make_unique<Subsolver>(d, opts));
}

void SubproblemSet::set_tolerance(double tol) {
  for (auto& s : solvers_) s->options().tolerance = tol;
}

StageEval SubproblemSet::evaluate(const Vec& x, double mu, SmoothingKind kind) {
  const int N = size(), n0 = problem_->n0;
  StageEval e;
  e.x = x;
  e.mu = mu;
  e.outcomes.resize(N);
  pool_->parallel_for(N, [&](int i) { e.outcomes[i] = solvers_[i]->trial(x, mu, kind); });
  e.gradient = Vec::Zero(n0);
  e.hessian = Mat::Zero(n0, n0);
  e.ok = true;
  for (int i = 0; i < N; ++i) {
    const SubproblemOutcome& o = e.outcomes[i];
    e.newton_iterations += o.newton_iterations;
    if (!o.ok()) {
      if (e.ok) {
        e.ok = false;
        e.failed = i;
        e.status = o.status;
        e.message = "subproblem " + std::to_string(i) + ": " + o.message;
      }
      continue;
    }
    const auto& d = problem_->subproblems[i];
    e.value += o.eval->value;
    d.scatter_add(o.eval->gradient, e.gradient);
    d.scatter_add(o.eval->hessian, e.hessian);
  }
  return e;
}

void SubproblemSet::accept(const StageEval& e) {
  for (int i = 0; i < size(); ++i) solvers_[i]->accept(e.outcomes[i]);
}

int SubproblemSet::solve_count() const {
  int c = 0;
  for (const auto& s : solvers_) c += s->solve_count();
  return c;
}

long SubproblemSet::newton_iterations() const {
  long c = 0;
  for (const auto& s : solvers_) c += s->newton_iterations();
  return c;
}

std::vector<long> SubproblemSet::newton_per_subproblem() const {
  std::vector<long> v;
  for (const auto& s : solvers_) v.push_back(s->newton_iterations());
  return v;
}

// ---------------------------------------------------------------- measures

MeritEval merit(const TwoStageProblem& p, const Vec& x, double fhat, double penalty) {
  MeritEval m;
  m.f0 = p.master->objective(x);
  m.fhat = fhat;
  if (p.m0) m.penalty_term = penalty * p.master->constraints(x).cwiseMax(0.0).sum();
  m.value = m.f0 + m.fhat + m.penalty_term;
  return m;
}

Vec master_kkt_residual(const TwoStageProblem& p, const Vec& x, const Vec& s0, const Vec& lambda0,
                        const Vec& fhat_gradient) {
  Vec stat = p.master->gradient(x) + fhat_gradient;
  Vec r(p.n0 + 2 * p.m0);
  if (p.m0) {
    stat.noalias() += p.master->jacobian(x).transpose() * lambda0;
    r << stat, p.master->constraints(x) + s0, s0.cwiseProduct(lambda0);
  } else {
    r = stat;
  }
  return r;
}

double theta0(const TwoStageProblem& p, const Vec& x, const Vec& s0, const Vec& lambda0,
              const Vec& fhat_gradient) {
  return master_kkt_residual(p, x, s0, lambda0, fhat_gradient).lpNorm<Eigen::Infinity>();
}

double update_penalty(double penalty, const Vec& lambda) {
  const double need = 1.1 * (lambda.size() ? lambda.lpNorm<Eigen::Infinity>() : 0.0);
  return penalty < need ? std::max(2.0 * penalty, need) : penalty;
}

double update_radius(double radius, double rho, const TrustConstants& t) {
  if (rho >= t.eta2) return std::min(t.gamma3 * radius, t.radius_max);
  if (rho >= t.eta1) return std::min(t.gamma2 * radius, t.radius_max);
  return t.gamma1 * radius;
}

void bound_hessian(Mat& H, double cap) {
  if (!(H.norm() > cap)) return;
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  const Vec ev = es.eigenvalues().cwiseMax(-cap).cwiseMin(cap);
  H = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  symmetrize(H);
}

L1Qp master_qp(const TwoStageProblem& p, const Vec& x, const Vec& lambda0, const Vec& G,
               const Mat& Hs, double penalty, std::optional<double> radius, double cap) {
  L1Qp q;
  q.g = p.master->gradient(x) + G;
  q.H = p.master->hessian(x) + Hs;
  if (p.m0) {
    q.H += p.master->constraint_hessian(x, lambda0);
    q.J = p.master->jacobian(x);
    q.c = p.master->constraints(x);
  } else {
    q.J.resize(0, p.n0);
    q.c.resize(0);
  }
  symmetrize(q.H);
  bound_hessian(q.H, cap);
  q.penalty = penalty;
  q.radius = radius;
  return q;
}

// ---------------------------------------------------------------- solver

MasterSolver::MasterSolver(const TwoStageProblem& problem, SubproblemSet& subs, MasterOptions opts)
    : problem_(&problem), subs_(&subs), opts_(opts) {
  opts_.trust.validate();
}

MasterResult MasterSolver::solve(MasterState state, double mu, std::optional<StageEval> current,
                                 int first_k) {
  const TwoStageProblem& P = *problem_;
  const TrustConstants& T = opts_.trust;
  MasterResult res;
  if (!(mu > 0.0)) throw MasterError("smoothing parameter must be positive");

  if (!current || current->mu != mu || current->x != state.x || !current->ok) {
    current = subs_->evaluate(state.x, mu, opts_.smoothing);
    if (!current->ok) {
      res.status = MasterStatus::EvaluationFailed;
      res.state = state;
      res.eval = std::move(*current);
      res.message = "subproblem evaluation failed at the starting point: " + res.eval.message;
      return res;
    }
  }
  subs_->accept(*current);
  state.s0 = master_slacks(P, state.x);
  const double target = opts_.c0 * mu;
  int last_failed = -1;

  for (int k = 0;; ++k) {
    SqpRecord rec;
    rec.k = first_k + k;
    rec.mu = mu;

    // QP at the current iterate, re-solved while the penalty grows
    L1Qp q;
    QpSolution sol;
    for (int r = 0; r < 8; ++r) {
      q = master_qp(P, state.x, state.lambda0, current->gradient, current->hessian, state.penalty,
                    state.radius, opts_.hessian_cap);
      sol = solve_l1qp(q, opts_.qp);
      const double np = update_penalty(state.penalty, sol.lambda);
      if (np == state.penalty) break;
      state.penalty = np;
      rec.note = "penalty";
    }
    const MeritEval phi = merit(P, state.x, current->value, state.penalty);
    const double th = theta0(P, state.x, state.s0, sol.lambda, current->gradient);
    rec.phi = phi.value;
    rec.theta0 = th;
    rec.penalty = state.penalty;
    rec.radius = state.radius;
    res.iterations = k;
    res.theta0 = th;

    auto finish = [&](MasterStatus s, std::string msg) {
      state.lambda0 = sol.lambda;
      res.status = s;
      res.state = state;
      res.eval = std::move(*current);
      res.message = std::move(msg);
      res.log.push_back(rec);
      return res;
    };

    if (th <= target) return finish(MasterStatus::Converged, "");
    const double pn = sol.p.lpNorm<Eigen::Infinity>();
    const double pred = q.decrease(sol.p);
    const double eps = 1e-15 * (1.0 + std::abs(phi.value));
    if (pn == 0.0 || pred <= eps) return finish(MasterStatus::Stationary, "QP step is zero");
    if (k >= opts_.max_iterations)
      return finish(MasterStatus::IterationLimit, "SQP iteration limit reached");

    const Vec xt = state.x + sol.p;
    StageEval trial = subs_->evaluate(xt, mu, opts_.smoothing);
    rec.newton_iterations = trial.newton_iterations;
    rec.step_norm = pn;
    rec.p = sol.p;
    double rho = -std::numeric_limits<double>::infinity();
    if (trial.ok) {
      const MeritEval phit = merit(P, xt, trial.value, state.penalty);
      const double ared = phi.value - phit.value;
      rho = (ared + eps) / (pred + eps);
      last_failed = -1;
    } else {
      last_failed = trial.failed;
      rec.note = trial.message;
    }
    rec.rho = rho;
    if (rho >= T.eta1) {
      rec.accepted = true;
      state.x = xt;
      state.lambda0 = sol.lambda;
      state.s0 = master_slacks(P, state.x);
      subs_->accept(trial);
      current = std::move(trial);
    }
    state.radius = update_radius(state.radius, rho, T);
    res.log.push_back(rec);
    if (state.radius < opts_.radius_min) {
      res.status = last_failed >= 0 ? MasterStatus::Degenerate : MasterStatus::Stationary;
      res.state = state;
      res.eval = std::move(*current);
      res.theta0 = th;
      res.failed_subproblem = last_failed;
      res.message = last_failed >= 0
                        ? "trust radius collapsed on failing subproblem " + std::to_string(last_failed)
                        : "trust radius collapsed";
      return res;
    }
  }
}

}  // namespace tsd
