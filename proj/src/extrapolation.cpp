#include "tsd/extrapolation.hpp"

#include <algorithm>
#include <cmath>

#include "tsd/kernels.hpp"

namespace tsd {

bool FullPrimalDual::positive() const {
  for (const auto& s : v)
    if (!s.positive()) return false;
  return true;
}

Vec CombinedResidual::stacked() const {
  Eigen::Index n = stationarity.size() + primal0.size() + complementarity0.size();
  for (const auto& r : sub) n += r.stacked().size();
  Vec out(n);
  Eigen::Index o = 0;
  auto put = [&](const Vec& b) {
    out.segment(o, b.size()) = b;
    o += b.size();
  };
  put(stationarity);
  put(primal0);
  put(complementarity0);
  for (const auto& r : sub) put(r.stacked());
  return out;
}

double CombinedResidual::norm() const { return kernels::inf_norm(view(stacked())); }

CombinedResidual combined_residual(const TwoStageProblem& p, const FullPrimalDual& w, double mu) {
  CombinedResidual r;
  r.stationarity = p.master->gradient(w.x);
  if (p.m0) {
    r.stationarity.noalias() += p.master->jacobian(w.x).transpose() * w.lambda0;
    r.primal0 = p.master->constraints(w.x) + w.s0;
    r.complementarity0.resize(p.m0);
    kernels::minmax_complementarity(view(w.s0), view(w.lambda0), view_mut(r.complementarity0));
  } else {
    r.primal0.resize(0);
    r.complementarity0.resize(0);
  }
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const auto& d = p.subproblems[i];
    d.scatter_add(Vec(-w.v[i].eta), r.stationarity);
    r.sub.push_back(kkt_residual(d, w.v[i], w.x, mu));
  }
  return r;
}

double theta(const TwoStageProblem& p, const FullPrimalDual& w, double mu) {
  return combined_residual(p, w, mu).norm();
}

double fraction_to_boundary(const Vec& s, const Vec& lambda, const Vec& ds, const Vec& dlambda,
                            double tau) {
  return std::min(kernels::max_step(view(s), view(ds), tau),
                  kernels::max_step(view(lambda), view(dlambda), tau));
}

double MuSchedule::next(double mu) const {
  return std::max(mu_tol, std::min(cmu1 * mu, std::pow(mu, cmu2)));
}

double MuSchedule::tau(double mu_next) const { return std::max(tau_max, 1.0 - mu_next); }

void MuSchedule::validate(double mu0) const {
  if (!(c0 > 0.0)) throw MasterError("c0 must be positive");
  if (!(cmu1 > 0.0 && cmu1 < 1.0)) throw MasterError("cmu1 must lie in (0, 1)");
  if (!(cmu2 > 1.0 && cmu2 < 2.0)) throw MasterError("cmu2 must lie in (1, 2)");
  if (!(mu_tol > 0.0 && mu_tol < mu0)) throw MasterError("mu_tol must lie in (0, mu0)");
  if (!(tau_max > 0.0 && tau_max < 1.0)) throw MasterError("tau_max must lie in (0, 1)");
}

ExtrapolationStep extrapolation_step(const TwoStageProblem& p, const FullPrimalDual& w,
                                     double mu_next, double tau, const ExtrapolationOptions& opts,
                                     WorkerPool& pool,
                                     std::vector<std::shared_ptr<const NewtonFactorization>> facts) {
  const int N = p.num_subproblems(), n0 = p.n0;
  ExtrapolationStep out;
  facts.resize(N);
  std::vector<Vec> d1(N);
  std::vector<Mat> Ht(N);
  std::vector<char> bad(N, 0);

  // (a) Newton step of each subproblem at fixed x for mu_next
  pool.parallel_for(N, [&](int i) {
    const auto& d = p.subproblems[i];
    if (!facts[i]) facts[i] = factor_at(d, w.v[i], opts.sub);
    if (!facts[i]) {
      bad[i] = 1;
      return;
    }
    d1[i] = facts[i]->solve(-kkt_residual(d, w.v[i], w.x, mu_next).stacked());
    Ht[i] = facts[i]->schur_hessian();
    if (!d1[i].allFinite() || !Ht[i].allFinite()) bad[i] = 1;
  });
  for (int i = 0; i < N; ++i) {
    if (bad[i]) {
      out.message = "extrapolation unavailable: grad_v F singular in subproblem " + std::to_string(i);
      return out;
    }
  }

  // (b) master QP with the aggregated gradient and Hessian
  Vec G = Vec::Zero(n0);
  Mat Hs = Mat::Zero(n0, n0);
  for (int i = 0; i < N; ++i) {
    const auto& d = p.subproblems[i];
    const int nc = d.nc();
    d.scatter_add(Vec(-(w.v[i].eta + d1[i].tail(nc))), G);
    d.scatter_add(Ht[i], Hs);
  }
  double penalty = opts.penalty;
  L1Qp q;
  for (int r = 0; r < 8; ++r) {
    q = master_qp(p, w.x, w.lambda0, G, Hs, penalty, opts.radius, opts.hessian_cap);
    out.qp = solve_l1qp(q, opts.qp);
    const double np = update_penalty(penalty, out.qp.lambda);
    if (np == penalty) break;
    penalty = np;
  }
  out.penalty = penalty;
  if (out.qp.fallback || !out.qp.p.allFinite()) {
    out.message = "extrapolation unavailable: master QP failed";
    return out;
  }
  out.dx = out.qp.p;
  out.dlambda0 = p.m0 ? Vec(out.qp.lambda - w.lambda0) : Vec(0);

  // (c) response of each subproblem to the master step, (d) sum
  out.dv.resize(N);
  pool.parallel_for(N, [&](int i) {
    const auto& d = p.subproblems[i];
    out.dv[i] = d1[i] + facts[i]->solve_copy(d.project(out.dx));
  });

  double alpha = 1.0;
  for (int i = 0; i < N; ++i) {
    const auto& d = p.subproblems[i];
    const int nz = d.n + d.nc(), m = d.m;
    alpha = std::min(alpha, fraction_to_boundary(w.v[i].s, w.v[i].lambda,
                                                 out.dv[i].segment(nz, m),
                                                 out.dv[i].segment(nz + m, m), tau));
  }
  out.alpha = alpha;

  out.w = w;
  out.w.x += alpha * out.dx;
  if (p.m0) {
    out.w.lambda0 += alpha * out.dlambda0;
    out.w.s0 = master_slacks(p, out.w.x);
  }
  for (int i = 0; i < N; ++i) {
    const auto& d = p.subproblems[i];
    out.w.v[i] = SubproblemState::unpack(w.v[i].pack() + alpha * out.dv[i], d.n, d.nc(), d.m);
  }
  out.ok = out.w.positive();
  if (!out.ok) out.message = "extrapolation lost positivity";
  return out;
}

ExtrapolationLoopResult extrapolation_loop(
    const TwoStageProblem& p, FullPrimalDual w, double mu, const MuSchedule& sched,
    const ExtrapolationOptions& opts, WorkerPool& pool,
    std::vector<std::shared_ptr<const NewtonFactorization>> facts, int first_l) {
  ExtrapolationLoopResult res;
  double th = theta(p, w, mu);
  ExtrapolationOptions o = opts;
  for (int l = first_l; th <= sched.c0 * mu && mu > sched.mu_tol; ++l) {
    ExtrapolationRecord rec;
    rec.l = l;
    rec.mu = mu;
    rec.theta_before = th;
    const double mu_next = sched.next(mu);
    rec.mu_next = mu_next;
    ExtrapolationStep step = extrapolation_step(p, w, mu_next, sched.tau(mu_next), o, pool, facts);
    facts.clear();
    rec.backsolves.assign(p.num_subproblems(), 2);
    if (!step.ok) {
      rec.note = step.message;
      res.log.push_back(rec);
      res.unavailable = true;
      res.message = step.message;
      break;
    }
    o.penalty = step.penalty;
    w = std::move(step.w);
    mu = mu_next;
    th = theta(p, w, mu);
    rec.alpha = step.alpha;
    rec.theta_after = th;
    rec.x = w.x;
    rec.accepted = th <= sched.c0 * mu;
    res.accepted += rec.accepted;
    res.log.push_back(rec);
  }
  res.w = std::move(w);
  res.mu = mu;
  res.penalty = o.penalty;
  return res;
}

FullPrimalDual primal_dual_from(const TwoStageProblem& p, const MasterResult& r) {
  FullPrimalDual w;
  w.x = r.state.x;
  w.s0 = master_slacks(p, w.x);
  w.lambda0 = r.state.lambda0.size() == p.m0 ? r.state.lambda0 : Vec(Vec::Zero(p.m0));
  for (const auto& o : r.eval.outcomes) w.v.push_back(o.solve.state);
  return w;
}

}  // namespace tsd
