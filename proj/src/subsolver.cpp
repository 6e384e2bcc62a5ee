#include "tsd/subsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsd/kernels.hpp"

namespace tsd {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::NonConvergence: return "nonconvergence";
    case SolveStatus::Degenerate: return "degenerate";
  }
  return "?";
}

const char* to_string(SmoothingKind k) {
  return k == SmoothingKind::Objective ? "obj" : "sol";
}

double SubsolverOptions::tolerance_for(double mu, double c0) {
  return std::min(1e-9, 1e-2 * mu * c0);
}

Vec KktResidual::stacked() const {
  Vec r(stationarity_y.size() + stationarity_x.size() + complementarity.size() + primal.size() +
        copy.size());
  r << stationarity_y, stationarity_x, complementarity, primal, copy;
  return r;
}

double KktResidual::norm() const { return kernels::inf_norm(view(stacked())); }

KktResidual kkt_residual(const SubproblemDef& def, const SubproblemState& st, const Vec& x,
                         double mu) {
  const int n = def.n, nc = def.nc();
  const Vec g = def.fn->gradient(st.y, st.x_copy);
  const Mat J = def.fn->jacobian(st.y, st.x_copy);
  Vec r1 = g;
  if (def.m) r1.noalias() += J.transpose() * st.lambda;
  r1.tail(nc) += st.eta;
  KktResidual r;
  r.stationarity_y = r1.head(n);
  r.stationarity_x = r1.tail(nc);
  r.complementarity.resize(def.m);
  kernels::complementarity(view(st.s), view(st.lambda), mu, view_mut(r.complementarity));
  r.primal = def.fn->constraints(st.y, st.x_copy) + st.s;
  r.copy = st.x_copy - def.project(x);
  return r;
}

NewtonFactorization::NewtonFactorization(const SubproblemDef& def, const SubproblemState& st,
                                         double delta)
    : n_(def.n), nc_(def.nc()), m_(def.m), delta_(delta), s_(st.s), lambda_(st.lambda) {
  M_ = def.fn->hessian(st.y, st.x_copy);
  if (m_) M_ += def.fn->constraint_hessian(st.y, st.x_copy, st.lambda);
  symmetrize(M_);
  J_ = def.fn->jacobian(st.y, st.x_copy);
  if (m_) {
    Vec sigma(m_);
    kernels::ratio(view(lambda_), view(s_), view_mut(sigma));
    const Mat SJ = sigma.asDiagonal() * J_;
    M_.noalias() += J_.transpose() * SJ;
  }
  M_.diagonal().array() += delta_;
  lu_.compute(M_.topLeftCorner(n_, n_));
  const double rc = lu_.rcond();
  singular_ = !(rc > 1e-15) || !M_.allFinite();
}

Vec NewtonFactorization::solve(const Vec& rhs) const {
  const int nz = n_ + nc_;
  const Vec b1 = rhs.head(nz);
  const Vec b3 = rhs.segment(nz, m_);
  const Vec b4 = rhs.segment(nz + m_, m_);
  const Vec b5 = rhs.tail(nc_);
  const Vec w = (b3.array() - lambda_.array() * b4.array()) / s_.array();
  Vec q = b1;
  if (m_) q.noalias() -= J_.transpose() * w;
  Vec dz(nz);
  dz.tail(nc_) = b5;
  dz.head(n_) = lu_.solve(q.head(n_) - M_.topRightCorner(n_, nc_) * b5);
  const Vec deta = q.tail(nc_) - M_.bottomRows(nc_) * dz;
  const Vec ds = b4 - J_ * dz;
  const Vec dl = (b3.array() - lambda_.array() * ds.array()) / s_.array();
  Vec d(dim());
  d << dz, ds, dl, deta;
  return d;
}

Vec NewtonFactorization::solve_copy(const Vec& b5) const {
  Vec rhs = Vec::Zero(dim());
  rhs.tail(nc_) = b5;
  return solve(rhs);
}

Mat NewtonFactorization::copy_sensitivity() const {
  Mat D(dim(), nc_);
  for (int k = 0; k < nc_; ++k) D.col(k) = solve_copy(Vec::Unit(nc_, k));
  return D;
}

Mat NewtonFactorization::schur_hessian() const {
  Mat H = M_.bottomRightCorner(nc_, nc_) -
          M_.bottomLeftCorner(nc_, n_) * lu_.solve(M_.topRightCorner(n_, nc_));
  symmetrize(H);
  return H;
}

namespace {

SubproblemState advance(const SubproblemState& st, const Vec& dv, double beta) {
  const int n = static_cast<int>(st.y.size()), nc = static_cast<int>(st.x_copy.size()),
            m = static_cast<int>(st.s.size());
  return SubproblemState::unpack(st.pack() + beta * dv, n, nc, m);
}

SubproblemState advance_split(const SubproblemState& st, const Vec& dv, double beta,
                              double beta_dual) {
  const int n = static_cast<int>(st.y.size()), nc = static_cast<int>(st.x_copy.size()),
            m = static_cast<int>(st.s.size());
  SubproblemState out = st;
  out.y += beta * dv.head(n);
  out.x_copy += beta * dv.segment(n, nc);
  out.s += beta * dv.segment(n + nc, m);
  out.lambda += beta_dual * dv.segment(n + nc + m, m);
  out.eta += beta_dual * dv.tail(nc);
  return out;
}

double barrier_merit(const SubproblemDef& def, const SubproblemState& st, const Vec& x, double mu,
                     double nu) {
  if (!((st.s.array() > 0.0).all())) return std::numeric_limits<double>::infinity();
  const Vec c = def.fn->constraints(st.y, st.x_copy);
  const double infeas = (c + st.s).lpNorm<1>() + (st.x_copy - def.project(x)).lpNorm<1>();
  return barrier_value(def, st, mu) + nu * infeas;
}

double infeasibility(const SubproblemDef& def, const SubproblemState& st, const Vec& x) {
  const Vec c = def.fn->constraints(st.y, st.x_copy);
  return (c + st.s).lpNorm<1>() + (st.x_copy - def.project(x)).lpNorm<1>();
}

double barrier_objective(const SubproblemDef& def, const SubproblemState& st, double mu) {
  if (!((st.s.array() > 0.0).all())) return std::numeric_limits<double>::infinity();
  return barrier_value(def, st, mu);
}

// Filter line search on (infeasibility, barrier objective) with second-order
// corrections.
struct Filter {
  std::vector<std::pair<double, double>> entries;
  double theta_max = 0.0;
  double theta_min = 0.0;

  static constexpr double gamma_theta = 1e-5;
  static constexpr double gamma_phi = 1e-5;
  static constexpr double s_theta = 1.1;
  static constexpr double s_phi = 2.3;

  void init(double theta0) {
    entries.clear();
    theta_max = 1e4 * std::max(1.0, theta0);
    theta_min = 1e-4 * std::max(1.0, theta0);
  }
  bool acceptable(double th, double ph) const {
    if (th > theta_max) return false;
    for (const auto& [ft, fp] : entries)
      if (th >= ft && ph >= fp) return false;
    return true;
  }
  void add(double th, double ph) {
    std::erase_if(entries, [&](const auto& e) { return e.first >= th && e.second >= ph; });
    entries.emplace_back(th, ph);
  }
};

struct FilterStep {
  Vec dv;
  LineSearchResult ls;
};

FilterStep filter_line_search(const SubproblemDef& def, const SubproblemState& st,
                              const NewtonStep& step, const Vec& F, const Vec& x, double mu,
                              const SubsolverOptions& opts, Filter& filter) {
  const int n = def.n, nc = def.nc(), m = def.m, nz = n + nc;
  const Vec& dv = step.dv;
  const Vec ds = dv.segment(nz, m);
  const double primal_max = kernels::max_step(view(st.s), view(ds), opts.tau);
  const double dual_max =
      kernels::max_step(view(st.lambda), view(Vec(dv.segment(nz + m, m))), opts.tau);

  const double th0 = infeasibility(def, st, x);
  const double ph0 = barrier_value(def, st, mu);
  const Vec g = def.fn->gradient(st.y, st.x_copy);
  const double slope = g.dot(dv.head(nz)) - mu * (ds.array() / st.s.array()).sum();

  double beta_min = Filter::gamma_theta;
  if (slope < 0.0) {
    beta_min = std::min({beta_min, Filter::gamma_phi * th0 / -slope,
                         std::pow(th0, Filter::s_theta) / std::pow(-slope, Filter::s_phi)});
  }
  beta_min = std::max(0.05 * beta_min, 1e-12);

  auto accept = [&](double beta, double th, double ph, bool& f_type) {
    f_type = false;
    if (!std::isfinite(ph) || !std::isfinite(th) || th > filter.theta_max) return false;
    const bool switching =
        slope < 0.0 && beta * std::pow(-slope, Filter::s_phi) > std::pow(th0, Filter::s_theta);
    if (switching && th0 <= filter.theta_min) {
      f_type = true;
      return ph <= ph0 + opts.armijo * beta * slope;
    }
    if (!filter.acceptable(th, ph)) return false;
    if (switching && ph <= ph0 + opts.armijo * beta * slope) {
      f_type = true;
      return true;
    }
    return th <= (1.0 - Filter::gamma_theta) * th0 || ph <= ph0 - Filter::gamma_phi * th0;
  };
  auto finish = [&](FilterStep out, bool f_type) {
    if (!f_type) filter.add((1.0 - Filter::gamma_theta) * th0, ph0 - Filter::gamma_phi * th0);
    return out;
  };

  FilterStep out;
  out.dv = dv;
  out.ls.separate = true;
  out.ls.beta_dual = std::min(1.0, dual_max);
  double beta = std::min(1.0, primal_max);
  for (int k = 0;; ++k) {
    ++out.ls.trials;
    const SubproblemState trial = advance_split(st, dv, beta, 0.0);
    const double th = infeasibility(def, trial, x);
    const double ph = barrier_objective(def, trial, mu);
    bool f_type = false;
    if (accept(beta, th, ph, f_type)) {
      out.ls.beta = beta;
      return finish(std::move(out), f_type);
    }
    if (k == 0 && std::isfinite(ph) && th >= th0) {
      // second-order correction of the linearized constraints
      Vec c_soc(m + nc);
      c_soc << beta * F.segment(nz + m, m), beta * F.tail(nc);
      double th_prev = th;
      SubproblemState tr = trial;
      for (int p = 0; p < 4; ++p) {
        c_soc.head(m) += def.fn->constraints(tr.y, tr.x_copy) + tr.s;
        c_soc.tail(nc) += tr.x_copy - def.project(x);
        Vec rhs = -F;
        rhs.segment(nz + m, m) = -c_soc.head(m);
        rhs.tail(nc) = -c_soc.tail(nc);
        const Vec d = step.factorization->solve(rhs);
        if (!d.allFinite()) break;
        const double b =
            std::min(1.0, kernels::max_step(view(st.s), view(Vec(d.segment(nz, m))), opts.tau));
        tr = advance_split(st, d, b, 0.0);
        const double ths = infeasibility(def, tr, x);
        const double phs = barrier_objective(def, tr, mu);
        bool ft = false;
        if (accept(b, ths, phs, ft)) {
          out.dv = d;
          out.dv.tail(m + nc) = dv.tail(m + nc);
          out.ls.beta = b;
          return finish(std::move(out), ft);
        }
        if (ths > 0.99 * th_prev) break;
        th_prev = ths;
      }
    }
    beta *= 0.5;
    if (beta < beta_min) {
      // no acceptable point: take a short step and restart the filter
      out.ls.beta = std::max(beta, std::min(opts.beta_min, primal_max));
      out.ls.armijo = false;
      filter.init(th0);
      return out;
    }
  }
}

bool valid_warm(const SubproblemDef& def, const SubproblemState& st) {
  return st.y.size() == def.n && st.x_copy.size() == def.nc() && st.s.size() == def.m &&
         st.lambda.size() == def.m && st.eta.size() == def.nc() && st.positive() &&
         st.pack().allFinite();
}

}  // namespace

std::optional<NewtonStep> newton_step(const SubproblemDef& def, const SubproblemState& st,
                                      const Vec& x, double mu, const SubsolverOptions& opts) {
  const Vec F = kkt_residual(def, st, x, mu).stacked();
  double delta = 0.0;
  while (true) {
    auto fact = std::make_shared<const NewtonFactorization>(def, st, delta);
    if (!fact->singular()) {
      Vec dv = fact->solve(-F);
      if (dv.allFinite()) return NewtonStep{std::move(dv), std::move(fact)};
    }
    delta = delta == 0.0 ? opts.reg_start : delta * opts.reg_factor;
    if (delta > opts.reg_max * (1.0 + 1e-12)) return std::nullopt;
  }
}

LineSearchResult line_search(const SubproblemDef& def, const SubproblemState& st, const Vec& dv,
                             const Vec& x, double mu, const SubsolverOptions& opts,
                             LineSearchMerit merit, double nu) {
  const int n = def.n, nc = def.nc(), m = def.m;
  const Vec ds = dv.segment(n + nc, m);
  const Vec dl = dv.segment(n + nc + m, m);
  const double primal_max = kernels::max_step(view(st.s), view(ds), opts.tau);
  const double dual_max = kernels::max_step(view(st.lambda), view(dl), opts.tau);
  double beta_max = std::min(primal_max, dual_max);

  double phi0 = 0.0, slope = 0.0;
  if (merit == LineSearchMerit::Barrier) {
    const Vec g = def.fn->gradient(st.y, st.x_copy);
    const Vec c = def.fn->constraints(st.y, st.x_copy);
    const double infeas = (c + st.s).lpNorm<1>() + (st.x_copy - def.project(x)).lpNorm<1>();
    slope = g.dot(dv.head(n + nc)) - mu * (ds.array() / st.s.array()).sum() - nu * infeas;
    phi0 = barrier_merit(def, st, x, mu, nu);
    if (!(slope < 0.0)) merit = LineSearchMerit::Residual;
  }
  LineSearchResult out;
  if (merit == LineSearchMerit::Barrier) {
    beta_max = primal_max;
    out.separate = true;
    out.beta_dual = std::min(1.0, dual_max);
  }
  if (merit == LineSearchMerit::Residual) {
    phi0 = kkt_residual(def, st, x, mu).stacked().squaredNorm();
    slope = -2.0 * phi0;
  }

  double beta = std::min(1.0, beta_max);
  while (true) {
    ++out.trials;
    const SubproblemState trial =
        out.separate ? advance_split(st, dv, beta, 0.0) : advance(st, dv, beta);
    double phi = merit == LineSearchMerit::Barrier
                     ? barrier_merit(def, trial, x, mu, nu)
                     : kkt_residual(def, trial, x, mu).stacked().squaredNorm();
    if (std::isfinite(phi) && phi <= phi0 + opts.armijo * beta * slope) {
      out.beta = beta;
      if (!out.separate) out.beta_dual = beta;
      return out;
    }
    beta *= 0.5;
    if (beta < opts.beta_min) {
      out.beta = std::min(opts.beta_min, beta_max);
      if (!out.separate) out.beta_dual = out.beta;
      out.armijo = false;
      return out;
    }
  }
}

SubproblemState cold_start(const SubproblemDef& def, const Vec& x, double mu) {
  SubproblemState st;
  if (def.y_start) {
    st.y = *def.y_start;
  } else {
    st.y = Vec::Zero(def.n);
    for (int k = 0; k < def.n; ++k) {
      const double lo = def.lower.size() ? def.lower[k] : -INFINITY;
      const double hi = def.upper.size() ? def.upper[k] : INFINITY;
      if (std::isfinite(lo) && std::isfinite(hi)) st.y[k] = 0.5 * (lo + hi);
    }
  }
  st.x_copy = def.project(x);
  const Vec c = def.fn->constraints(st.y, st.x_copy);
  st.s = (1.0 - c.array()).max(1.0);
  st.lambda = mu / st.s.array();
  st.eta = Vec::Zero(def.nc());
  return st;
}

namespace {

SolveResult solve_from(const SubproblemDef& def, const Vec& x, double mu, SubproblemState st,
                       const SubsolverOptions& opts) {
  SolveResult res;
  Filter filter;
  bool filter_ready = false;
  double delta_last = 0.0;
  std::vector<double> primal_hist, phi_hist;
  double prev = std::numeric_limits<double>::infinity();
  int resets = 0;

  for (int it = 0;; ++it) {
    const KktResidual r = kkt_residual(def, st, x, mu);
    const Vec F = r.stacked();
    const double rn = kernels::inf_norm(view(F));
    res.residual_history.push_back(rn);
    res.iterations = it;
    res.residual = rn;
    res.state = st;
    if (!std::isfinite(rn) || !st.pack().allFinite()) {
      res.status = SolveStatus::NonConvergence;
      res.message = "non-finite iterate";
      return res;
    }
    if (rn <= opts.tolerance) {
      res.status = SolveStatus::Converged;
      return res;
    }
    // Residual floor reached when asking for more than double precision gives.
    if (opts.tolerance < 1e-12 && rn <= 1e-9 && rn > 0.5 * prev) {
      res.status = SolveStatus::Converged;
      return res;
    }
    prev = rn;
    if (it >= opts.max_iterations) {
      res.status = SolveStatus::NonConvergence;
      res.message = "iteration limit reached";
      return res;
    }
    const double primal = r.primal.size() ? kernels::inf_norm(view(r.primal)) : 0.0;
    primal_hist.push_back(primal);
    phi_hist.push_back(barrier_value(def, st, mu));
    if (it >= opts.stagnation_window && primal > 100.0 * opts.tolerance) {
      const double old = primal_hist[it - opts.stagnation_window];
      const double phi_old = phi_hist[it - opts.stagnation_window];
      const bool phi_stuck =
          std::abs(phi_hist.back() - phi_old) <= opts.stagnation_decrease * (1.0 + std::abs(phi_old));
      const double comp = r.complementarity.size() ? kernels::inf_norm(view(r.complementarity)) : 0.0;
      if (primal > (1.0 - opts.stagnation_decrease) * old && phi_stuck &&
          comp <= std::max(mu, opts.tolerance)) {
        // strictly feasible in y: restart from the exact slacks s = -c(y)
        const Vec c = def.fn->constraints(st.y, st.x_copy);
        if (resets < 3 && (c.array() < 0.0).all()) {
          ++resets;
          st.s = -c;
          for (int j = 0; j < def.m; ++j) {
            const double b = mu / st.s[j];
            st.lambda[j] = std::clamp(st.lambda[j], b / 1e3, b * 1e3);
          }
          filter_ready = false;
          primal_hist.assign(primal_hist.size(), INFINITY);
          phi_hist.assign(phi_hist.size(), INFINITY);
          prev = INFINITY;
          continue;
        }
        res.status = SolveStatus::NonConvergence;
        res.message = "infeasible stationary point";
        return res;
      }
    }

    std::optional<NewtonStep> step;
    double delta = 0.0;
    if (opts.seek_minimizer) {
      while (true) {
        auto fact = std::make_shared<NewtonFactorization>(def, st, delta);
        bool ok = !fact->singular();
        if (ok) {
          Eigen::LLT<Mat> llt(fact->reduced_hessian());
          ok = llt.info() == Eigen::Success;
        }
        if (ok) {
          Vec dv = fact->solve(-F);
          if (dv.allFinite()) {
            step = NewtonStep{std::move(dv), std::move(fact)};
            break;
          }
        }
        if (delta == 0.0)
          delta = delta_last > 0.0 ? std::max(opts.reg_start, delta_last / 3.0) : opts.inertia_start;
        else
          delta *= opts.inertia_factor;
        if (delta > opts.inertia_max) break;
      }
      if (delta > 0.0) delta_last = delta;
    } else {
      step = newton_step(def, st, x, mu, opts);
      if (step) delta = step->factorization->delta();
    }
    if (!step) {
      res.status = SolveStatus::Degenerate;
      res.message = "Newton matrix singular at regularization cap";
      return res;
    }

    LineSearchResult ls;
    Vec dv = step->dv;
    if (opts.seek_minimizer && delta > 0.0) {
      if (!filter_ready) {
        filter.init(infeasibility(def, st, x));
        filter_ready = true;
      }
      FilterStep fs = filter_line_search(def, st, *step, F, x, mu, opts, filter);
      dv = std::move(fs.dv);
      ls = fs.ls;
    } else {
      ls = line_search(def, st, dv, x, mu, opts, LineSearchMerit::Residual);
    }
    res.step_history.push_back(ls.beta);
    st = advance_split(st, dv, ls.beta, ls.beta_dual);
    if (ls.separate) {
      // keep multipliers within a wide band around the barrier value
      const double kappa = 1e10;
      for (int j = 0; j < def.m; ++j) {
        const double c = mu / st.s[j];
        st.lambda[j] = std::clamp(st.lambda[j], c / kappa, c * kappa);
      }
    }
    if (!st.positive()) {
      res.status = SolveStatus::NonConvergence;
      res.message = "lost positivity of slacks or multipliers";
      return res;
    }
  }
}

}  // namespace

SolveResult solve_subproblem(const SubproblemDef& def, const Vec& x, double mu,
                             const std::optional<SubproblemState>& warm,
                             const SubsolverOptions& opts) {
  const bool cold = !(warm && valid_warm(def, *warm));
  SolveResult res = solve_from(def, x, mu, cold ? cold_start(def, x, mu) : *warm, opts);
  if (res.status == SolveStatus::Converged || !cold || mu >= 0.1) return res;
  // barrier continuation from mu = 0.1 when a cold start far below it fails
  int spent = res.iterations;
  SubproblemState st = cold_start(def, x, 0.1);
  for (double m = 0.1;; m = std::max(0.1 * m, mu)) {
    SubsolverOptions o = opts;
    if (m > mu) o.tolerance = std::max(opts.tolerance, 0.1 * m);
    SolveResult r = solve_from(def, x, m, st, o);
    spent += r.iterations;
    if (r.status != SolveStatus::Converged) return res;
    if (m == mu) {
      r.iterations = spent;
      return r;
    }
    st = r.state;
  }
}

std::shared_ptr<const NewtonFactorization> factor_at(const SubproblemDef& def,
                                                     const SubproblemState& st,
                                                     const SubsolverOptions& opts) {
  double delta = 0.0;
  while (true) {
    auto fact = std::make_shared<const NewtonFactorization>(def, st, delta);
    if (!fact->singular()) return fact;
    delta = delta == 0.0 ? opts.reg_start : delta * opts.reg_factor;
    if (delta > opts.reg_max * (1.0 + 1e-12)) return nullptr;
  }
}

namespace {

Vec solution_gradient(const SubproblemDef& def, const SubproblemState& st,
                      const NewtonFactorization& fact) {
  const Vec gz = def.fn->gradient(st.y, st.x_copy);
  const Mat D = fact.copy_sensitivity();
  return D.topRows(def.n + def.nc()).transpose() * gz;
}

}  // namespace

SubproblemOutcome evaluate_smoothed(const SubproblemDef& def, const Vec& x, double mu,
                                    const std::optional<SubproblemState>& warm, SmoothingKind kind,
                                    const SubsolverOptions& opts) {
  SubproblemOutcome out;
  out.solve = solve_subproblem(def, x, mu, warm, opts);
  out.newton_iterations = out.solve.iterations;
  out.status = out.solve.status;
  out.message = out.solve.message;
  if (out.status != SolveStatus::Converged) return out;

  const SubproblemState& st = out.solve.state;
  auto fact = factor_at(def, st, opts);
  if (!fact) {
    out.status = SolveStatus::Degenerate;
    out.message = "KKT Jacobian singular at the solution";
    return out;
  }
  SmoothedEval ev;
  ev.kind = kind;
  ev.factorization = fact;
  if (kind == SmoothingKind::Objective) {
    ev.value = barrier_value(def, st, mu);
    ev.gradient = -st.eta;
    ev.hessian = fact->schur_hessian();
  } else {
    ev.value = def.fn->objective(st.y, st.x_copy);
    ev.gradient = solution_gradient(def, st, *fact);
    const int nc = def.nc();
    const double h = opts.fd_step_scale * (1.0 + x.lpNorm<Eigen::Infinity>());
    SubsolverOptions tight = opts;
    tight.tolerance = opts.fd_tolerance;
    ev.hessian.resize(nc, nc);
    for (int k = 0; k < nc; ++k) {
      Vec g[2];
      for (int side = 0; side < 2; ++side) {
        Vec xp = x;
        xp[def.projection[k]] += side == 0 ? h : -h;
        const SolveResult r = solve_subproblem(def, xp, mu, st, tight);
        out.newton_iterations += r.iterations;
        auto f = r.status == SolveStatus::Converged ? factor_at(def, r.state, opts) : nullptr;
        if (!f) {
          out.status = r.status == SolveStatus::Converged ? SolveStatus::Degenerate : r.status;
          out.message = "re-solve for the solution-smoothing Hessian failed";
          return out;
        }
        g[side] = solution_gradient(def, r.state, *f);
      }
      ev.hessian.col(k) = (g[0] - g[1]) / (2.0 * h);
    }
    symmetrize(ev.hessian);
  }
  out.eval = std::move(ev);
  return out;
}

Mat dense_subproblem_jacobian(const SubproblemDef& def, const SubproblemState& st) {
  const int n = def.n, nc = def.nc(), m = def.m, nz = n + nc;
  const int dim = nz + 2 * m + nc;
  Mat W = def.fn->hessian(st.y, st.x_copy);
  if (m) W += def.fn->constraint_hessian(st.y, st.x_copy, st.lambda);
  const Mat J = def.fn->jacobian(st.y, st.x_copy);
  Mat D = Mat::Zero(dim, dim);
  const int cs = nz, cl = nz + m, ce = nz + 2 * m;
  D.block(0, 0, nz, nz) = W;
  if (m) D.block(0, cl, nz, m) = J.transpose();
  for (int j = 0; j < nc; ++j) D(n + j, ce + j) = 1.0;
  for (int j = 0; j < m; ++j) {
    D(cs + j, cs + j) = st.lambda[j];
    D(cs + j, cl + j) = st.s[j];
    D(cl + j, cs + j) = 1.0;
  }
  if (m) D.block(cl, 0, m, nz) = J;
  for (int j = 0; j < nc; ++j) D(ce + j, n + j) = 1.0;
  return D;
}

NondegeneracyReport check_nondegeneracy(const SubproblemDef& def, const SubproblemState& st,
                                        const Vec& x) {
  (void)x;
  NewtonFactorization fact(def, st, 0.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(fact.reduced_hessian(), Eigen::EigenvaluesOnly);
  const Vec ev = es.eigenvalues();
  NondegeneracyReport rep;
  rep.lambda_min = ev.minCoeff();
  rep.sigma_min = ev.cwiseAbs().minCoeff();
  rep.sigma_max = ev.cwiseAbs().maxCoeff();
  rep.nondegenerate = rep.sigma_min > 1e-8 * std::max(1.0, rep.sigma_max);
  return rep;
}

Subsolver::Subsolver(const SubproblemDef& def, SubsolverOptions opts) : def_(&def), opts_(opts) {}

SubproblemOutcome Subsolver::trial(const Vec& x, double mu, SmoothingKind kind) {
  SubproblemOutcome out = evaluate_smoothed(*def_, x, mu, warm_, kind, opts_);
  ++solves_;
  newton_ += out.newton_iterations;
  return out;
}

void Subsolver::accept(const SubproblemOutcome& outcome) {
  if (outcome.status == SolveStatus::Converged) warm_ = outcome.solve.state;
}

}  // namespace tsd
