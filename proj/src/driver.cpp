#include "tsd/driver.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "json.hpp"

namespace tsd {

void DriverConfig::validate() const {
  if (!(mu0 > 0.0)) throw DriverError("mu0 must be positive");
  try {
    schedule.validate(mu0);
    master.trust.validate();
  } catch (const MasterError& e) {
    throw DriverError(e.what());
  }
  if (threads < 1) throw DriverError("thread count must be at least 1");
}

MasterState presolve(const TwoStageProblem& problem, const Vec& x0, const MasterOptions& opts,
                     std::string* warning) {
  TwoStageProblem master_only;
  master_only.n0 = problem.n0;
  master_only.m0 = problem.m0;
  master_only.master = problem.master;
  WorkerPool pool(1);
  SubproblemSet subs(master_only, {}, pool);
  MasterOptions o = opts;
  o.c0 = 1.0;
  MasterSolver ms(master_only, subs, o);
  MasterResult r = ms.solve(MasterState::initial(master_only, x0, o), 1e-6);
  if (r.ok()) {
    MasterState st = r.state;
    st.radius = MasterState::initial(problem, x0, opts).radius;
    return st;
  }
  if (warning) *warning = std::string("master presolve: ") + to_string(r.status) + "; using x0";
  return MasterState::initial(problem, x0, opts);
}

double two_stage_objective(const TwoStageProblem& problem, const Vec& x,
                           const std::vector<SubproblemState>& states) {
  double v = problem.master->objective(x);
  for (int i = 0; i < problem.num_subproblems(); ++i) {
    const auto& d = problem.subproblems[i];
    v += d.fn->objective(states[i].y, d.project(x));
  }
  return v;
}

RunReport run(const TwoStageProblem& problem, const DriverConfig& config, const Vec& x0) {
  config.validate();
  problem.validate();
  if (x0.size() != problem.n0) throw DriverError("x0 has the wrong dimension");
  const auto t0 = std::chrono::steady_clock::now();
  const MuSchedule& S = config.schedule;
  RunReport rep;

  WorkerPool pool(config.threads);
  SubsolverOptions so = config.sub;
  SubproblemSet subs(problem, so, pool);
  MasterOptions mo = config.master;
  mo.c0 = S.c0;
  mo.smoothing = config.smoothing;
  mo.qp = config.qp;
  MasterSolver ms(problem, subs, mo);
  ExtrapolationOptions xo;
  xo.qp = config.qp;
  xo.sub = so;
  xo.hessian_cap = mo.hessian_cap;
  xo.radius = mo.trust.radius_max;

  MasterState state = config.presolve ? presolve(problem, x0, mo, &rep.message)
                                      : MasterState::initial(problem, x0, mo);
  double mu = config.mu0;
  int k = 0;
  for (int stage = 0;; ++stage) {
    if (stage >= config.max_stages) {
      rep.message = "stage limit reached";
      rep.failed_stage = stage;
      break;
    }
    subs.set_tolerance(SubsolverOptions::tolerance_for(mu, S.c0));
    state.radius = std::min(mo.radius0, mo.trust.radius_max);
    const long newton_before = subs.newton_iterations();
    MasterResult r = ms.solve(state, mu, std::nullopt, k);
    k += static_cast<int>(r.log.size());
    rep.sqp_log.insert(rep.sqp_log.end(), r.log.begin(), r.log.end());
    StageRecord rec;
    rec.stage = stage;
    rec.mu = mu;
    rec.status = r.status;
    rec.sqp_iterations = r.iterations;
    rec.theta0 = r.theta0;
    rec.newton_iterations = subs.newton_iterations() - newton_before;
    rep.sqp_iterations += r.iterations;
    state = r.state;
    rep.x = state.x;
    rep.lambda0 = state.lambda0;
    rep.theta0 = r.theta0;
    rep.mu = mu;
    rep.states.clear();
    for (const auto& o : r.eval.outcomes) rep.states.push_back(o.solve.state);

    if (!r.ok()) {
      rep.failed_stage = stage;
      rep.failed_subproblem = r.failed_subproblem;
      rep.message = "stage " + std::to_string(stage) + " (mu = " + std::to_string(mu) +
                    "): " + to_string(r.status);
      if (!r.message.empty()) rep.message += ": " + r.message;
      if (r.failed_subproblem >= 0) {
        const int i = r.failed_subproblem;
        const Subsolver& sv = subs.solver(i);
        if (sv.has_warm_state())
          rep.degeneracy = check_nondegeneracy(sv.def(), sv.warm_state(), state.x);
      }
      rec.mu_after = mu;
      rep.stages.push_back(rec);
      break;
    }
    if (mu <= S.mu_tol) {
      rec.mu_after = mu;
      rep.stages.push_back(rec);
      rep.ok = true;
      break;
    }

    if (config.extrapolation) {
      std::vector<std::shared_ptr<const NewtonFactorization>> facts;
      for (const auto& o : r.eval.outcomes)
        facts.push_back(o.eval && o.eval->kind == SmoothingKind::Objective ? o.eval->factorization
                                                                          : nullptr);
      xo.penalty = state.penalty;
      ExtrapolationLoopResult loop = extrapolation_loop(
          problem, primal_dual_from(problem, r), mu, S, xo, pool, std::move(facts),
          static_cast<int>(rep.extrapolation_log.size()));
      rep.extrapolation_log.insert(rep.extrapolation_log.end(), loop.log.begin(), loop.log.end());
      rec.extrapolation_accepted = loop.accepted;
      rep.extrapolation_accepted += loop.accepted;
      for (const auto& l : loop.log) rec.extrapolation_steps += l.alpha > 0.0;
      if (loop.mu < mu) {
        mu = loop.mu;
        state.x = loop.w.x;
        state.lambda0 = loop.w.lambda0;
        state.s0 = loop.w.s0;
        state.penalty = std::max(state.penalty, loop.penalty);
        for (int i = 0; i < subs.size(); ++i) subs.solver(i).set_warm_state(loop.w.v[i]);
      } else {
        mu = S.next(mu);
      }
    } else {
      mu = S.next(mu);
    }
    rec.mu_after = mu;
    rep.stages.push_back(rec);
  }

  rep.newton_iterations = subs.newton_iterations();
  rep.newton_per_subproblem = subs.newton_per_subproblem();
  rep.solve_count = subs.solve_count();
  if (rep.x.size() == problem.n0 && static_cast<int>(rep.states.size()) == problem.num_subproblems())
    rep.objective = two_stage_objective(problem, rep.x, rep.states);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

namespace {

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::string report_to_json(const RunReport& r, const DriverConfig& c) {
  nlohmann::json j;
  j["ok"] = r.ok;
  j["message"] = r.message;
  j["failed_stage"] = r.failed_stage;
  j["failed_subproblem"] = r.failed_subproblem;
  if (r.degeneracy) {
    j["degeneracy"] = {{"sigma_min", r.degeneracy->sigma_min},
                       {"sigma_max", r.degeneracy->sigma_max},
                       {"lambda_min", r.degeneracy->lambda_min},
                       {"nondegenerate", r.degeneracy->nondegenerate}};
  }
  j["x"] = vec_json(r.x);
  j["lambda0"] = vec_json(r.lambda0);
  nlohmann::json ys = nlohmann::json::array();
  for (const auto& s : r.states) ys.push_back(vec_json(s.y));
  j["y"] = ys;
  j["objective"] = finite_or_null(r.objective);
  j["theta0"] = finite_or_null(r.theta0);
  j["mu"] = r.mu;
  j["config"] = {{"mu0", c.mu0},
                 {"c0", c.schedule.c0},
                 {"cmu1", c.schedule.cmu1},
                 {"cmu2", c.schedule.cmu2},
                 {"mu_tol", c.schedule.mu_tol},
                 {"tau_max", c.schedule.tau_max},
                 {"threads", c.threads},
                 {"smoothing", to_string(c.smoothing)},
                 {"extrapolation", c.extrapolation}};
  nlohmann::json st = nlohmann::json::array();
  for (const auto& s : r.stages) {
    st.push_back({{"stage", s.stage},
                  {"mu", s.mu},
                  {"status", to_string(s.status)},
                  {"sqp_iterations", s.sqp_iterations},
                  {"theta0", finite_or_null(s.theta0)},
                  {"newton_iterations", s.newton_iterations},
                  {"extrapolation_steps", s.extrapolation_steps},
                  {"extrapolation_accepted", s.extrapolation_accepted},
                  {"mu_after", s.mu_after}});
  }
  j["stages"] = st;
  j["totals"] = {{"sqp_iterations", r.sqp_iterations},
                 {"newton_iterations", r.newton_iterations},
                 {"newton_per_subproblem", r.newton_per_subproblem},
                 {"solve_count", r.solve_count},
                 {"extrapolation_accepted", r.extrapolation_accepted},
                 {"wall_seconds", r.wall_seconds}};
  return j.dump(2);
}

void write_sqp_log_csv(std::ostream& os, const std::vector<SqpRecord>& log) {
  os << "k,mu,phi,theta0,radius,rho,accepted,penalty,newton_iterations\n";
  os.precision(17);
  for (const auto& r : log) {
    os << r.k << ',' << r.mu << ',' << r.phi << ',' << r.theta0 << ',' << r.radius << ','
       << r.rho << ',' << (r.accepted ? 1 : 0) << ',' << r.penalty << ',' << r.newton_iterations
       << '\n';
  }
}

void write_extrapolation_log_csv(std::ostream& os, const std::vector<ExtrapolationRecord>& log) {
  os << "l,mu,mu_next,theta_before,theta_after,alpha,accepted,backsolves\n";
  os.precision(17);
  for (const auto& r : log) {
    int b = 0;
    for (int v : r.backsolves) b += v;
    os << r.l << ',' << r.mu << ',' << r.mu_next << ',' << r.theta_before << ','
       << r.theta_after << ',' << r.alpha << ',' << (r.accepted ? 1 : 0) << ',' << b << '\n';
  }
}

}  // namespace tsd
