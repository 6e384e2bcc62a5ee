#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "tsd/acceptance.hpp"
#include "tsd/benchgen.hpp"
#include "tsd/driver.hpp"
#include "tsd/finite_diff.hpp"
#include "tsd/monolithic.hpp"

namespace tsd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.2e", v); }

CriterionResult named(int id, std::string name) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  return r;
}

Vec one(double x) { return Vec::Constant(1, x); }

double rel(const Vec& a, const Vec& b) {
  const double d = (a - b).norm(), n = b.norm();
  return n > 0 ? d / n : d;
}

QcqpDims dims(int N, int ni, int mi, int nc, bool convex = false) {
  QcqpDims d;
  d.N = N;
  d.ni = ni;
  d.mi = mi;
  d.nc = nc;
  d.convex = convex;
  return d;
}

RunReport run_example(const std::string& id, double y0, std::optional<double> x0 = std::nullopt) {
  NamedExample ex = example(id, y0);
  if (x0) ex.x0 = one(*x0);
  return run(ex.problem, DriverConfig{}, ex.x0);
}

// ---------------------------------------------------------------- C1 - C4

CriterionResult c1(const AcceptanceOptions&) {
  CriterionResult r = named(1, "Example 3.1 dual-basin convergence");
  auto t0 = Clock::now();
  const RunReport a = run_example("3.1", 0.0);
  const double ta = seconds_since(t0);
  t0 = Clock::now();
  const RunReport b = run_example("3.1", -2.0);
  const double tb = seconds_since(t0);
  const double ex = a.ok ? std::abs(a.x[0] - 2) : INFINITY, ey = a.ok ? std::abs(a.states[0].y[0] + 2) : INFINITY;
  const double fx = b.ok ? std::abs(b.x[0] - 1) : INFINITY, fy = b.ok ? std::abs(b.states[0].y[0] + 3) : INFINITY;
  r.pass = ex <= 1e-4 && ey <= 1e-3 && fx <= 1e-4 && fy <= 1e-3 && ta < 1.0 && tb < 1.0 &&
           a.mu == 1e-6 && b.mu == 1e-6;
  r.detail = "y0=0: |x-2|=" + sci(ex) + " |y+2|=" + sci(ey) + " in " + fmt("%.3f", ta) +
             " s; y0=-2: |x-1|=" + sci(fx) + " |y+3|=" + sci(fy) + " in " + fmt("%.3f", tb) + " s";
  return r;
}

CriterionResult c2(const AcceptanceOptions&) {
  CriterionResult r = named(2, "Example 3.1 effort envelope");
  const RunReport a = run_example("3.1", 0.0);
  r.pass = a.ok && a.newton_iterations <= 150 && a.solve_count <= 15;
  r.detail = "Newton iterations " + std::to_string(a.newton_iterations) + " (<= 150), solves " +
             std::to_string(a.solve_count) + " (<= 15)";
  return r;
}

CriterionResult c3(const AcceptanceOptions&) {
  CriterionResult r = named(3, "Example 2.1 limit, convexity and Hessian");
  const RunReport run21 = run_example("2.1", 1.0);
  const double ex = run21.ok ? std::abs(run21.x[0] - 2.0) : INFINITY;

  const auto ex21 = example("2.1");
  const auto& d = ex21.problem.subproblems[0];
  const int n = 200;
  const double mu = 1.0;
  std::vector<double> v(n);
  double worst_h = 0.0, min_d2 = INFINITY;
  bool solved = true;
  std::optional<SubproblemState> wo, ws;
  for (int k = 0; k < n; ++k) {
    const double x = 0.1 + 1.9 * k / (n - 1);
    auto o = evaluate_smoothed(d, one(x), mu, wo, SmoothingKind::Objective);
    auto s = evaluate_smoothed(d, one(x), mu, ws, SmoothingKind::Solution);
    if (!o.ok() || !s.ok()) {
      solved = false;
      break;
    }
    v[k] = o.eval->value;
    wo = o.solve.state;
    ws = s.solve.state;
    const double h = -2 * mu * mu / std::pow(2 * x * x + mu * mu, 1.5);
    worst_h = std::max(worst_h, std::abs(s.eval->hessian(0, 0) - h) / std::abs(h));
  }
  if (solved)
    for (int k = 1; k + 1 < n; ++k) min_d2 = std::min(min_d2, v[k - 1] - 2 * v[k] + v[k + 1]);
  r.pass = solved && ex <= 1e-4 && min_d2 >= -1e-8 && worst_h <= 1e-6;
  r.detail = "|x-2|=" + sci(ex) + ", min second difference " + sci(min_d2) +
             ", max Hessian rel. err " + sci(worst_h);
  return r;
}

CriterionResult c4(const AcceptanceOptions&) {
  CriterionResult r = named(4, "Example 3.2 start-dependent limits");
  const RunReport a = run_example("3.2", 0.5, -0.5);
  const RunReport b = run_example("3.2", 0.2, -0.6);
  auto err = [](const RunReport& rr, double x, double y) {
    return rr.ok ? std::max(std::abs(rr.x[0] - x), std::abs(rr.states[0].y[0] - y)) : INFINITY;
  };
  const double ea = err(a, -1, 2), eb = err(b, -1, -1);
  r.pass = ea <= 1e-3 && eb <= 1e-3;
  auto point = [](const RunReport& rr) {
    if (!rr.ok) return std::string("failed: ") + rr.message;
    std::ostringstream p;
    p << "(" << rr.x[0] << ", " << rr.states[0].y[0] << ")";
    return p.str();
  };
  std::ostringstream os;
  os << "(-0.5,0.5) -> " << point(a) << " err " << sci(ea) << "; (-0.6,0.2) -> " << point(b)
     << " err vs (-1,-1) " << sci(eb);
  r.detail = os.str();
  return r;
}

// ---------------------------------------------------------------- C5 - C7

CriterionResult c5(const AcceptanceOptions&) {
  CriterionResult r = named(5, "derivative oracle suite");
  const auto t0 = Clock::now();
  double worst_g = 0.0, worst_h = 0.0;
  int failures = 0;
  SubsolverOptions o;
  o.tolerance = 1e-13;
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const TwoStageProblem p = to_problem(generate_qcqp(dims(1, 10, 20, 3), seed));
    const auto& d = p.subproblems[0];
    const Vec x = Vec::Constant(p.n0, 0.2);
    for (double mu : {0.1, 1e-3}) {
      auto base = evaluate_smoothed(d, x, mu, std::nullopt, SmoothingKind::Objective, o);
      if (!base.ok()) {
        ++failures;
        continue;
      }
      const SubproblemState ref = base.solve.state;
      auto eval = [&](const Vec& xx) {
        auto e = evaluate_smoothed(d, xx, mu, ref, SmoothingKind::Objective, o);
        if (!e.ok()) throw FiniteDiffError("evaluation failed", -1);
        return *e.eval;
      };
      try {
        const Vec g = finite_diff_gradient([&](const Vec& xx) { return eval(xx).value; }, x);
        const Mat h = finite_diff_jacobian([&](const Vec& xx) { return Vec(eval(xx).gradient); }, x);
        worst_g = std::max(worst_g, rel(base.eval->gradient, g));
        const Mat dh = base.eval->hessian - h;
        worst_h = std::max(worst_h, dh.norm() / h.norm());
      } catch (const FiniteDiffError&) {
        ++failures;
      }
    }
  }
  r.seconds = seconds_since(t0);
  r.pass = failures == 0 && worst_g <= 1e-5 && worst_h <= 1e-4 && r.seconds < 30.0;
  r.detail = "40 points, gradient rel. err " + sci(worst_g) + ", Hessian rel. err " + sci(worst_h) +
             ", failures " + std::to_string(failures) + ", " + fmt("%.1f", r.seconds) + " s";
  return r;
}

struct StagePoint {
  TwoStageProblem problem;
  FullPrimalDual w;
};

std::optional<StagePoint> converge(const QcqpDims& d, unsigned seed, double mu) {
  StagePoint c{to_problem(generate_qcqp(d, seed)), {}};
  WorkerPool pool(1);
  SubsolverOptions so;
  so.tolerance = SubsolverOptions::tolerance_for(mu, 0.1);
  SubproblemSet subs(c.problem, so, pool);
  MasterSolver ms(c.problem, subs);
  const MasterState start = presolve(c.problem, Vec::Zero(c.problem.n0));
  auto res = ms.solve(MasterState::initial(c.problem, start.x, ms.options()), mu);
  if (!res.ok()) return std::nullopt;
  c.w = primal_dual_from(c.problem, res);
  return c;
}

CriterionResult c6(const AcceptanceOptions&) {
  CriterionResult r = named(6, "Schur-monolithic step equivalence");
  double worst = 0.0;
  int used = 0, skipped = 0;
  WorkerPool pool(1);
  for (unsigned seed = 1; used < 50 && seed <= 200; ++seed) {
    QcqpDims d = dims(1 + seed % 4, 3 + seed % 6, 0, 1 + seed % 3);
    d.mi = 2 * d.ni;
    d.n0 = std::max(d.nc, 3);
    auto c = converge(d, seed, 0.1);
    if (!c) {
      ++skipped;
      continue;
    }
    const double mu_next = MuSchedule{}.next(0.1);
    auto st = extrapolation_step(c->problem, c->w, mu_next, 0.995, {}, pool);
    if (!st.ok) {
      ++skipped;
      continue;
    }
    auto dense = dense_extrapolation_step(c->problem, c->w, mu_next, st.qp.active);
    if (!dense.ok) {
      ++skipped;
      continue;
    }
    auto stack = [](const Vec& dx, const Vec& dl, const std::vector<Vec>& dv) {
      int n = static_cast<int>(dx.size() + dl.size());
      for (const auto& v : dv) n += static_cast<int>(v.size());
      Vec s(n);
      int o = 0;
      s.segment(o, dx.size()) = dx;
      o += dx.size();
      s.segment(o, dl.size()) = dl;
      o += dl.size();
      for (const auto& v : dv) {
        s.segment(o, v.size()) = v;
        o += v.size();
      }
      return s;
    };
    worst = std::max(worst, rel(stack(st.dx, st.dlambda0, st.dv), stack(dense.dx, dense.dlambda0, dense.dv)));
    ++used;
  }
  r.pass = used == 50 && worst <= 1e-8;
  r.detail = std::to_string(used) + " instances (" + std::to_string(skipped) +
             " skipped: stage solve or step unavailable), max rel. err " + sci(worst);
  return r;
}

CriterionResult c7(const AcceptanceOptions&) {
  CriterionResult r = named(7, "superlinear tail");
  QcqpDims d = dims(2, 10, 20, 3, true);
  const TwoStageProblem p = to_problem(generate_qcqp(d, 1));
  const RunReport dec = run(p, DriverConfig{}, Vec::Zero(p.n0));
  MonolithicOptions mo;
  mo.tolerance = 1e-12;
  const MasterState pre = presolve(p, Vec::Zero(p.n0));
  const MonolithicResult mono = solve_monolithic(p, pre.x, subproblem_starts(p, pre.x, mo.mu0), mo);
  if (!dec.ok || !mono.converged) {
    r.detail = "run failed: " + (dec.ok ? mono.message : dec.message);
    return r;
  }
  // each mu decrease below 1e-3 and the step that absorbed it
  std::ostringstream os;
  bool absorbed = true;
  std::vector<double> err;
  int tail = 0;
  for (const auto& e : dec.extrapolation_log) {
    if (e.mu > 1e-3 || e.alpha == 0.0) continue;
    ++tail;
    absorbed = absorbed && e.accepted;
    os << " mu " << sci(e.mu) << "->" << sci(e.mu_next) << (e.accepted ? " ok" : " rejected")
       << " (theta " << sci(e.theta_after) << " vs " << sci(0.1 * e.mu_next) << ");";
    err.push_back((e.x - mono.x).norm());
  }
  std::vector<double> ratio;
  for (size_t l = 0; l + 1 < err.size(); ++l) ratio.push_back(err[l + 1] / std::max(err[l], 1e-300));
  bool decreasing = true;
  for (size_t l = 0; l + 1 < ratio.size(); ++l) decreasing = decreasing && ratio[l + 1] < ratio[l];
  // mu decreases below 1e-3 that were not extrapolated count as not absorbed
  int stages_below = 0;
  for (const auto& s : dec.stages) stages_below += s.mu < 1e-3;
  const bool every = tail > 0 && tail >= stages_below;
  const double last = ratio.empty() ? INFINITY : ratio.back();
  r.pass = absorbed && every && decreasing && last <= 0.1;
  os << " errors";
  for (double e : err) os << ' ' << sci(e);
  os << "; final ratio " << sci(last);
  r.detail = std::to_string(tail) + " tail steps;" + os.str();
  return r;
}

// ---------------------------------------------------------------- C8 - C10

struct Timed {
  RunReport report;
  double seconds;
};

Timed timed_run(const TwoStageProblem& p, int threads) {
  DriverConfig c;
  c.threads = threads;
  const auto t0 = Clock::now();
  RunReport rep = run(p, c, Vec::Zero(p.n0));
  return {std::move(rep), seconds_since(t0)};
}

CriterionResult c8(const AcceptanceOptions&) {
  CriterionResult r = named(8, "decomposed vs monolithic objective");
  const std::vector<int> sizes = {2, 8, 32};
  double worst = 0.0;
  int agree = 0, total = 0;
  std::ostringstream os;
  for (int N : sizes) {
    double worst_n = 0.0;
    for (unsigned seed = 1; seed <= 10; ++seed) {
      ++total;
      const TwoStageProblem p = to_problem(generate_qcqp(dims(N, 50, 100, 10), seed));
      const RunReport dec = run(p, DriverConfig{}, Vec::Zero(p.n0));
      const MasterState pre = presolve(p, Vec::Zero(p.n0));
      const MonolithicResult mono = solve_monolithic(p, pre.x, subproblem_starts(p, pre.x, 0.1));
      if (!dec.ok || !mono.converged) {
        worst_n = INFINITY;
        continue;
      }
      const double e = std::abs(dec.objective - mono.objective) / (1.0 + std::abs(mono.objective));
      worst_n = std::max(worst_n, e);
      agree += e <= 1e-4;
    }
    worst = std::max(worst, worst_n);
    os << " N=" << N << " max " << sci(worst_n) << ";";
  }
  r.pass = agree == total;
  r.detail = std::to_string(agree) + "/" + std::to_string(total) + " agree to 1e-4;" + os.str();
  return r;
}

CriterionResult c9(const AcceptanceOptions& opts) {
  CriterionResult r = named(9, "scaling shape");
  std::vector<int> sizes = {4, 8, 16, 32};
  if (opts.quick) sizes.pop_back();
  std::vector<double> lx, ly;
  int smin = 1 << 30, smax = 0;
  bool ok = true;
  std::ostringstream os;
  for (int N : sizes) {
    const TwoStageProblem p = to_problem(generate_qcqp(dims(N, 50, 100, 10), 1));
    const Timed t = timed_run(p, 1);
    ok = ok && t.report.ok;
    lx.push_back(std::log(N));
    ly.push_back(std::log(t.seconds));
    smin = std::min(smin, t.report.sqp_iterations);
    smax = std::max(smax, t.report.sqp_iterations);
    os << " N=" << N << ": " << fmt("%.2f", t.seconds) << " s, " << t.report.sqp_iterations << " SQP;";
  }
  const int k = static_cast<int>(lx.size());
  double mx = 0, my = 0;
  for (int i = 0; i < k; ++i) mx += lx[i] / k, my += ly[i] / k;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < k; ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
  const double b = sxy / sxx;
  const double spread = static_cast<double>(smax) / std::max(smin, 1);
  r.pass = ok && b >= 0.8 && b <= 1.3 && spread <= 2.0;
  r.detail = "b=" + fmt("%.3f", b) + ", SQP spread " + fmt("%.2f", spread) + ";" + os.str() +
             (opts.quick ? " (quick: N=32 skipped)" : "");
  return r;
}

CriterionResult c10(const AcceptanceOptions& opts) {
  CriterionResult r = named(10, "parallel speedup");
  const TwoStageProblem p = to_problem(generate_qcqp(dims(32, 50, 100, 10), 1));
  const Timed a = timed_run(p, 1);
  const Timed b = timed_run(p, opts.threads);
  const double speedup = a.seconds / b.seconds;
  const double diff = std::abs(a.report.objective - b.report.objective) /
                      (1.0 + std::abs(a.report.objective));
  r.pass = a.report.ok && b.report.ok && speedup >= 1.5 && diff <= 1e-8;
  r.detail = "1 thread " + fmt("%.2f", a.seconds) + " s, " + std::to_string(opts.threads) +
             " threads " + fmt("%.2f", b.seconds) + " s, speedup " + fmt("%.2f", speedup) +
             " (>= 1.5), objective diff " + sci(diff) + ", hardware threads " +
             std::to_string(std::thread::hardware_concurrency());
  return r;
}

// ---------------------------------------------------------------- C11

CriterionResult c11(const AcceptanceOptions&) {
  CriterionResult r = named(11, "degeneracy diagnostics");
  CurveSpec s;
  s.example_id = "3.2";
  s.x_min = -1.0;
  s.x_max = 1.0;
  s.count = 201;
  s.mu = {0.005};
  const auto rows = emit_curves(s);
  // interior branch: starts in the interior of [-1, 2], away from both bounds
  std::vector<int> interior;
  for (const auto& row : rows)
    if (row.converged && row.y > -0.5 && row.y < 1.5 &&
        std::find(interior.begin(), interior.end(), row.branch) == interior.end())
      interior.push_back(row.branch);
  double sigma = INFINITY, at = NAN;
  for (const auto& row : rows) {
    if (!row.converged || std::abs(row.x) > 0.05) continue;
    if (std::find(interior.begin(), interior.end(), row.branch) == interior.end()) continue;
    if (row.sigma_min < sigma) sigma = row.sigma_min, at = row.x;
  }
  const bool flagged = sigma <= 1e-8;

  s.example_id = "3.1";
  s.x_min = 0.0;
  s.x_max = 2.0;
  s.mu = {1.0, 0.5, 0.1};
  const auto r31 = emit_curves(s);
  double blow = -INFINITY;
  int blue = -1;
  for (const auto& row : r31)
    if (row.mu == 0.1 && row.converged && row.x == 0.0 && row.y < -1.0) blue = row.branch;
  double v05 = NAN, v99 = NAN;
  for (const auto& row : r31) {
    if (row.mu != 0.1 || row.branch != blue || row.refined) continue;
    if (std::abs(row.x - 0.5) < 1e-12) v05 = row.value;
    if (std::abs(row.x - 0.99) < 1e-12) v99 = row.value;
  }
  if (std::isfinite(v05) && std::isfinite(v99)) blow = v99 - v05;
  r.pass = flagged && blow > 10.0;
  r.detail = "Example 3.2 mu=0.005: min sigma on interior branch near x=0 is " + sci(sigma) +
             " at x=" + fmt("%.5f", at) + (flagged ? " (flagged)" : " (not flagged)") +
             "; Example 3.1 mu=0.1 blue branch f(0.99)-f(0.5) = " + fmt("%.4f", blow) + " (> 10)";
  return r;
}

}  // namespace

std::vector<int> criterion_ids() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}; }

CriterionResult run_criterion(int id, const AcceptanceOptions& opts) {
  using Fn = CriterionResult (*)(const AcceptanceOptions&);
  static const Fn table[] = {c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11};
  if (id < 1 || id > 11) throw std::out_of_range("unknown criterion " + std::to_string(id));
  const auto t0 = Clock::now();
  CriterionResult r;
  try {
    r = table[id - 1](opts);
  } catch (const std::exception& e) {
    r.id = id;
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::string format_result(const CriterionResult& r) {
  char id[8];
  std::snprintf(id, sizeof id, "C%02d", r.id);
  return std::string(r.pass ? "PASS " : "FAIL ") + id + " " + r.name + ": " + r.detail + " [" +
         fmt("%.1f", r.seconds) + " s]";
}

}  // namespace tsd
