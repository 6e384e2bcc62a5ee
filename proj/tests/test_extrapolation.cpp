#include <cmath>

#include "doctest.h"
#include "tsd/acceptance.hpp"
#include "tsd/benchgen.hpp"
#include "tsd/extrapolation.hpp"

using namespace tsd;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r[i++] = x;
  return r;
}

double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / (1.0 + b.norm()); }

struct Converged {
  TwoStageProblem problem;
  FullPrimalDual w;
  double mu;
};

Converged converge_qcqp(unsigned seed, int N, int ni, int nc, double mu) {
  QcqpDims d;
  d.N = N;
  d.ni = ni;
  d.mi = 2 * ni;
  d.nc = nc;
  d.n0 = std::max(nc, 3);
  Converged c{to_problem(generate_qcqp(d, seed)), {}, mu};
  WorkerPool pool(1);
  SubsolverOptions so;
  so.tolerance = SubsolverOptions::tolerance_for(mu, 0.1);
  SubproblemSet subs(c.problem, so, pool);
  MasterSolver ms(c.problem, subs);
  auto r = ms.solve(MasterState::initial(c.problem, Vec::Zero(c.problem.n0), ms.options()), mu);
  REQUIRE(r.ok());
  c.w = primal_dual_from(c.problem, r);
  return c;
}

}  // namespace

TEST_CASE("fraction_to_boundary") {
  CHECK(fraction_to_boundary(vec({1, 2}), vec({3, 4}), vec({0, 1}), vec({2, 0}), 0.5) == 1.0);
  CHECK(fraction_to_boundary(vec({1}), vec({1}), vec({-1}), vec({0}), 0.01) ==
        doctest::Approx(0.01));
  CHECK(fraction_to_boundary(vec({1, 2}), vec({1, 1}), vec({-0.5, -4}), vec({0, 0}), 0.5) ==
        doctest::Approx(0.25));
  // multiplier side binds
  CHECK(fraction_to_boundary(vec({1}), vec({2}), vec({0}), vec({-4}), 0.5) ==
        doctest::Approx(0.25));
}

TEST_CASE("mu schedule") {
  MuSchedule s;
  CHECK(s.next(0.1) == doctest::Approx(0.02));
  CHECK(s.next(0.01) == doctest::Approx(0.001));
  CHECK(s.next(2e-6) == 1e-6);
  CHECK_NOTHROW(s.validate(0.1));
  double mu = 0.1, prev = 1.0;
  int stages = 0;
  while (mu > s.mu_tol) {
    CHECK(mu < prev);
    prev = mu;
    mu = s.next(mu);
    ++stages;
  }
  CHECK(mu == s.mu_tol);
  CHECK(stages < 10);
  MuSchedule bad = s;
  bad.cmu2 = 2.0;
  CHECK_THROWS_AS(bad.validate(0.1), MasterError);
  bad = s;
  bad.mu_tol = 0.2;
  CHECK_THROWS_AS(bad.validate(0.1), MasterError);
}

TEST_CASE("combined residual complementarity entries") {
  auto ex = example("3.1", 0.0);
  FullPrimalDual w;
  w.x = Vec::Constant(1, 1.0);
  w.s0 = vec({2, 1});
  w.lambda0 = vec({0, 0});
  w.v.push_back(cold_start(ex.problem.subproblems[0], w.x, 0.1));
  auto r = combined_residual(ex.problem, w, 0.1);
  CHECK(r.complementarity0[0] == 0.0);
  w.s0 = vec({-1, 1});
  r = combined_residual(ex.problem, w, 0.1);
  CHECK(r.complementarity0[0] >= 1.0);
  CHECK(theta(ex.problem, w, 0.1) >= 1.0);
  CHECK(r.norm() == doctest::Approx(r.stacked().lpNorm<Eigen::Infinity>()));
}

TEST_CASE("dense subproblem jacobian matches finite differences of F") {
  auto ex = example("3.1", 0.0);
  const auto& d = ex.problem.subproblems[0];
  const Vec x = Vec::Constant(1, 0.4);
  SubproblemState st = cold_start(d, x, 0.1);
  st.lambda = vec({0.3, 0.7});
  st.eta = vec({0.2});
  const Mat D = dense_subproblem_jacobian(d, st);
  const Vec v = st.pack();
  const double h = 1e-6;
  for (int k = 0; k < v.size(); ++k) {
    Vec vp = v, vm = v;
    vp[k] += h;
    vm[k] -= h;
    const auto sp = SubproblemState::unpack(vp, d.n, d.nc(), d.m);
    const auto sm = SubproblemState::unpack(vm, d.n, d.nc(), d.m);
    const Vec col = (kkt_residual(d, sp, x, 0.1).stacked() - kkt_residual(d, sm, x, 0.1).stacked()) / (2 * h);
    CAPTURE(k);
    CHECK((col - D.col(k)).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("step is zero at a point solving F(w; mu_next) = 0") {
  auto c = converge_qcqp(5, 1, 4, 2, 0.1);
  // tighten the subproblems to the same mu so the stage point is exact
  WorkerPool pool(1);
  ExtrapolationOptions o;
  for (int it = 0; it < 30; ++it) {
    auto st = extrapolation_step(c.problem, c.w, c.mu, 0.995, o, pool);
    REQUIRE(st.ok);
    c.w = st.w;
  }
  auto st = extrapolation_step(c.problem, c.w, c.mu, 0.995, o, pool);
  REQUIRE(st.ok);
  CHECK(theta(c.problem, c.w, c.mu) <= 1e-9);
  CHECK(st.dx.lpNorm<Eigen::Infinity>() <= 1e-8);
  CHECK(st.alpha == 1.0);
}

TEST_CASE("Schur step matches the dense full-KKT oracle") {
  for (unsigned seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    auto c = converge_qcqp(seed, 2, 5, 2, 0.1);
    WorkerPool pool(1);
    const double mu_next = 0.02;
    auto st = extrapolation_step(c.problem, c.w, mu_next, 0.995, {}, pool);
    REQUIRE(st.ok);
    auto dense = dense_extrapolation_step(c.problem, c.w, mu_next, st.qp.active);
    REQUIRE(dense.ok);
    CHECK(rel_err(st.dx, dense.dx) <= 1e-8);
    CHECK(rel_err(st.dlambda0, dense.dlambda0) <= 1e-8);
    for (int i = 0; i < 2; ++i) CHECK(rel_err(st.dv[i], dense.dv[i]) <= 1e-8);
  }
}

TEST_CASE("extrapolated iterate keeps a fraction of every slack and multiplier") {
  auto c = converge_qcqp(4, 2, 5, 2, 0.1);
  WorkerPool pool(1);
  MuSchedule s;
  const double mu_next = s.next(c.mu), tau = s.tau(mu_next);
  auto st = extrapolation_step(c.problem, c.w, mu_next, tau, {}, pool);
  REQUIRE(st.ok);
  for (int i = 0; i < 2; ++i) {
    CHECK((st.w.v[i].s.array() >= (1 - tau) * c.w.v[i].s.array()).all());
    CHECK((st.w.v[i].lambda.array() >= (1 - tau) * c.w.v[i].lambda.array()).all());
  }
}

TEST_CASE("extrapolation loop on a convex QCQP") {
  QcqpDims d;
  d.N = 2;
  d.ni = 5;
  d.mi = 10;
  d.nc = 2;
  d.n0 = 3;
  d.convex = true;
  const TwoStageProblem p = to_problem(generate_qcqp(d, 11));
  WorkerPool pool(1);
  const double mu = 0.1;
  SubsolverOptions so;
  so.tolerance = SubsolverOptions::tolerance_for(mu, 0.1);
  SubproblemSet subs(p, so, pool);
  MasterSolver ms(p, subs);
  auto r = ms.solve(MasterState::initial(p, Vec::Zero(p.n0), ms.options()), mu);
  REQUIRE(r.ok());
  const MuSchedule sched;
  auto loop = extrapolation_loop(p, primal_dual_from(p, r), mu, sched, {}, pool);
  REQUIRE(!loop.log.empty());
  CHECK(loop.mu < mu);
  for (const auto& rec : loop.log) {
    CHECK(rec.mu_next == sched.next(rec.mu));
    CHECK(rec.accepted == (rec.theta_after <= sched.c0 * rec.mu_next));
  }
  for (size_t l = 0; l + 1 < loop.log.size(); ++l) CHECK(loop.log[l].accepted);
}
