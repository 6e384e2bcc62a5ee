#include <cmath>
#include <limits>

#include "doctest.h"
#include "tsd/benchgen.hpp"
#include "tsd/finite_diff.hpp"
#include "tsd/model.hpp"

using namespace tsd;

namespace {

double rel_err(const Mat& a, const Mat& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

// Checks every oracle of a subproblem against central differences.
void check_sub_oracles(const SubproblemDef& d, const Vec& y, const Vec& xt, double tol) {
  const int n = d.n, nc = d.nc();
  Vec z(n + nc);
  z << y, xt;
  auto split = [&](const Vec& zz) { return std::pair<Vec, Vec>{zz.head(n), zz.tail(nc)}; };
  const double h = default_fd_step(z);
  auto f = [&](const Vec& zz) {
    auto [a, b] = split(zz);
    return d.fn->objective(a, b);
  };
  auto g = [&](const Vec& zz) {
    auto [a, b] = split(zz);
    return d.fn->gradient(a, b);
  };
  auto c = [&](const Vec& zz) {
    auto [a, b] = split(zz);
    return d.fn->constraints(a, b);
  };
  Vec w = Vec::LinSpaced(d.m, 0.3, 1.7);
  auto cw = [&](const Vec& zz) {
    auto [a, b] = split(zz);
    return Vec(d.fn->jacobian(a, b).transpose() * w);
  };
  CHECK(rel_err(d.fn->gradient(y, xt), finite_diff_gradient(f, z, h)) <= tol);
  CHECK(rel_err(d.fn->hessian(y, xt), finite_diff_jacobian(g, z, h)) <= tol);
  CHECK(rel_err(d.fn->jacobian(y, xt), finite_diff_jacobian(c, z, h)) <= tol);
  CHECK(rel_err(d.fn->constraint_hessian(y, xt, w), finite_diff_jacobian(cw, z, h)) <= tol);
}

}  // namespace

TEST_CASE("finite_diff_gradient of a quadratic") {
  Vec x(2);
  x << 1.0, 2.0;
  const Vec g = finite_diff_gradient([](const Vec& v) { return v.squaredNorm(); }, x, 1e-5);
  CHECK(std::abs(g[0] - 2.0) <= 1e-9);
  CHECK(std::abs(g[1] - 4.0) <= 1e-9);
  const Vec z = finite_diff_gradient([](const Vec&) { return 3.0; }, x);
  CHECK(z.norm() == 0.0);
}

TEST_CASE("finite_diff_gradient of the closed-form solution smoothing") {
  const double mu = 1.0;
  auto fsol = [mu](const Vec& v) {
    const double x = v[0];
    return mu + std::sqrt(2.0) / 2.0 * x - std::sqrt(mu * mu + 2.0 * x * x);
  };
  const Vec g = finite_diff_gradient(fsol, Vec::Constant(1, 1.0));
  CHECK(g[0] == doctest::Approx(std::sqrt(2.0) / 2.0 - 2.0 / std::sqrt(3.0)).epsilon(1e-8));
  CHECK(g[0] == doctest::Approx(-0.4476).epsilon(1e-3));
}

TEST_CASE("finite_diff_gradient names the non-finite component") {
  Vec x = Vec::Zero(3);
  auto f = [](const Vec& v) {
    return v[2] > 0.0 ? std::numeric_limits<double>::quiet_NaN() : v.sum();
  };
  try {
    finite_diff_gradient(f, x);
    FAIL("expected an error");
  } catch (const FiniteDiffError& e) {
    CHECK(e.component() == 2);
  }
}

TEST_CASE("monolithic assembly dimensions") {
  auto ex = example("3.1");
  auto mp = assemble_monolithic(ex.problem, 0.1);
  CHECK(mp.dim() == 1 + 1 + 1 + 2);
  CHECK(mp.equality_count() == 3);
  CHECK(mp.inequality_count() == 2);

  TwoStageProblem empty;
  empty.n0 = 2;
  empty.m0 = 0;
  auto cm = std::make_shared<CallableMaster>();
  cm->n = 2;
  cm->f = [](const Vec& x) { return x.squaredNorm(); };
  empty.master = cm;
  auto mp0 = assemble_monolithic(empty, 0.5);
  CHECK(mp0.dim() == 2);
  Vec x(2);
  x << 0.3, -0.2;
  CHECK(mp0.objective(x) == empty.master->objective(x));
  CHECK_THROWS_AS(assemble_monolithic(empty, 0.0), ModelError);
}

TEST_CASE("monolithic objective equals the decomposed sum") {
  QcqpDims dims;
  dims.N = 2;
  dims.ni = 5;
  dims.mi = 6;
  dims.nc = 2;
  dims.m0 = 1;
  auto prob = to_problem(generate_qcqp(dims, 3));
  const double mu = 0.1;
  Vec x = Vec::Constant(prob.n0, 0.1);
  std::vector<SubproblemState> states;
  double dec = prob.master->objective(x);
  for (const auto& d : prob.subproblems) {
    SubproblemState st = cold_start(d, x, mu);
    st.y.head(5).setConstant(0.05);
    st.s = (-d.fn->constraints(st.y, st.x_copy)).cwiseMax(1e-3);
    dec += barrier_value(d, st, mu);
    states.push_back(st);
  }
  auto mp = assemble_monolithic(prob, mu);
  const Vec z = mp.pack(x, states);
  CHECK(mp.dim() == prob.n0 + 2 * (prob.subproblems[0].n + 2 + prob.subproblems[0].m));
  CHECK(std::abs(mp.objective(z) - dec) <= 1e-14 * std::max(1.0, std::abs(dec)));
  auto mp2 = assemble_monolithic(prob, mu);
  CHECK(mp2.objective(z) == mp.objective(z));
  const Vec r = mp.equality_residual(z);
  int o = 0;
  for (int i = 0; i < 2; ++i) {
    const auto& d = prob.subproblems[i];
    const Vec ci = d.fn->constraints(states[i].y, states[i].x_copy) + states[i].s;
    CHECK((r.segment(o, d.m) - ci).norm() == 0.0);
    o += d.m + d.nc();
  }
}

TEST_CASE("corpus oracles agree with finite differences") {
  for (const auto& ex : example_corpus()) {
    CAPTURE(ex.id);
    const auto& d = ex.problem.subproblems[0];
    for (double y : {-0.7, 0.3, 1.4}) {
      for (double x : {-0.4, 0.5}) {
        check_sub_oracles(d, Vec::Constant(1, y), Vec::Constant(1, x), 1e-6);
      }
    }
    Vec x = Vec::Constant(1, 0.3);
    auto c = [&](const Vec& v) { return ex.problem.master->constraints(v); };
    CHECK(rel_err(ex.problem.master->jacobian(x), finite_diff_jacobian(c, x)) <= 1e-6);
  }
}

TEST_CASE("QCQP oracles agree with finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    QcqpDims dims;
    dims.N = 2;
    dims.ni = 6;
    dims.mi = 8;
    dims.nc = 2;
    dims.m0 = 2;
    auto prob = to_problem(generate_qcqp(dims, seed));
    Rng rng(seed, 99);
    Vec x(prob.n0);
    for (int k = 0; k < prob.n0; ++k) x[k] = rng.uniform(-1, 1);
    auto f0 = [&](const Vec& v) { return prob.master->objective(v); };
    auto g0 = [&](const Vec& v) { return prob.master->gradient(v); };
    auto c0 = [&](const Vec& v) { return prob.master->constraints(v); };
    CHECK(rel_err(prob.master->gradient(x), finite_diff_gradient(f0, x)) <= 1e-6);
    CHECK(rel_err(prob.master->hessian(x), finite_diff_jacobian(g0, x)) <= 1e-6);
    CHECK(rel_err(prob.master->jacobian(x), finite_diff_jacobian(c0, x)) <= 1e-6);
    for (const auto& d : prob.subproblems) {
      Vec y(d.n);
      for (int k = 0; k < d.n; ++k) y[k] = rng.uniform(-2, 2);
      check_sub_oracles(d, y, d.project(x), 1e-6);
    }
  }
}
