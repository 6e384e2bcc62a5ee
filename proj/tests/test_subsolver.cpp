#include <cmath>

#include "doctest.h"
#include "tsd/benchgen.hpp"
#include "tsd/finite_diff.hpp"
#include "tsd/subsolver.hpp"

using namespace tsd;

namespace {

const double kR2 = std::sqrt(2.0);

// Dense Jacobian of F in the ordering (y, xt, s, lambda, eta), assembled
// straight from the oracles.
Mat dense_kkt_jacobian(const SubproblemDef& d, const SubproblemState& st) {
  const int n = d.n, nc = d.nc(), m = d.m, nz = n + nc;
  const int N = nz + 2 * m + nc;
  Mat K = Mat::Zero(N, N);
  Mat W = d.fn->hessian(st.y, st.x_copy) + d.fn->constraint_hessian(st.y, st.x_copy, st.lambda);
  const Mat J = d.fn->jacobian(st.y, st.x_copy);
  K.topLeftCorner(nz, nz) = W;
  K.block(0, nz + m, nz, m) = J.transpose();
  for (int k = 0; k < nc; ++k) K(n + k, nz + 2 * m + k) = 1.0;
  for (int j = 0; j < m; ++j) {
    K(nz + j, nz + j) = st.lambda[j];
    K(nz + j, nz + m + j) = st.s[j];
  }
  K.block(nz + m, 0, m, nz) = J;
  K.block(nz + m, nz, m, m) = Mat::Identity(m, m);
  for (int k = 0; k < nc; ++k) K(nz + 2 * m + k, n + k) = 1.0;
  return K;
}

std::shared_ptr<const SubproblemFunctions> box_quadratic() {
  // min (y - xt)^2  s.t. -10 <= y <= 10
  auto fn = std::make_shared<CallableSubproblem>();
  fn->f = [](const Vec& y, const Vec& xt) { return (y[0] - xt[0]) * (y[0] - xt[0]); };
  fn->grad = [](const Vec& y, const Vec& xt) {
    Vec g(2);
    g << 2 * (y[0] - xt[0]), -2 * (y[0] - xt[0]);
    return g;
  };
  fn->hess = [](const Vec&, const Vec&) {
    Mat H(2, 2);
    H << 2, -2, -2, 2;
    return H;
  };
  fn->c = [](const Vec& y, const Vec&) {
    Vec c(2);
    c << y[0] - 10, -10 - y[0];
    return c;
  };
  fn->jac = [](const Vec&, const Vec&) {
    Mat J(2, 2);
    J << 1, 0, -1, 0;
    return J;
  };
  fn->chess = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  return fn;
}

SubproblemDef one_dim_def(std::shared_ptr<const SubproblemFunctions> fn, int m) {
  SubproblemDef d;
  d.n = 1;
  d.m = m;
  d.projection = {0};
  d.lower = Vec::Constant(1, -INFINITY);
  d.upper = Vec::Constant(1, INFINITY);
  d.fn = std::move(fn);
  return d;
}

Vec one(double v) { return Vec::Constant(1, v); }

double fsol_closed(double x, double mu) {
  return mu + kR2 / 2 * x - std::sqrt(mu * mu + 2 * x * x);
}

}  // namespace

TEST_CASE("Example 2.1 closed-form subproblem solution") {
  auto ex = example("2.1");
  const auto& d = ex.problem.subproblems[0];
  for (double y0 : {0.1, 0.5, 0.9}) {
    SubproblemState warm = cold_start(d, one(1.0), 1.0);
    warm.y[0] = y0;
    auto r = solve_subproblem(d, one(1.0), 1.0, warm);
    REQUIRE(r.status == SolveStatus::Converged);
    const double y11 = (1 + kR2 - std::sqrt(3.0)) / (2 * kR2);
    CHECK(std::abs(r.state.y[0] - y11) <= 1e-6);
    CHECK(std::abs((r.state.x_copy[0] - r.state.y[0]) - (-1 + kR2 + std::sqrt(3.0)) / (2 * kR2)) <=
          1e-6);
    CHECK(r.state.y[0] == doctest::Approx(0.24121).epsilon(1e-4));
  }
}

TEST_CASE("Example 3.1 cold start from y = 0") {
  auto ex = example("3.1", 0.0);
  auto r = solve_subproblem(ex.problem.subproblems[0], one(0.4), 0.1, std::nullopt);
  REQUIRE(r.status == SolveStatus::Converged);
  CHECK(std::abs(r.state.y[0] - (-0.278)) <= 0.01);
}

TEST_CASE("symmetric box problem") {
  auto d = one_dim_def(box_quadratic(), 2);
  const double mu = 1e-6;
  SubsolverOptions o;
  o.tolerance = 1e-12;
  auto r = solve_subproblem(d, one(0.0), mu, std::nullopt, o);
  REQUIRE(r.status == SolveStatus::Converged);
  CHECK(std::abs(r.state.y[0]) <= 1e-10);
  CHECK(r.state.s[0] == doctest::Approx(10.0));
  CHECK(r.state.s[1] == doctest::Approx(10.0));
  CHECK(r.state.lambda[0] == doctest::Approx(mu / 10));
  CHECK(r.state.lambda[1] == doctest::Approx(mu / 10));
}

TEST_CASE("newton_step: zero step at a converged state") {
  auto ex = example("2.1");
  const auto& d = ex.problem.subproblems[0];
  SubsolverOptions o;
  o.tolerance = 1e-14;
  auto r = solve_subproblem(d, one(1.0), 1.0, std::nullopt, o);
  auto step = newton_step(d, r.state, one(1.0), 1.0);
  REQUIRE(step);
  CHECK(step->dv.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("newton_step: hand-assembled system for min y^2 s.t. y >= -1") {
  auto fn = std::make_shared<CallableSubproblem>();
  fn->f = [](const Vec& y, const Vec&) { return y[0] * y[0]; };
  fn->grad = [](const Vec& y, const Vec&) {
    Vec g(2);
    g << 2 * y[0], 0;
    return g;
  };
  fn->hess = [](const Vec&, const Vec&) {
    Mat H = Mat::Zero(2, 2);
    H(0, 0) = 2;
    return H;
  };
  fn->c = [](const Vec& y, const Vec&) { return one(-1 - y[0]); };
  fn->jac = [](const Vec&, const Vec&) {
    Mat J(1, 2);
    J << -1, 0;
    return J;
  };
  fn->chess = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  auto d = one_dim_def(fn, 1);
  const double mu = 0.1, x = 0.0;
  SubproblemState st;
  st.y = one(0.5);
  st.x_copy = one(0.0);
  st.s = one(1.5);
  st.lambda = one(mu / 1.5);
  st.eta = one(0.0);
  // unknowns (y, xt, s, lam, eta)
  const double y = 0.5, s = 1.5, l = mu / 1.5;
  Mat K(5, 5);
  K << 2, 0, 0, -1, 0,
       0, 0, 0, 0, 1,
       0, 0, l, s, 0,
       -1, 0, 1, 0, 0,
       0, 1, 0, 0, 0;
  Vec F(5);
  F << 2 * y - l, 0.0, s * l - mu, -1 - y + s, 0.0 - x;
  const Vec expect = K.fullPivLu().solve(-F);
  auto step = newton_step(d, st, one(x), mu);
  REQUIRE(step);
  CHECK((step->dv - expect).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("newton_step agrees with a dense LU oracle on Example 3.1") {
  auto ex = example("3.1", 0.0);
  const auto& d = ex.problem.subproblems[0];
  const Vec x = one(0.4);
  SubproblemState st = cold_start(d, x, 0.1);
  for (int k = 0; k < 3; ++k) {
    auto step = newton_step(d, st, x, 0.1);
    REQUIRE(step);
    const Mat K = dense_kkt_jacobian(d, st);
    const Vec F = kkt_residual(d, st, x, 0.1).stacked();
    const Vec oracle = K.fullPivLu().solve(-F);
    CHECK((step->dv - oracle).norm() <= 1e-10 * std::max(1.0, oracle.norm()));
    CHECK((K * step->dv + F).norm() <= 1e-10 * std::max(1.0, F.norm()));
    auto ls = line_search(d, st, step->dv, x, 0.1);
    st = SubproblemState::unpack(st.pack() + ls.beta * step->dv, 1, 1, 2);
  }
}

TEST_CASE("line_search") {
  auto d = one_dim_def(box_quadratic(), 2);
  const double mu = 0.1;
  const Vec x = one(0.3);
  SubsolverOptions tight;
  tight.tolerance = 1e-13;
  auto sol = solve_subproblem(d, x, mu, std::nullopt, tight);
  REQUIRE(sol.status == SolveStatus::Converged);

  SUBCASE("full step near the solution") {
    SubproblemState st = sol.state;
    st.y[0] += 1e-3;
    auto step = newton_step(d, st, x, mu);
    CHECK(line_search(d, st, step->dv, x, mu).beta == 1.0);
  }
  SUBCASE("boundary cap") {
    SubproblemState st = sol.state;
    st.s[0] = 1.0;
    Vec dv = Vec::Zero(st.size());
    dv[2] = -2.0;
    CHECK(line_search(d, st, dv, x, mu).beta <= 0.4975 + 1e-15);
  }
  SUBCASE("Armijo rejection halves the step") {
    SubproblemState st = sol.state;
    st.y[0] += 0.05;
    auto step = newton_step(d, st, x, mu);
    const Vec doubled = 2.0 * step->dv;
    auto ls = line_search(d, st, doubled, x, mu);
    CHECK(ls.beta == 0.5);
    CHECK(ls.trials == 2);
  }
}

TEST_CASE("evaluate_smoothed: Example 2.1 solution smoothing") {
  auto ex = example("2.1");
  const auto& d = ex.problem.subproblems[0];
  auto out = evaluate_smoothed(d, one(1.0), 1.0, std::nullopt, SmoothingKind::Solution);
  REQUIRE(out.ok());
  CHECK(std::abs(out.eval->value - fsol_closed(1.0, 1.0)) <= 1e-8);
  CHECK(out.eval->value == doctest::Approx(-0.02494).epsilon(1e-3));
  const double h = -2.0 / std::pow(3.0, 1.5);
  CHECK(std::abs(out.eval->hessian(0, 0) - h) / std::abs(h) <= 1e-6);
  const double g = kR2 / 2 - 2.0 / std::sqrt(3.0);
  CHECK(std::abs(out.eval->gradient[0] - g) <= 1e-8);
}

TEST_CASE("evaluate_smoothed: Example 2.1 objective smoothing is convex") {
  auto ex = example("2.1");
  const auto& d = ex.problem.subproblems[0];
  const int n = 200;
  std::vector<double> v(n);
  std::optional<SubproblemState> warm;
  for (int k = 0; k < n; ++k) {
    const double x = 0.1 + 1.9 * k / (n - 1);
    auto out = evaluate_smoothed(d, one(x), 1.0, warm, SmoothingKind::Objective);
    REQUIRE(out.ok());
    CHECK(out.eval->gradient[0] == -out.solve.state.eta[0]);
    CHECK(out.eval->hessian(0, 0) >= 0.0);
    v[k] = out.eval->value;
    warm = out.solve.state;
  }
  for (int k = 1; k + 1 < n; ++k) CHECK(v[k - 1] - 2 * v[k] + v[k + 1] >= -1e-8);
}

TEST_CASE("evaluate_smoothed: QCQP derivatives match finite differences") {
  QcqpDims dims;
  dims.N = 1;
  dims.ni = 10;
  dims.mi = 20;
  dims.nc = 3;
  dims.m0 = 1;
  auto prob = to_problem(generate_qcqp(dims, 11));
  const auto& d = prob.subproblems[0];
  const double mu = 0.1;
  SubsolverOptions o;
  o.tolerance = 1e-13;
  Vec x = Vec::Constant(prob.n0, 0.2);
  auto base = evaluate_smoothed(d, x, mu, std::nullopt, SmoothingKind::Objective, o);
  REQUIRE(base.ok());
  const SubproblemState ref = base.solve.state;
  auto value = [&](const Vec& xx) {
    auto r = evaluate_smoothed(d, xx, mu, ref, SmoothingKind::Objective, o);
    return r.eval->value;
  };
  auto grad = [&](const Vec& xx) {
    auto r = evaluate_smoothed(d, xx, mu, ref, SmoothingKind::Objective, o);
    return Vec(r.eval->gradient);
  };
  const Vec gfd = finite_diff_gradient(value, x);
  const Mat hfd = finite_diff_jacobian(grad, x);
  CHECK((base.eval->gradient - gfd).norm() / std::max(1.0, gfd.norm()) <= 1e-5);
  CHECK((base.eval->hessian - hfd).norm() / std::max(1.0, hfd.norm()) <= 1e-4);
}

TEST_CASE("check_nondegeneracy") {
  auto ex = example("3.2");
  const auto& d = ex.problem.subproblems[0];
  SUBCASE("interior minimizer at x = 0.5") {
    SubproblemDef d2 = d;
    d2.y_start = one(0.0);
    auto r = solve_subproblem(d2, one(0.5), 0.01, std::nullopt);
    REQUIRE(r.status == SolveStatus::Converged);
    CHECK(std::abs(r.state.y[0]) <= 0.05);
    CHECK(check_nondegeneracy(d2, r.state, one(0.5)).nondegenerate);
  }
  SUBCASE("x = 0 with vanishing mu") {
    SubproblemDef d2 = d;
    d2.y_start = one(0.5);
    SubsolverOptions o;
    o.seek_minimizer = false;
    auto r = solve_subproblem(d2, one(0.0), 1e-10, std::nullopt, o);
    REQUIRE(r.status == SolveStatus::Converged);
    auto rep = check_nondegeneracy(d2, r.state, one(0.0));
    CHECK(rep.sigma_min < 1e-8);
    CHECK_FALSE(rep.nondegenerate);
  }
  SUBCASE("strictly convex subproblem") {
    auto db = one_dim_def(box_quadratic(), 2);
    for (double x : {-3.0, 0.0, 4.0}) {
      auto r = solve_subproblem(db, one(x), 0.1, std::nullopt);
      REQUIRE(r.status == SolveStatus::Converged);
      CHECK(check_nondegeneracy(db, r.state, one(x)).nondegenerate);
    }
  }
}

TEST_CASE("nonconvergence is signalled at the iteration cap") {
  auto ex = example("3.1", 0.0);
  SubsolverOptions o;
  o.max_iterations = 1;
  auto r = solve_subproblem(ex.problem.subproblems[0], one(0.4), 0.1, std::nullopt, o);
  CHECK(r.status == SolveStatus::NonConvergence);
  CHECK(r.residual > 0.0);
}

TEST_CASE("positivity and residual contract on random QCQPs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    QcqpDims dims;
    dims.N = 1;
    dims.ni = 8;
    dims.mi = 12;
    dims.nc = 2;
    auto prob = to_problem(generate_qcqp(dims, seed));
    const auto& d = prob.subproblems[0];
    Vec x = Vec::Constant(prob.n0, 0.3);
    auto r = solve_subproblem(d, x, 0.05, std::nullopt);
    REQUIRE(r.status == SolveStatus::Converged);
    CHECK(r.state.positive());
    CHECK(kkt_residual(d, r.state, x, 0.05).norm() <= 1e-9);
    CHECK((r.state.x_copy - d.project(x)).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("warm starts follow the solution map of Example 3.1") {
  auto ex = example("3.1");
  const auto& d = ex.problem.subproblems[0];
  const double mu = 0.1, x0 = 0.4;
  SubsolverOptions trace;
  trace.seek_minimizer = false;
  trace.tolerance = 1e-12;
  for (double ystart : {0.0, -2.3}) {
    SubproblemDef ds = d;
    ds.y_start = one(ystart);
    auto ref = solve_subproblem(ds, one(x0), mu, std::nullopt);
    REQUIRE(ref.status == SolveStatus::Converged);
    const bool blue = ref.state.y[0] < -1.0;
    int switches = 0;
    for (int k = 0; k < 100; ++k) {
      const double p = -0.05 + 0.1 * k / 99.0;
      auto r = solve_subproblem(d, one(x0 + p), mu, ref.state);
      REQUIRE(r.status == SolveStatus::Converged);
      // continuation reference along the same map
      SubproblemState cont = ref.state;
      const int steps = 50;
      for (int j = 1; j <= steps; ++j) {
        auto c = solve_subproblem(d, one(x0 + p * j / steps), mu, cont, trace);
        REQUIRE(c.status == SolveStatus::Converged);
        cont = c.state;
      }
      CHECK(std::abs(r.state.y[0] - cont.y[0]) <= 1e-6);
      const double own = blue ? -2.0 - (x0 + p) : -(x0 + p);
      const double other = blue ? -(x0 + p) : -2.0 - (x0 + p);
      CHECK(std::abs(r.state.y[0] - own) <= 0.15);
      if (std::abs(r.state.y[0] - own) >= std::abs(r.state.y[0] - other)) ++switches;
    }
    CHECK(switches == 0);
  }
}

TEST_CASE("local quadratic rate on Example 2.1") {
  auto ex = example("2.1");
  const auto& d = ex.problem.subproblems[0];
  SubsolverOptions o;
  o.tolerance = 1e-14;
  auto ref = solve_subproblem(d, one(1.0), 0.1, std::nullopt, o);
  auto r = solve_subproblem(d, one(1.01), 0.1, ref.state, o);
  REQUIRE(r.status == SolveStatus::Converged);
  for (double b : r.step_history) CHECK(b == 1.0);
  const auto& h = r.residual_history;
  REQUIRE(h.size() >= 3);
  const double bound0 = h[1] / (h[0] * h[0]);
  for (size_t j = 1; j + 1 < h.size(); ++j) {
    // below this the residual is rounding noise
    if (h[j + 1] < 1e-14) break;
    CHECK(h[j + 1] / (h[j] * h[j]) <= 10.0 * bound0);
  }
}

TEST_CASE("Subsolver warm state moves only on accept") {
  auto ex = example("3.1", 0.0);
  Subsolver s(ex.problem.subproblems[0]);
  auto a = s.trial(one(0.4), 0.1, SmoothingKind::Objective);
  REQUIRE(a.ok());
  CHECK_FALSE(s.has_warm_state());
  s.accept(a);
  CHECK(s.warm_state().y[0] == a.solve.state.y[0]);
  auto b = s.trial(one(0.5), 0.1, SmoothingKind::Objective);
  CHECK(s.warm_state().y[0] == a.solve.state.y[0]);
  CHECK(s.solve_count() == 2);
  CHECK(s.newton_iterations() == a.newton_iterations + b.newton_iterations);
}
