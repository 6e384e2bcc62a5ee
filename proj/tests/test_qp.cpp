#include <cmath>
#include <random>

#include "doctest.h"
#include "tsd/qp.hpp"

using namespace tsd;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

L1Qp random_qp(std::mt19937_64& rng, bool convex) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<int> dn(1, 10), dm(0, 6);
  const int n = dn(rng), m = dm(rng);
  L1Qp q;
  q.g = Vec::NullaryExpr(n, [&] { return U(rng); });
  const Mat B = Mat::NullaryExpr(n, n, [&] { return U(rng); });
  q.H = convex ? Mat(B * B.transpose()) : Mat(0.5 * (B + B.transpose()));
  q.J = Mat::NullaryExpr(m, n, [&] { return U(rng); });
  q.c = Vec::NullaryExpr(m, [&] { return U(rng); });
  q.penalty = 0.5 + 10.0 * std::abs(U(rng));
  q.radius = 0.1 + 2.0 * std::abs(U(rng));
  q.equality.resize(m);
  for (int j = 0; j < m; ++j) q.equality[j] = U(rng) > 0.6;
  return q;
}

}  // namespace

TEST_CASE("dense QP: bound-constrained least squares") {
  // min 0.5||z - (2, -3)||^2  s.t.  -1 <= z <= 1
  DenseQp qp;
  qp.G = Mat::Identity(2, 2);
  qp.h = v2(-2.0, 3.0);
  qp.A.resize(4, 2);
  qp.A << 1, 0, 0, 1, -1, 0, 0, -1;
  qp.b = Vec::Ones(4);
  auto r = solve_dense_qp(qp);
  REQUIRE(r.converged);
  CHECK(std::abs(r.z[0] - 1.0) <= 1e-10);
  CHECK(std::abs(r.z[1] + 1.0) <= 1e-10);
  CHECK(std::abs(r.u[0] - 1.0) <= 1e-9);
  CHECK(std::abs(r.u[3] - 2.0) <= 1e-9);
}

TEST_CASE("solve_l1qp: unconstrained Newton step") {
  L1Qp q;
  q.g = v2(1, 0);
  q.H = Mat::Identity(2, 2);
  q.J.resize(0, 2);
  q.c.resize(0);
  q.penalty = 1.0;
  q.radius = 10.0;
  auto s = solve_l1qp(q);
  CHECK((s.p - v2(-1, 0)).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(s.t.size() == 0);
  CHECK(s.decrease == doctest::Approx(0.5));
}

TEST_CASE("solve_l1qp: linear model goes to the box corner") {
  L1Qp q;
  q.g = v2(1, -2);
  q.H = Mat::Zero(2, 2);
  q.J.resize(0, 2);
  q.c.resize(0);
  q.radius = 0.5;
  auto s = solve_l1qp(q);
  CHECK((s.p - v2(-0.5, 0.5)).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("solve_l1qp: violated linear constraint") {
  // min 0.5||p||^2 + 10 [p1 + p2 + 1]^+ over ||p||_inf <= 10.
  // Active sets by hand: the constraint holds with equality at the optimum,
  // p = -(1/2)(1, 1), multiplier 1/2 < pi.
  L1Qp q;
  q.g = Vec::Zero(2);
  q.H = Mat::Identity(2, 2);
  q.J.resize(1, 2);
  q.J << 1, 1;
  q.c = Vec::Constant(1, 1.0);
  q.penalty = 10.0;
  q.radius = 10.0;
  auto s = solve_l1qp(q);
  CHECK((s.p - v2(-0.5, -0.5)).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(std::abs(s.t[0]) <= 1e-10);
  CHECK(std::abs(s.lambda[0] - 0.5) <= 1e-10);
  CHECK(s.active == std::vector<int>{0});
  CHECK(s.kkt_residual <= 1e-8);

  SUBCASE("penalty below the multiplier leaves the constraint violated") {
    q.penalty = 0.2;
    auto w = solve_l1qp(q);
    CHECK((w.p - v2(-0.2, -0.2)).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK(std::abs(w.t[0] - 0.6) <= 1e-10);
    CHECK(std::abs(w.lambda[0] - 0.2) <= 1e-10);
  }
}

TEST_CASE("solve_l1qp: equality row") {
  L1Qp q;
  q.g = Vec::Zero(2);
  q.H = Mat::Identity(2, 2);
  q.J.resize(1, 2);
  q.J << 1, 1;
  q.c = Vec::Constant(1, -1.0);
  q.equality = {true};
  q.radius = 5.0;
  auto s = solve_l1qp(q);
  CHECK((s.p - v2(0.5, 0.5)).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(std::abs(s.lambda[0] + 0.5) <= 1e-10);
}

TEST_CASE("solve_l1qp: nonconvex model") {
  // H = diag(-1, 1), g = (0.1, 0): the minimizer sits on the box face p1 = -1.
  L1Qp q;
  q.g = v2(0.1, 0.0);
  q.H = Mat::Zero(2, 2);
  q.H(0, 0) = -1.0;
  q.H(1, 1) = 1.0;
  q.J.resize(0, 2);
  q.c.resize(0);
  q.radius = 1.0;
  auto s = solve_l1qp(q);
  CHECK(s.convexified);
  CHECK((s.p - v2(-1.0, 0.0)).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(q.model(s.p) == doctest::Approx(-0.6).epsilon(1e-12));
}

TEST_CASE("cauchy_step examples") {
  L1Qp q;
  q.J.resize(0, 2);
  q.c.resize(0);
  SUBCASE("linear") {
    q.g = v2(2, 0);
    q.H = Mat::Zero(2, 2);
    q.radius = 1.0;
    CHECK((cauchy_step(q).p - v2(-1, 0)).lpNorm<Eigen::Infinity>() <= 1e-14);
  }
  SUBCASE("curved line minimum") {
    q.g = v2(1, 0);
    q.H = Mat::Zero(2, 2);
    q.H(0, 0) = 4;
    q.H(1, 1) = 1;
    q.radius = 10.0;
    // t* = g'g / g'Hg = 1/4
    CHECK((cauchy_step(q).p - v2(-0.25, 0)).lpNorm<Eigen::Infinity>() <= 1e-14);
  }
  SUBCASE("stationary point") {
    q.g = Vec::Zero(2);
    q.H = Mat::Identity(2, 2);
    q.radius = 1.0;
    auto s = cauchy_step(q);
    CHECK(s.p.norm() == 0.0);
    CHECK(s.decrease == 0.0);
  }
}

TEST_CASE("cauchy_step with a kink on the search line") {
  // min p + 3 [p - 0.2]^+ : descends until the kink at 0.2, then ascends.
  L1Qp q;
  q.g = Vec::Constant(1, -1.0);
  q.H = Mat::Zero(1, 1);
  q.J = Mat::Constant(1, 1, 1.0);
  q.c = Vec::Constant(1, -0.2);
  q.penalty = 3.0;
  q.radius = 1.0;
  auto s = cauchy_step(q);
  CHECK(std::abs(s.p[0] - 0.2) <= 1e-14);
}

TEST_CASE("input validation") {
  L1Qp q;
  q.g = v2(1, 0);
  q.H = Mat::Identity(3, 3);
  q.J.resize(0, 2);
  q.c.resize(0);
  CHECK_THROWS_AS(solve_l1qp(q), QpError);
  q.H = Mat::Identity(2, 2);
  q.penalty = 0.0;
  CHECK_THROWS_AS(solve_l1qp(q), QpError);
  q.penalty = 1.0;
  q.radius = -1.0;
  CHECK_THROWS_AS(cauchy_step(q), QpError);
}

TEST_CASE("convex QPs agree with a grid search") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    L1Qp q;
    q.g = v2(U(rng), U(rng));
    Mat B = Mat::NullaryExpr(2, 2, [&] { return U(rng); });
    q.H = B * B.transpose();
    q.J = Mat::NullaryExpr(2, 2, [&] { return U(rng); });
    q.c = v2(U(rng), U(rng));
    q.penalty = 2.0;
    q.radius = 1.0;
    auto s = solve_l1qp(q);
    const int K = 400;
    double best = INFINITY;
    for (int a = 0; a <= K; ++a)
      for (int b = 0; b <= K; ++b) best = std::min(best, q.model(v2(-1 + 2.0 * a / K, -1 + 2.0 * b / K)));
    CHECK(q.model(s.p) <= best + 1e-12);
    // the grid spacing bounds how far below the grid minimum the optimum can be
    CHECK(q.model(s.p) >= best - 0.05);
  }
}

TEST_CASE("random QPs: Cauchy dominance, decrease and multiplier bounds") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool convex = trial % 2 == 0;
    const L1Qp q = random_qp(rng, convex);
    CAPTURE(trial);
    const auto s = solve_l1qp(q);
    const auto c = cauchy_step(q);
    CHECK(s.decrease >= c.decrease - 1e-12 * (1.0 + std::abs(q.model(Vec::Zero(q.n())))));
    CHECK(s.decrease >= 0.0);
    if (s.p.norm() > 0.0) CHECK(s.decrease > 0.0);
    CHECK(s.p.lpNorm<Eigen::Infinity>() <= *q.radius + 1e-10);
    CHECK_FALSE(s.fallback);
    if (q.m() > 0) {
      const Vec v = q.J * s.p + q.c;
      CHECK(((v - s.t).array() <= 1e-8).all());
      CHECK((s.t.array() >= 0.0).all());
      for (int j = 0; j < q.m(); ++j) {
        const double lo = q.is_equality(j) ? -q.penalty : 0.0;
        CHECK(s.lambda[j] >= lo - 1e-9);
        CHECK(s.lambda[j] <= q.penalty + 1e-9);
        if (!q.is_equality(j)) CHECK(s.lambda[j] * (s.t[j] - v[j]) <= 1e-8);
      }
    }
    if (s.message.empty()) CHECK(s.kkt_residual <= 1e-8);
  }
}
