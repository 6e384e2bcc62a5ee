#include <cmath>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "tsd/benchgen.hpp"
#include "tsd/driver.hpp"

using namespace tsd;

namespace {

void check_stage_contract(const RunReport& r, const DriverConfig& c) {
  REQUIRE(!r.stages.empty());
  double prev = INFINITY;
  int at_floor = 0;
  for (const auto& s : r.stages) {
    CHECK(s.mu < prev);
    prev = s.mu;
    at_floor += s.mu == c.schedule.mu_tol;
    if (s.status == MasterStatus::Converged) CHECK(s.theta0 <= c.schedule.c0 * s.mu);
  }
  CHECK(at_floor == 1);
  CHECK(r.stages.back().mu == c.schedule.mu_tol);
  for (const auto& e : r.extrapolation_log)
    CHECK(e.accepted == (e.theta_after <= c.schedule.c0 * e.mu_next));
  int sqp = 0;
  for (const auto& s : r.stages) sqp += s.sqp_iterations;
  CHECK(sqp == r.sqp_iterations);
  long newton = 0;
  for (long n : r.newton_per_subproblem) newton += n;
  CHECK(newton == r.newton_iterations);
}

}  // namespace

TEST_CASE("config validation") {
  DriverConfig c;
  CHECK_NOTHROW(c.validate());
  c.schedule.cmu1 = 1.0;
  CHECK_THROWS_AS(c.validate(), DriverError);
  c = DriverConfig{};
  c.schedule.mu_tol = 1.0;
  CHECK_THROWS_AS(c.validate(), DriverError);
  c = DriverConfig{};
  c.threads = 0;
  CHECK_THROWS_AS(c.validate(), DriverError);
}

TEST_CASE("presolve") {
  SUBCASE("unconstrained quadratic master") {
    QcqpDims d;
    d.N = 1;
    d.ni = 3;
    d.mi = 6;
    d.nc = 3;
    d.m0 = 0;
    const QcqpInstance inst = generate_qcqp(d, 9);
    const TwoStageProblem p = to_problem(inst);
    const MasterState st = presolve(p, Vec::Zero(p.n0));
    const Vec expect = -(inst.c0.array() / inst.Q0.diag.array()).matrix();
    CHECK((st.x - expect).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
  SUBCASE("Example 3.1 returns x0") {
    auto ex = example("3.1", 0.0);
    CHECK(presolve(ex.problem, ex.x0).x[0] == 0.4);
  }
  SUBCASE("quadratic master constraints are satisfied") {
    QcqpDims d;
    d.N = 1;
    d.ni = 3;
    d.mi = 6;
    d.nc = 3;
    for (unsigned seed = 1; seed <= 5; ++seed) {
      const TwoStageProblem p = to_problem(generate_qcqp(d, seed));
      const MasterState st = presolve(p, Vec::Zero(p.n0));
      CHECK(p.master->constraints(st.x).maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("Example 3.1 from y = 0 follows the red map to (2, -2)") {
  auto ex = example("3.1", 0.0);
  DriverConfig c;
  auto r = run(ex.problem, c, ex.x0);
  REQUIRE(r.ok);
  CHECK(std::abs(r.x[0] - 2.0) <= 1e-4);
  CHECK(std::abs(r.states[0].y[0] + 2.0) <= 1e-3);
  CHECK(r.solve_count <= 15);
  CHECK(r.newton_iterations <= 150);
  CHECK(r.extrapolation_accepted > 0);
  check_stage_contract(r, c);
}

TEST_CASE("Example 3.1 from y = -2 follows the blue map to (1, -3)") {
  auto ex = example("3.1", -2.0);
  DriverConfig c;
  auto r = run(ex.problem, c, ex.x0);
  REQUIRE(r.ok);
  CHECK(std::abs(r.x[0] - 1.0) <= 1e-4);
  CHECK(std::abs(r.states[0].y[0] + 3.0) <= 1e-3);
  check_stage_contract(r, c);
}

TEST_CASE("Example 2.1 converges to x = 2") {
  auto ex = example("2.1");
  DriverConfig c;
  auto r = run(ex.problem, c, ex.x0);
  REQUIRE(r.ok);
  CHECK(std::abs(r.x[0] - 2.0) <= 1e-4);
  check_stage_contract(r, c);
}

TEST_CASE("Example 3.2 from (-0.5, 0.5) converges to (-1, 2)") {
  auto ex = example("3.2", 0.5);
  DriverConfig c;
  auto r = run(ex.problem, c, ex.x0);
  REQUIRE(r.ok);
  CHECK(std::abs(r.x[0] + 1.0) <= 1e-3);
  CHECK(std::abs(r.states[0].y[0] - 2.0) <= 1e-3);
}

TEST_CASE("extrapolation off takes the same mu schedule") {
  auto ex = example("3.1", 0.0);
  DriverConfig c;
  c.extrapolation = false;
  auto r = run(ex.problem, c, ex.x0);
  REQUIRE(r.ok);
  CHECK(std::abs(r.x[0] - 2.0) <= 1e-4);
  CHECK(r.extrapolation_log.empty());
  double mu = c.mu0;
  for (const auto& s : r.stages) {
    CHECK(s.mu == mu);
    mu = c.schedule.next(mu);
  }
  check_stage_contract(r, c);
}

TEST_CASE("desk QCQP: determinism and thread-count equivalence") {
  QcqpDims d;
  d.N = 4;
  d.ni = 20;
  d.mi = 40;
  d.nc = 4;
  const TwoStageProblem p = to_problem(generate_qcqp(d, 7));
  DriverConfig c;
  auto a = run(p, c, Vec::Zero(p.n0));
  auto b = run(p, c, Vec::Zero(p.n0));
  REQUIRE(a.ok);
  check_stage_contract(a, c);
  CHECK(a.x == b.x);
  CHECK(a.objective == b.objective);
  REQUIRE(a.sqp_log.size() == b.sqp_log.size());
  for (size_t k = 0; k < a.sqp_log.size(); ++k) {
    CHECK(a.sqp_log[k].phi == b.sqp_log[k].phi);
    CHECK(a.sqp_log[k].rho == b.sqp_log[k].rho);
  }
  c.threads = 3;
  auto t = run(p, c, Vec::Zero(p.n0));
  REQUIRE(t.ok);
  CHECK(std::abs(t.objective - a.objective) <= 1e-8 * (1.0 + std::abs(a.objective)));
  CHECK(a.theta0 <= c.schedule.c0 * c.schedule.mu_tol);
}

TEST_CASE("report and logs") {
  auto ex = example("3.1", 0.0);
  DriverConfig c;
  auto r = run(ex.problem, c, ex.x0);
  const auto j = nlohmann::json::parse(report_to_json(r, c));
  CHECK(j["ok"] == true);
  CHECK(j["x"][0].get<double>() == r.x[0]);
  CHECK(j["totals"]["solve_count"] == r.solve_count);
  CHECK(j["stages"].size() == r.stages.size());
  std::ostringstream s1, s2;
  write_sqp_log_csv(s1, r.sqp_log);
  write_extrapolation_log_csv(s2, r.extrapolation_log);
  std::istringstream in1(s1.str()), in2(s2.str());
  std::string line;
  std::getline(in1, line);
  CHECK(line == "k,mu,phi,theta0,radius,rho,accepted,penalty,newton_iterations");
  int rows = 0;
  while (std::getline(in1, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
    ++rows;
  }
  CHECK(rows == static_cast<int>(r.sqp_log.size()));
  std::getline(in2, line);
  CHECK(line == "l,mu,mu_next,theta_before,theta_after,alpha,accepted,backsolves");
}
