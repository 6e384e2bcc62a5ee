#include <cmath>
#include <sstream>

#include "doctest.h"
#include "tsd/benchgen.hpp"
#include "tsd/driver.hpp"

using namespace tsd;

namespace {

QcqpDims desk() {
  QcqpDims d;
  d.N = 4;
  d.ni = 20;
  d.mi = 40;
  d.nc = 4;
  return d;
}

void check_diag(const SymMatrix& Q, double lo, double hi) {
  CHECK(Q.diag.minCoeff() >= lo);
  CHECK(Q.diag.maxCoeff() <= hi);
}

bool feasible(const SubproblemDef& d, double y, double x) {
  return d.fn->constraints(Vec::Constant(1, y), Vec::Constant(1, x)).maxCoeff() <= 0.0;
}

std::vector<CurveRow> branch_rows(const std::vector<CurveRow>& rows, int b) {
  std::vector<CurveRow> out;
  for (const auto& r : rows)
    if (r.branch == b && !r.refined) out.push_back(r);
  return out;
}

}  // namespace

TEST_CASE("generator ranges and determinism") {
  QcqpDims d;
  d.N = 1;
  d.n0 = 10;
  d.ni = 250;
  d.mi = 500;
  d.nc = 10;
  const QcqpInstance a = generate_qcqp(d, 3);
  CHECK(a.subproblems.size() == 1);
  CHECK(a.subproblems[0].Q.n == 250);
  CHECK(a.subproblems[0].constraints.size() == 500);
  CHECK(a.subproblems[0].projection.size() == 10);
  check_diag(a.Q0, 0.1, 1.0);
  check_diag(a.subproblems[0].Q, -1.0, 1.0);
  CHECK(a.subproblems[0].lower == -50.0);
  CHECK(a.subproblems[0].upper == 50.0);
  CHECK(a.subproblems[0].rho == 100.0);
  for (const auto& q : a.subproblems[0].constraints) {
    CHECK(q.r >= -2.0);
    CHECK(q.r <= -1.0);
    for (const auto& t : q.Q.offdiag) CHECK(std::abs(t.value) <= 1.0);
  }
  CHECK(instance_to_json(a) == instance_to_json(generate_qcqp(d, 3)));
  CHECK(instance_to_json(a) != instance_to_json(generate_qcqp(d, 4)));
}

TEST_CASE("corpus feasible sets and minimizers") {
  SUBCASE("Example 3.1 at x = 0.5") {
    const auto ex = example("3.1");
    const auto& d = ex.problem.subproblems[0];
    for (double y : {-2.5, -2.25, -2.0, -0.5, 0.0, 3.0}) CHECK(feasible(d, y, 0.5));
    for (double y : {-2.6, -1.9, -1.0, -0.6}) CHECK_FALSE(feasible(d, y, 0.5));
  }
  SUBCASE("Example 3.2 at x = -1") {
    const auto ex = example("3.2");
    const auto& d = ex.problem.subproblems[0];
    SubsolverOptions o;
    o.tolerance = 1e-12;
    for (double y0 : {-0.5, 1.5}) {
      SubproblemState st = cold_start(d, Vec::Constant(1, -1.0), 1e-8);
      st.y[0] = y0;
      const auto r = solve_subproblem(d, Vec::Constant(1, -1.0), 1e-8, st, o);
      REQUIRE(r.status == SolveStatus::Converged);
      CHECK(std::abs(r.state.y[0] - (y0 < 0 ? -1.0 : 2.0)) <= 1e-6);
    }
  }
  CHECK(example_corpus().size() == 3);
  CHECK(canonical_example_id("ex_bilinear") == "3.1");
  CHECK(canonical_example_id("nope").empty());
}

TEST_CASE("elastic slacks vanish at desk-scale optima") {
  const QcqpInstance inst = generate_qcqp(desk(), 7);
  const TwoStageProblem p = to_problem(inst);
  const RunReport r = run(p, DriverConfig{}, Vec::Zero(p.n0));
  REQUIRE(r.ok);
  const int ni = inst.dims.ni, nc = inst.dims.nc;
  for (const auto& st : r.states) CHECK(st.y.segment(ni, 2 * nc).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("instance JSON round trip") {
  QcqpDims d = desk();
  d.N = 2;
  const QcqpInstance a = generate_qcqp(d, 11);
  const std::string text = instance_to_json(a);
  const InstanceFile f = parse_instance(text);
  REQUIRE(f.qcqp);
  CHECK(instance_to_json(*f.qcqp) == text);
  const NamedExample ex = instantiate(f);
  CHECK(ex.problem.n0 == a.dims.nc);
  CHECK(ex.problem.num_subproblems() == 2);
  const Vec x = Vec::LinSpaced(ex.problem.n0, -0.3, 0.4);
  const TwoStageProblem q = to_problem(a);
  CHECK(ex.problem.master->objective(x) == q.master->objective(x));
  const auto& s0 = ex.problem.subproblems[1];
  const Vec y = Vec::LinSpaced(s0.n, -1.0, 1.0);
  CHECK(s0.fn->objective(y, x) == q.subproblems[1].fn->objective(y, x));
  CHECK(s0.fn->constraints(y, x) == q.subproblems[1].fn->constraints(y, x));
}

TEST_CASE("example files") {
  const InstanceFile f = parse_instance(R"({"example": "ex_bilinear", "y0": -2})");
  CHECK(f.example_id == "3.1");
  REQUIRE(f.y0);
  CHECK(*f.y0 == -2.0);
  const NamedExample ex = instantiate(f);
  REQUIRE(ex.problem.subproblems[0].y_start);
  CHECK((*ex.problem.subproblems[0].y_start)[0] == -2.0);
  CHECK(instantiate(f, 0.0).problem.subproblems[0].y_start.value()[0] == 0.0);
  CHECK(parse_instance(example_to_json("lp")).example_id == "2.1");
}

TEST_CASE("triplet matrices") {
  const std::string text = R"({
    "dims": {"N": 1, "n0": 2, "ni": 2, "mi": 1, "nc": 1, "m0": 0},
    "seed": 0,
    "master": {"Q": {"triplets": [[0, 0, 1.0], [1, 1, 2.0]]}, "c": [0, 0], "constraints": []},
    "subproblems": [{
      "projection": [1],
      "Q": {"diag": [1, 1], "triplets": [[0, 1, 0.5], [1, 0, 0.5]]},
      "c": [0, 0],
      "constraints": [{"Q": {"diag": [0, 0]}, "c": [1, 0], "b": [1], "r": -1}]
    }]
  })";
  const InstanceFile f = parse_instance(text);
  REQUIRE(f.qcqp);
  CHECK(f.qcqp->Q0.diag[1] == 2.0);
  CHECK(f.qcqp->subproblems[0].Q.offdiag.size() == 2);
  CHECK(f.qcqp->subproblems[0].rho == 100.0);
  CHECK(f.qcqp->subproblems[0].projection[0] == 1);
}

TEST_CASE("malformed instances name the failing field") {
  auto message = [](const std::string& text) {
    try {
      parse_instance(text);
    } catch (const InstanceFormatError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("{\"dims\": ").find("malformed JSON") != std::string::npos);
  CHECK(message("{\"dims\": ").find("line 1") != std::string::npos);
  CHECK(message("[1]").find("$") != std::string::npos);
  CHECK(message(R"({"seed": 1})").find("$: missing field \"dims\"") != std::string::npos);
  CHECK(message(R"({"example": "9.9"})").find("$.example") != std::string::npos);

  QcqpDims d;
  d.N = 1;
  d.ni = 3;
  d.mi = 2;
  d.nc = 2;
  d.m0 = 1;
  auto j = instance_to_json(generate_qcqp(d, 1));
  auto broken = j;
  broken.replace(broken.find("\"rho\":100.0"), 11, "\"rho\":-1.0");
  CHECK(message(broken).find("$.subproblems[0].rho") != std::string::npos);
  broken = j;
  broken.replace(broken.find("\"projection\":[0,1]"), 18, "\"projection\":[0,0]");
  CHECK(message(broken).find("$.subproblems[0].projection") != std::string::npos);
  broken = j;
  broken.replace(broken.find("\"ni\":3"), 6, "\"ni\":4");
  CHECK(message(broken).find("$.subproblems[0].Q") != std::string::npos);
  CHECK_THROWS_AS(load_instance("/nonexistent/instance.json"), InstanceFormatError);
}

TEST_CASE("curve spec validation") {
  CurveSpec s;
  s.example_id = "2.1";
  s.mu = {1.0};
  CHECK_NOTHROW(s.validate());
  s.count = 1;
  CHECK_THROWS_AS(s.validate(), ModelError);
  s.count = 5;
  s.mu = {0.0};
  CHECK_THROWS_AS(s.validate(), ModelError);
  s.mu = {1.0};
  s.example_id = "x";
  CHECK_THROWS_AS(s.validate(), ModelError);
}

TEST_CASE("Example 2.1 solution smoothing matches the closed form") {
  CurveSpec s;
  s.example_id = "2.1";
  s.x_min = 0.1;
  s.x_max = 2.0;
  s.count = 200;
  s.mu = {1.0};
  s.quantity = CurveQuantity::SolutionSmoothing;
  const auto rows = emit_curves(s);
  REQUIRE(rows.size() == 200);
  for (const auto& r : rows) {
    REQUIRE(r.converged);
    CHECK(r.branch == 0);
    const double f = 1.0 + std::sqrt(2.0) * r.x / 2.0 - std::sqrt(1.0 + 2.0 * r.x * r.x);
    CHECK(std::abs(r.value - f) <= 1e-6);
  }
  std::ostringstream os;
  write_curves_csv(os, rows);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "example,branch,mu,x,value,y,converged");
  std::getline(in, line);
  CHECK(line.rfind("2.1,0,1,0.10000000000000001,", 0) == 0);
}

TEST_CASE("Example 2.1 objective smoothing is convex") {
  CurveSpec s;
  s.example_id = "2.1";
  s.x_min = 0.1;
  s.x_max = 2.0;
  s.count = 200;
  s.mu = {1.0};
  const auto rows = emit_curves(s);
  REQUIRE(rows.size() == 200);
  for (size_t k = 1; k + 1 < rows.size(); ++k)
    CHECK(rows[k - 1].value - 2 * rows[k].value + rows[k + 1].value >= -1e-8);
}

TEST_CASE("Example 3.1 branches") {
  CurveSpec s;
  s.example_id = "3.1";
  s.x_min = 0.0;
  s.x_max = 2.0;
  s.count = 201;
  s.mu = {1.0, 0.5, 0.1};
  const auto rows = emit_curves(s);
  for (double mu : s.mu) {
    CAPTURE(mu);
    std::vector<CurveRow> lower;
    for (const auto& r : rows)
      if (r.mu == mu && r.converged && r.x == 0.0 && r.y < -1.0) lower = branch_rows(rows, r.branch);
    REQUIRE(!lower.empty());
    double v05 = NAN, v99 = NAN;
    bool lost = false;
    for (const auto& r : lower) {
      if (r.mu != mu) continue;
      if (std::abs(r.x - 0.5) < 1e-12) v05 = r.value;
      if (std::abs(r.x - 0.99) < 1e-12) v99 = r.value;
      if (r.converged) {
        CHECK(r.y >= -2.0 - r.x);
        CHECK(r.y <= -1.0 - 2.0 * r.x);
      } else {
        lost = true;
        CHECK(r.x >= 1.0);
      }
    }
    CHECK(v99 > v05);
    CHECK(lost);
  }
}

TEST_CASE("Example 3.2 interior branch and fold") {
  CurveSpec s;
  s.example_id = "3.2";
  s.x_min = -1.0;
  s.x_max = 1.0;
  s.count = 201;
  s.mu = {0.005};
  const auto rows = emit_curves(s);
  bool interior = false, fold = false;
  for (const auto& r : rows) {
    if (r.converged && r.x > 0.05 && std::abs(r.y) <= 0.05) interior = true;
    if (r.refined && r.degenerate && std::abs(r.x) <= 0.05) fold = true;
    if (r.converged && !r.refined) CHECK(r.degenerate == (r.sigma_min <= 1e-8));
  }
  CHECK(interior);
  CHECK(fold);
  for (const auto& r : rows)
    if (r.converged && r.x > 0.05) CHECK((std::abs(r.y) <= 0.05 || r.y < -0.9 || r.y > 1.9));
}
