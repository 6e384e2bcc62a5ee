#include <cmath>

#include "tsd/benchgen.hpp"

namespace tsd {

namespace {

Mat mat2(double a, double b, double c, double d) {
  Mat M(2, 2);
  M << a, b, c, d;
  return M;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

SubproblemDef scalar_def(std::shared_ptr<const SubproblemFunctions> fn, int m, double lo,
                         double hi, std::optional<double> y0) {
  SubproblemDef d;
  d.n = 1;
  d.m = m;
  d.projection = {0};
  d.lower = Vec::Constant(1, lo);
  d.upper = Vec::Constant(1, hi);
  if (y0) d.y_start = Vec::Constant(1, *y0);
  d.fn = std::move(fn);
  return d;
}

// min (3/2)sqrt2 y11 - (1/2)sqrt2 y12  s.t. y11 + y12 = x, y >= 0.
// y12 is eliminated: variables z = (y11, xt).
NamedExample make_lp(std::optional<double> y0) {
  auto fn = std::make_shared<CallableSubproblem>();
  const double r2 = std::sqrt(2.0);
  fn->f = [r2](const Vec& y, const Vec& xt) { return 2.0 * r2 * y[0] - 0.5 * r2 * xt[0]; };
  fn->grad = [r2](const Vec&, const Vec&) { return vec2(2.0 * r2, -0.5 * r2); };
  fn->hess = [](const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  fn->c = [](const Vec& y, const Vec& xt) { return vec2(-y[0], y[0] - xt[0]); };
  fn->jac = [](const Vec&, const Vec&) { return mat2(-1.0, 0.0, 1.0, -1.0); };
  fn->chess = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  NamedExample ex;
  ex.id = "2.1";
  ex.name = "lp";
  ex.problem.n0 = 1;
  ex.problem.m0 = 2;
  ex.problem.master = bound_master(0.1, 2.0);
  ex.problem.subproblems.push_back(scalar_def(fn, 2, -INFINITY, INFINITY, y0));
  ex.x0 = Vec::Constant(1, 1.0);
  return ex;
}

// min y  s.t. (y+1+2x)(y+x) >= 0, y >= -2-x.
NamedExample make_bilinear(std::optional<double> y0) {
  auto fn = std::make_shared<CallableSubproblem>();
  fn->f = [](const Vec& y, const Vec&) { return y[0]; };
  fn->grad = [](const Vec&, const Vec&) { return vec2(1.0, 0.0); };
  fn->hess = [](const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  fn->c = [](const Vec& y, const Vec& xt) {
    const double a = y[0], x = xt[0];
    return vec2(-(a + 1.0 + 2.0 * x) * (a + x), -a - 2.0 - x);
  };
  fn->jac = [](const Vec& y, const Vec& xt) {
    const double a = y[0], x = xt[0];
    return mat2(-(2.0 * a + 3.0 * x + 1.0), -(3.0 * a + 4.0 * x + 1.0), -1.0, -1.0);
  };
  fn->chess = [](const Vec&, const Vec&, const Vec& w) {
    return mat2(-2.0 * w[0], -3.0 * w[0], -3.0 * w[0], -4.0 * w[0]);
  };
  NamedExample ex;
  ex.id = "3.1";
  ex.name = "bilinear";
  ex.problem.n0 = 1;
  ex.problem.m0 = 2;
  ex.problem.master = bound_master(0.0, 2.0);
  ex.problem.subproblems.push_back(scalar_def(fn, 2, -INFINITY, INFINITY, y0));
  ex.x0 = Vec::Constant(1, 0.4);
  return ex;
}

// min x y^2  s.t. -1 <= y <= 2.
NamedExample make_curvature(std::optional<double> y0) {
  auto fn = std::make_shared<CallableSubproblem>();
  fn->f = [](const Vec& y, const Vec& xt) { return xt[0] * y[0] * y[0]; };
  fn->grad = [](const Vec& y, const Vec& xt) { return vec2(2.0 * xt[0] * y[0], y[0] * y[0]); };
  fn->hess = [](const Vec& y, const Vec& xt) {
    return mat2(2.0 * xt[0], 2.0 * y[0], 2.0 * y[0], 0.0);
  };
  fn->c = [](const Vec& y, const Vec&) { return vec2(-1.0 - y[0], y[0] - 2.0); };
  fn->jac = [](const Vec&, const Vec&) { return mat2(-1.0, 0.0, 1.0, 0.0); };
  fn->chess = [](const Vec&, const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  NamedExample ex;
  ex.id = "3.2";
  ex.name = "curvature";
  ex.problem.n0 = 1;
  ex.problem.m0 = 2;
  ex.problem.master = bound_master(-1.0, 1.0);
  ex.problem.subproblems.push_back(scalar_def(fn, 2, -1.0, 2.0, y0));
  ex.x0 = Vec::Constant(1, -0.5);
  return ex;
}

}  // namespace

std::shared_ptr<const MasterFunctions> bound_master(double lo, double hi) {
  auto m = std::make_shared<CallableMaster>();
  m->n = 1;
  m->m = 2;
  m->c = [lo, hi](const Vec& x) { return vec2(x[0] - hi, lo - x[0]); };
  m->jac = [](const Vec&) {
    Mat J(2, 1);
    J << 1.0, -1.0;
    return J;
  };
  return m;
}

std::string canonical_example_id(std::string_view id) {
  if (id == "2.1" || id == "lp" || id == "ex_lp") return "2.1";
  if (id == "3.1" || id == "bilinear" || id == "ex_bilinear") return "3.1";
  if (id == "3.2" || id == "curvature" || id == "ex_curvature") return "3.2";
  return {};
}

NamedExample example(std::string_view id, std::optional<double> y0) {
  const std::string c = canonical_example_id(id);
  if (c == "2.1") return make_lp(y0);
  if (c == "3.1") return make_bilinear(y0);
  if (c == "3.2") return make_curvature(y0);
  throw ModelError("unknown example id: " + std::string(id));
}

std::vector<NamedExample> example_corpus() {
  return {make_lp(std::nullopt), make_bilinear(std::nullopt), make_curvature(std::nullopt)};
}

}  // namespace tsd
