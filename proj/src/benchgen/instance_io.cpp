#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tsd/benchgen.hpp"

namespace tsd {

namespace {

using nlohmann::json;

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json sym_json(const SymMatrix& Q) {
  json j;
  j["n"] = Q.n;
  j["diag"] = vec_json(Q.diag);
  if (!Q.offdiag.empty()) {
    json t = json::array();
    for (const auto& e : Q.offdiag) t.push_back({e.row, e.col, e.value});
    j["triplets"] = t;
  }
  return j;
}

json constraint_json(const QuadConstraint& q) {
  json j;
  j["Q"] = sym_json(q.Q);
  j["c"] = vec_json(q.c);
  if (q.b.size()) j["b"] = vec_json(q.b);
  j["r"] = q.r;
  return j;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw InstanceFormatError(path + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path, std::string("missing field \"") + key + "\"");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& path, int lo = 0) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  const auto v = j.get<long long>();
  if (v < lo || v > 100000000) fail(path, "integer out of range");
  return static_cast<int>(v);
}

Vec vector_of(const json& j, int n, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  if (static_cast<int>(j.size()) != n)
    fail(path, "expected " + std::to_string(n) + " entries, found " + std::to_string(j.size()));
  Vec v(n);
  for (int k = 0; k < n; ++k) v[k] = number(j[k], path + "[" + std::to_string(k) + "]");
  return v;
}

SymMatrix sym_of(const json& j, int n, const std::string& path) {
  if (!j.is_object()) fail(path, "expected a matrix object");
  if (j.contains("n") && integer(j["n"], path + ".n") != n)
    fail(path + ".n", "expected " + std::to_string(n));
  if (!j.contains("diag") && !j.contains("triplets"))
    fail(path, "matrix needs \"diag\" or \"triplets\"");
  SymMatrix Q;
  Q.n = n;
  Q.diag = j.contains("diag") ? vector_of(j["diag"], n, path + ".diag") : Vec(Vec::Zero(n));
  if (j.contains("triplets")) {
    const json& t = j["triplets"];
    const std::string tp = path + ".triplets";
    if (!t.is_array()) fail(tp, "expected an array");
    std::map<std::pair<int, int>, double> seen;
    for (size_t k = 0; k < t.size(); ++k) {
      const std::string ep = tp + "[" + std::to_string(k) + "]";
      if (!t[k].is_array() || t[k].size() != 3) fail(ep, "expected [i, j, v]");
      const int a = integer(t[k][0], ep + "[0]"), b = integer(t[k][1], ep + "[1]");
      const double v = number(t[k][2], ep + "[2]");
      if (a >= n || b >= n) fail(ep, "index out of range");
      if (a == b) {
        Q.diag[a] += v;
        continue;
      }
      if (!seen.emplace(std::make_pair(a, b), v).second) fail(ep, "duplicate entry");
      Q.offdiag.push_back({a, b, v});
    }
    for (const auto& e : Q.offdiag) {
      auto it = seen.find({e.col, e.row});
      if (it == seen.end() || it->second != e.value) fail(tp, "matrix is not symmetric at (" + std::to_string(e.row) + ", " +
                                  std::to_string(e.col) + ")");
    }
  }
  return Q;
}

QuadConstraint constraint_of(const json& j, int n, int nb, const std::string& path) {
  QuadConstraint q;
  q.Q = sym_of(field(j, "Q", path), n, path + ".Q");
  q.c = vector_of(field(j, "c", path), n, path + ".c");
  if (nb) q.b = vector_of(field(j, "b", path), nb, path + ".b");
  q.r = number(field(j, "r", path), path + ".r");
  return q;
}

QcqpInstance qcqp_of(const json& j) {
  QcqpInstance inst;
  const json& d = field(j, "dims", "$");
  QcqpDims& D = inst.dims;
  D.N = integer(field(d, "N", "$.dims"), "$.dims.N", 0);
  D.n0 = integer(field(d, "n0", "$.dims"), "$.dims.n0", 1);
  D.ni = integer(field(d, "ni", "$.dims"), "$.dims.ni", 1);
  D.mi = integer(field(d, "mi", "$.dims"), "$.dims.mi", 0);
  D.nc = integer(field(d, "nc", "$.dims"), "$.dims.nc", 0);
  D.m0 = integer(field(d, "m0", "$.dims"), "$.dims.m0", 0);
  if (d.contains("convex")) {
    if (!d["convex"].is_boolean()) fail("$.dims.convex", "expected a boolean");
    D.convex = d["convex"].get<bool>();
  }
  if (D.nc > D.n0) fail("$.dims", "nc must not exceed n0");
  const json& s = field(j, "seed", "$");
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
    fail("$.seed", "expected a nonnegative integer");
  inst.seed = s.get<std::uint64_t>();

  const json& m = field(j, "master", "$");
  inst.Q0 = sym_of(field(m, "Q", "$.master"), D.n0, "$.master.Q");
  inst.c0 = vector_of(field(m, "c", "$.master"), D.n0, "$.master.c");
  const json& mc = field(m, "constraints", "$.master");
  if (!mc.is_array() || static_cast<int>(mc.size()) != D.m0)
    fail("$.master.constraints", "expected " + std::to_string(D.m0) + " constraints");
  for (int k = 0; k < D.m0; ++k)
    inst.master_constraints.push_back(
        constraint_of(mc[k], D.n0, 0, "$.master.constraints[" + std::to_string(k) + "]"));

  const json& subs = field(j, "subproblems", "$");
  if (!subs.is_array() || static_cast<int>(subs.size()) != D.N)
    fail("$.subproblems", "expected " + std::to_string(D.N) + " subproblems");
  for (int i = 0; i < D.N; ++i) {
    const std::string p = "$.subproblems[" + std::to_string(i) + "]";
    const json& sj = subs[i];
    QcqpSubproblem sp;
    const json& pr = field(sj, "projection", p);
    if (!pr.is_array() || static_cast<int>(pr.size()) != D.nc)
      fail(p + ".projection", "expected " + std::to_string(D.nc) + " indices");
    std::set<int> distinct;
    for (int k = 0; k < D.nc; ++k) {
      const int idx = integer(pr[k], p + ".projection[" + std::to_string(k) + "]");
      if (idx >= D.n0) fail(p + ".projection", "index out of range");
      if (!distinct.insert(idx).second) fail(p + ".projection", "indices must be distinct");
      sp.projection.push_back(idx);
    }
    sp.Q = sym_of(field(sj, "Q", p), D.ni, p + ".Q");
    sp.c = vector_of(field(sj, "c", p), D.ni, p + ".c");
    if (sj.contains("lower")) sp.lower = number(sj["lower"], p + ".lower");
    if (sj.contains("upper")) sp.upper = number(sj["upper"], p + ".upper");
    if (!(sp.lower < sp.upper)) fail(p, "lower must be below upper");
    if (sj.contains("rho")) sp.rho = number(sj["rho"], p + ".rho");
    if (!(sp.rho > 0.0)) fail(p + ".rho", "must be positive");
    const json& cs = field(sj, "constraints", p);
    if (!cs.is_array() || static_cast<int>(cs.size()) != D.mi)
      fail(p + ".constraints", "expected " + std::to_string(D.mi) + " constraints");
    for (int k = 0; k < D.mi; ++k)
      sp.constraints.push_back(
          constraint_of(cs[k], D.ni, D.nc, p + ".constraints[" + std::to_string(k) + "]"));
    inst.subproblems.push_back(std::move(sp));
  }
  return inst;
}

}  // namespace

std::string instance_to_json(const QcqpInstance& inst) {
  json j;
  const QcqpDims& d = inst.dims;
  j["dims"] = {{"N", d.N}, {"n0", d.n0}, {"ni", d.ni}, {"mi", d.mi},
               {"nc", d.nc}, {"m0", d.m0}, {"convex", d.convex}};
  j["seed"] = inst.seed;
  json m;
  m["Q"] = sym_json(inst.Q0);
  m["c"] = vec_json(inst.c0);
  m["constraints"] = json::array();
  for (const auto& q : inst.master_constraints) m["constraints"].push_back(constraint_json(q));
  j["master"] = m;
  json subs = json::array();
  for (const auto& sp : inst.subproblems) {
    json s;
    s["projection"] = sp.projection;
    s["Q"] = sym_json(sp.Q);
    s["c"] = vec_json(sp.c);
    s["lower"] = sp.lower;
    s["upper"] = sp.upper;
    s["rho"] = sp.rho;
    s["constraints"] = json::array();
    for (const auto& q : sp.constraints) s["constraints"].push_back(constraint_json(q));
    subs.push_back(s);
  }
  j["subproblems"] = subs;
  return j.dump();
}

std::string example_to_json(std::string_view id) {
  const std::string c = canonical_example_id(id);
  if (c.empty()) throw ModelError("unknown example id: " + std::string(id));
  return json{{"example", c}}.dump();
}

InstanceFile parse_instance(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InstanceFormatError(std::string("malformed JSON: ") + e.what());
  }
  InstanceFile f;
  if (!j.is_object()) fail("$", "expected an object");
  if (j.contains("example")) {
    if (!j["example"].is_string()) fail("$.example", "expected a string");
    f.example_id = canonical_example_id(j["example"].get<std::string>());
    if (f.example_id.empty()) fail("$.example", "unknown example id");
    if (j.contains("y0")) f.y0 = number(j["y0"], "$.y0");
    return f;
  }
  f.qcqp = qcqp_of(j);
  return f;
}

InstanceFile load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InstanceFormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_instance(ss.str());
}

NamedExample instantiate(const InstanceFile& f, std::optional<double> y0) {
  if (f.qcqp) {
    NamedExample ex;
    ex.id = "qcqp";
    ex.name = "qcqp-" + std::to_string(f.qcqp->seed);
    ex.problem = to_problem(*f.qcqp);
    ex.x0 = Vec::Zero(ex.problem.n0);
    return ex;
  }
  return example(f.example_id, y0 ? y0 : f.y0);
}

}  // namespace tsd
